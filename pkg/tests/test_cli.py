import json
import subprocess
import sys

import pytest

from seqdp.cli import run_subcommand


def run(capsys, *argv):
    code = run_subcommand(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_zero_trials_is_a_config_error(capsys):
    code, out, err = run(capsys, "sprt", "--trials", "0")
    assert code == 2 and out == ""
    msg = json.loads(err)
    assert msg["error"] == "config" and msg["key"] == "trials"


def test_bad_probability_is_a_config_error(capsys):
    code, _, err = run(capsys, "dp-sprt", "--alpha", "1.5")
    assert code == 2 and json.loads(err)["key"] == "alpha"
    code, _, err = run(capsys, "dp-sprt", "--epsilon", "abc")
    assert code == 2 and json.loads(err)["key"] == "epsilon"


def test_single_dp_run_hides_internals(capsys):
    code, out, _ = run(capsys, "dp-sprt", "--seed", "3")
    doc = json.loads(out)
    assert code == 0
    assert set(doc["result"]["outcome"]) == {"tau", "decision", "capped"}
    assert doc["provenance"]["seed"] == 3 and len(doc["provenance"]["config_sha256"]) == 64
    assert doc["result"]["bounds"]["fp_bound"] == pytest.approx(0.31894142136999512)
    code, out, _ = run(capsys, "dp-sprt", "--seed", "3", "--unsafe-debug")
    assert "delta_used" in json.loads(out)["result"]["outcome"]


def test_reruns_are_byte_identical(capsys, tmp_path):
    path = tmp_path / "r.json"
    outputs = []
    for _ in range(2):
        assert run(capsys, "dp-sprt", "--trials", "2000", "--seed", "11", "--out", str(path))[0] == 0
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]


def test_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("SEQDP_SEED", "17")
    _, out, _ = run(capsys, "sprt")
    assert json.loads(out)["provenance"]["seed"] == 17


def test_config_file_and_flag_precedence(capsys, tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[common]\nseed = 5\nalpha = 0.1\n\n[sprt]\nbeta = 0.1\nmax-steps = 300\n")
    _, out, _ = run(capsys, "sprt", "--config", str(ini), "--alpha", "0.02")
    cfg = json.loads(out)["config"]
    assert (cfg["seed"], cfg["alpha"], cfg["beta"], cfg["max_steps"]) == (5, 0.02, 0.1, 300)


def test_unknown_config_key(capsys, tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[sprt]\nbogus = 1\n")
    code, _, err = run(capsys, "sprt", "--config", str(ini))
    assert code == 2 and json.loads(err)["key"] == "bogus"


def test_counterexample_sprt(capsys):
    code, out, _ = run(capsys, "counterexample", "sprt", "--max-steps", "20000")
    res = json.loads(out)["result"]
    assert code == 0
    assert res["stream_a"] == {"tau": 8, "decision": 1, "capped": False}
    assert res["stream_b"]["capped"] and res["stream_b"]["decision"] is None
    assert res["differing_position"] == 8


def test_counterexample_serm(capsys):
    _, out, _ = run(capsys, "counterexample", "serm", "--alpha", "0.2", "--beta", "0.2")
    res = json.loads(out)["result"]
    assert res["stream_a"]["tau"] == res["stream_b"]["tau"] == 312
    assert res["stream_a"]["selected"] != res["stream_b"]["selected"]


def test_audit_rr(capsys):
    code, out, _ = run(capsys, "audit", "--algorithm", "rr", "--epsilon", "1", "--trials", "20000",
                       "--bootstrap-reps", "20", "--delta", "0.01")
    res = json.loads(out)["result"]
    assert code == 0
    assert abs(res["report"]["epsilon_hat"] - 1.0) < 0.1
    assert res["epsilon_delta"] <= res["report"]["epsilon_hat"]


def test_audit_conditional_plain_sprt(capsys):
    _, out, _ = run(capsys, "audit", "--mode", "conditional", "--algorithm", "sprt", "--trials", "1000",
                    "--tau-cap", "30", "--bootstrap-reps", "0")
    rep = json.loads(out)["result"]["report"]
    assert rep["divergent"]
    assert {c["tau_bin"] for c in rep["cells"]} == {8, ">30"}


def test_serm_finite_table(capsys):
    code, out, _ = run(capsys, "dp-serm", "--table", "1,0,0;0,1,0;0,0,1", "--pmf", "0.5,0.3,0.2",
                       "--epsilon", "1", "--metric-scale", "200")
    res = json.loads(out)["result"]
    assert code == 0 and res["tau"] > 311 and res["selected"] in (0, 1, 2)
    assert res["laplace_rate"] == 200
    assert res["privacy"]["level"] >= 1


def test_serm_needs_data(capsys):
    code, _, err = run(capsys, "serm")
    assert code == 2 and json.loads(err)["key"] == "table"


def test_serm_on_dataset(capsys, wdbc_csv):
    code, out, _ = run(capsys, "serm", "--dataset", str(wdbc_csv), "--label-column", "1", "--id-column", "0",
                       "--label-map", "M=1,B=0")
    res = json.loads(out)["result"]
    assert code == 0 and res["tau"] == 312 and res["train_acc"] > 0.9


def test_missing_dataset(capsys):
    code, _, err = run(capsys, "bench", "--dataset", "/nonexistent.csv")
    assert code == 2 and json.loads(err)["key"] == "dataset"


def test_bench_output_shape(capsys, tmp_path, wdbc_csv):
    out = tmp_path / "bench.csv"
    code, _, _ = run(capsys, "bench", "--dataset", str(wdbc_csv), "--label-column", "1", "--id-column", "0",
                     "--label-map", "M=1,B=0", "--eps", "0.1,0.5", "--repetitions", "2", "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# tool=seqdp")
    body = [l for l in lines if not l.startswith("#")]
    assert body[0] == "metric,0.1,0.5"
    assert [l.split(",")[0] for l in body[1:]] == [
        "train_acc", "test_acc", "private_train_acc", "private_test_acc", "stopping_time",
    ]
    reps = [l for l in out.with_suffix(".reps.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(reps) == 1 + 2 * 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "seqdp", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("seqdp ")
