"""Command-line experiment runner.

Every key can come from an INI config file (``[common]`` plus one section
per subcommand) or from a flag of the same name with dashes; flags win.
Outputs are JSON reports or CSV tables carrying a provenance header.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from seqdp import __version__
from seqdp.audit import (
    AuditConfig,
    empirical_epsilon_conditional,
    empirical_epsilon_weak,
    monte_carlo_error_rates,
    monte_carlo_pac_rate,
    randomized_response_observer,
    sprt_observer,
    sprt_runner,
)
from seqdp.bench import METRICS, run_bench, standardize
from seqdp.counterexamples import counterexample_serm, counterexample_sprt, sprt_run_length
from seqdp.serm import (
    FiniteTable,
    LinearSoftmax,
    SermConfig,
    dp_serm_run,
    lambda_estimate,
    serm_run,
    dp_serm_privacy_level,
)
from seqdp.sprt import DpSprtConfig, SprtConfig, dp_sprt_run, sprt_run, dp_sprt_bounds
from seqdp.streams import Dataset, IidBernoulli, IidFinite, StreamSource, load_csv

SEED_ENV = "SEQDP_SEED"


class ConfigError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _table(text: str) -> list[list[float]]:
    return [_floats(row) for row in str(text).split(";") if row.strip()]


def _label_map(text: str) -> dict[str, int]:
    out = {}
    for item in str(text).split(","):
        if item.strip():
            k, _, v = item.partition("=")
            out[k.strip()] = int(v)
    return out


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    return None if text in (None, "", "none") else int(text)


# key -> (parser, default, check or None)
_prob = (lambda v: 0 < v < 1, "must lie in (0, 1)")
_pos = (lambda v: v > 0, "must be positive")
_atleast1 = (lambda v: v >= 1, "must be >= 1")

KEYS: dict[str, tuple[Callable, Any, tuple | None]] = {
    "seed": (int, None, None),
    "out": (str, None, None),
    "p0": (float, 0.4, _prob),
    "p1": (float, 0.6, _prob),
    "p": (float, None, (lambda v: 0 <= v <= 1, "must lie in [0, 1]")),
    "alpha": (float, 0.05, _prob),
    "beta": (float, 0.05, _prob),
    "max_steps": (int, 10**6, _atleast1),
    "trials": (int, 1, _atleast1),
    "epsilon": (float, 0.5, _pos),
    "epsilon_prime": (float, 1.0, _pos),
    "scale_mode": (str, "analysis", (lambda v: v in ("analysis", "sensitivity"), "must be analysis or sensitivity")),
    "metric_scale": (float, 1000.0, _pos),
    "table": (_table, None, None),
    "pmf": (_floats, None, None),
    "dataset": (str, None, None),
    "test_dataset": (str, None, None),
    "label_column": (int, -1, None),
    "id_column": (_opt_int, None, None),
    "label_map": (_label_map, None, None),
    "header": (_bool, False, None),
    "delimiter": (str, ",", None),
    "mode": (str, "weak", (lambda v: v in ("weak", "conditional"), "must be weak or conditional")),
    "algorithm": (str, "dp-sprt", (lambda v: v in ("sprt", "dp-sprt", "rr"), "must be sprt, dp-sprt or rr")),
    "position": (int, 1, _atleast1),
    "value_a": (int, 1, None),
    "value_b": (int, 0, None),
    "tau_cap": (int, 200, _atleast1),
    "smoothing": (float, 1.0, _pos),
    "bootstrap_reps": (int, 200, (lambda v: v >= 0, "must be >= 0")),
    "delta": (float, None, (lambda v: 0 <= v < 1, "must lie in [0, 1)")),
    "eps": (_floats, [0.1, 0.2, 0.5], (lambda v: len(v) > 0 and all(e > 0 for e in v), "must be positive values")),
    "repetitions": (int, 10, _atleast1),
    "min_test": (int, 50, (lambda v: v >= 0, "must be >= 0")),
}

COMMANDS: dict[str, tuple[str, ...]] = {
    "sprt": ("p0", "p1", "alpha", "beta", "max_steps", "p", "trials"),
    "dp-sprt": ("p0", "p1", "alpha", "beta", "max_steps", "p", "trials", "epsilon", "epsilon_prime", "scale_mode"),
    "serm": (
        "alpha", "beta", "max_steps", "trials", "table", "pmf", "dataset", "label_column", "id_column",
        "label_map", "header", "delimiter",
    ),
    "dp-serm": (
        "alpha", "beta", "max_steps", "trials", "table", "pmf", "dataset", "label_column", "id_column",
        "label_map", "header", "delimiter", "epsilon", "metric_scale",
    ),
    "audit": (
        "mode", "algorithm", "p0", "p1", "alpha", "beta", "epsilon", "epsilon_prime", "scale_mode", "p",
        "position", "value_a", "value_b", "trials", "tau_cap", "smoothing", "bootstrap_reps", "delta",
    ),
    "counterexample": ("p0", "p1", "alpha", "beta", "max_steps"),
    "bench": (
        "dataset", "test_dataset", "label_column", "id_column", "label_map", "header", "delimiter", "eps",
        "repetitions", "alpha", "beta", "metric_scale", "min_test",
    ),
}

# subcommand-specific defaults that differ from KEYS
OVERRIDES = {
    "serm": {"alpha": 0.2, "beta": 0.2},
    "dp-serm": {"alpha": 0.2, "beta": 0.2},
    "bench": {"alpha": 0.2, "beta": 0.2},
    "audit": {"trials": 100_000, "p": 0.5},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqdp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"seqdp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in COMMANDS.items():
        p = sub.add_parser(name)
        if name == "counterexample":
            p.add_argument("which", choices=("sprt", "serm"))
        p.add_argument("--config", help="INI file with [common] and [%s] sections" % name)
        p.add_argument("--seed", default=None, help=f"root seed (default: ${SEED_ENV} or 0)")
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.add_argument("--unsafe-debug", action="store_true", help="include private internals in the output")
        for key in keys:
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags, then parse and check every key."""
    keys = ("seed", "out") + COMMANDS[args.command]
    raw: dict[str, Any] = {k: KEYS[k][1] for k in keys}
    raw.update({k: v for k, v in OVERRIDES.get(args.command, {}).items() if k in raw})
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        raw["seed"] = env_seed
    if args.config:
        cp = configparser.ConfigParser()
        try:
            with open(args.config, encoding="utf-8") as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError("config", str(exc)) from None
        for section in ("common", args.command):
            if cp.has_section(section):
                for k, v in cp.items(section):
                    k = k.replace("-", "_")
                    if k not in keys:
                        raise ConfigError(k, f"unknown key for {args.command}")
                    raw[k] = v
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            raw[k] = v
    if raw["seed"] is None:
        raw["seed"] = 0

    resolved = {}
    for k in keys:
        parse, _, check = KEYS[k]
        v = raw[k]
        if v is not None and isinstance(v, str):
            try:
                v = parse(v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(k, f"cannot parse {raw[k]!r}: {exc}") from None
        if v is not None and check is not None and not check[0](v):
            raise ConfigError(k, check[1])
        resolved[k] = v
    if getattr(args, "which", None):
        resolved["which"] = args.which
    return resolved


def _config_hash(cfg: dict) -> str:
    payload = {k: v for k, v in cfg.items() if k != "out"}
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def _provenance(cfg: dict) -> dict:
    return {"tool": "seqdp", "version": __version__, "seed": cfg["seed"], "config_sha256": _config_hash(cfg)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _emit_json(cfg: dict, command: str, result: dict) -> str:
    doc = {"command": command, "provenance": _provenance(cfg), "config": cfg, "result": result}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _sprt_config(cfg: dict) -> SprtConfig:
    try:
        return SprtConfig(cfg["p0"], cfg["p1"], cfg["alpha"], cfg["beta"], cfg.get("max_steps") or 10**6)
    except ValueError as exc:
        raise ConfigError("p0/p1/alpha/beta", str(exc)) from None


def _dp_config(cfg: dict, base: SprtConfig) -> DpSprtConfig:
    return DpSprtConfig(base, cfg["epsilon"], cfg["epsilon_prime"], cfg["scale_mode"])


def cmd_sprt(cfg: dict, private: bool, unsafe_debug: bool) -> dict:
    base = _sprt_config(cfg)
    dp = _dp_config(cfg, base) if private else None
    rng = np.random.default_rng(cfg["seed"])
    result: dict[str, Any] = {}
    if dp is not None:
        result["noise_scale"] = dp.noise_scale
        result["noise_scale_analysis"] = 1.0 / dp.epsilon
        result["noise_scale_sensitivity"] = dataclasses.replace(dp, scale_mode="sensitivity").noise_scale
        if dp.epsilon < 1:
            result["bounds"] = dataclasses.asdict(dp_sprt_bounds(dp))
    if cfg["trials"] == 1:
        p = base.p0 if cfg["p"] is None else cfg["p"]
        stream = StreamSource(IidBernoulli(p), int(rng.integers(0, 2**63 - 1))).open()
        out = dp_sprt_run(stream, dp, rng) if dp else sprt_run(stream, base)
        result["outcome"] = out.to_record(unsafe_debug=unsafe_debug)
        return result
    if cfg["trials"] < 1000:
        raise ConfigError("trials", "Monte Carlo sweeps need 1 or at least 1000 trials")
    rep = monte_carlo_error_rates(base, cfg["trials"], rng, dp)
    result["error_rates"] = dataclasses.asdict(rep)
    return result


def _tabular(cfg: dict, key: str = "dataset"):
    path = cfg[key]
    delim = None if cfg["delimiter"] in ("whitespace", "space", "\\s") else cfg["delimiter"]
    try:
        return load_csv(path, cfg["label_column"], cfg["id_column"], cfg["label_map"], cfg["header"], delim)
    except FileNotFoundError:
        raise ConfigError(key, f"no such file: {path}") from None


def cmd_serm(cfg: dict, private: bool) -> dict:
    eps = cfg["epsilon"] if private else None
    try:
        config = SermConfig(cfg["alpha"], cfg["beta"], cfg["max_steps"], eps, cfg.get("metric_scale") or 1000.0)
    except ValueError as exc:
        raise ConfigError("alpha/beta", str(exc)) from None
    rng = np.random.default_rng(cfg["seed"])
    algo = dp_serm_run if private else serm_run
    result: dict[str, Any] = {"n_alpha_beta": config.n_alpha_beta}

    if cfg["dataset"]:
        data = _tabular(cfg)
        (rows,) = standardize(data)
        cls = LinearSoftmax(data.n_features, max(data.classes) + 1, pool_seed=cfg["seed"])
        source = Dataset(tuple(rows), int(rng.integers(0, 2**63 - 1)))
        out = algo(StreamSource(source).open(), cls, config, rng)
        prefix = source.ordered()[: out.tau]
        X = np.stack([r.features for r in prefix])
        y = np.array([r.label for r in prefix])
        result.update(
            tau=out.tau,
            capped=out.capped,
            final_rademacher=float(out.rademacher_trace[-1]),
            parameters=np.asarray(out.selected),
            train_acc=cls.accuracy(out.selected, X, y),
        )
        lam = lambda_estimate(cls, prefix, lambda_min=config.alpha)
    else:
        if cfg["table"] is None or cfg["pmf"] is None:
            raise ConfigError("table", "need --table and --pmf, or --dataset")
        try:
            cls = FiniteTable(cfg["table"])
            kind = IidFinite(tuple(cfg["pmf"]))
        except ValueError as exc:
            raise ConfigError("table/pmf", str(exc)) from None
        if cls.table.shape[1] != len(kind.pmf):
            raise ConfigError("pmf", "length must match the table width")
        if cfg["trials"] > 1:
            rep = monte_carlo_pac_rate(cls, kind.pmf, config, cfg["trials"], rng, private)
            result["pac"] = {
                "violation_rate": rep.violation_rate,
                "ci": rep.ci,
                "beta": rep.beta,
                "admissible": rep.admissible,
                "mean_tau": float(rep.taus.mean()),
                "capped": rep.capped,
            }
            return result
        out = algo(StreamSource(kind, int(rng.integers(0, 2**63 - 1))).open(), cls, config, rng)
        result.update(
            tau=out.tau,
            capped=out.capped,
            selected=out.selected,
            empirical_risks=out.empirical_risks,
            final_rademacher=float(out.rademacher_trace[-1]),
        )
        lam = max(float(out.empirical_risks.max()), config.alpha)
    if private:
        level = dp_serm_privacy_level(config.alpha, config.beta, lam, config.epsilon)
        result["privacy"] = {"level": level.level, "intrinsic": level.intrinsic, "lambda": lam}
        result["laplace_rate"] = config.epsilon * config.metric_scale
    return result


def cmd_audit(cfg: dict) -> dict:
    rng = np.random.default_rng(cfg["seed"])
    if cfg["trials"] < 1000:
        raise ConfigError("trials", "audits need at least 1000 trials per arm")
    result: dict[str, Any] = {}
    if cfg["algorithm"] == "rr":
        if cfg["mode"] != "weak":
            raise ConfigError("mode", "randomized response is audited in weak mode only")
        observe = randomized_response_observer(cfg["epsilon"])
    else:
        base = _sprt_config(cfg)
        dp = _dp_config(cfg, base) if cfg["algorithm"] == "dp-sprt" else None
        observe = sprt_observer(base, cfg["p"], dp, cfg["tau_cap"])
        if dp is not None:
            result["claimed_epsilon"] = max(dp.epsilon, dp.epsilon_prime)
    if cfg["mode"] == "weak":
        ac = AuditConfig(
            cfg["position"], cfg["value_a"], cfg["value_b"], cfg["trials"], cfg["tau_cap"],
            True, cfg["smoothing"], cfg["bootstrap_reps"],
        )
        report = empirical_epsilon_weak(observe, ac, rng)
    else:
        try:
            pair = counterexample_sprt(base)
        except ValueError as exc:
            raise ConfigError("p0/p1", str(exc)) from None
        report = empirical_epsilon_conditional(
            sprt_runner(base, dp, cfg["tau_cap"]), pair, cfg["trials"], rng,
            tau_cap=cfg["tau_cap"], smoothing=cfg["smoothing"], bootstrap_reps=cfg["bootstrap_reps"],
        )
    result["report"] = report.to_dict()
    if cfg["delta"] is not None:
        result["epsilon_delta"] = report.epsilon_delta(cfg["delta"])
    return result


def cmd_counterexample(cfg: dict) -> dict:
    if cfg["which"] == "sprt":
        base = _sprt_config(cfg)
        try:
            pair = counterexample_sprt(base)
        except ValueError as exc:
            raise ConfigError("p0/p1", str(exc)) from None
        a = sprt_run(pair.stream_a(), base)
        b = sprt_run(pair.stream_b(), base)
        return {
            "k1": sprt_run_length(base),
            "differing_position": pair.index,
            "stream_a": a.to_record(),
            "stream_b": b.to_record(),
            "tau_gap_lower_bound": b.tau - a.tau if b.capped else None,
        }
    pair, cls = counterexample_serm(cfg["alpha"], cfg["beta"])
    config = SermConfig(cfg["alpha"], cfg["beta"], cfg["max_steps"])
    rng = np.random.default_rng(cfg["seed"])
    a = serm_run(pair.stream_a(), cls, config, rng)
    b = serm_run(pair.stream_b(), cls, config, rng)
    return {
        "n_alpha_beta": config.n_alpha_beta,
        "differing_position": pair.index,
        "stream_a": {"tau": a.tau, "selected": a.selected, "empirical_risks": a.empirical_risks},
        "stream_b": {"tau": b.tau, "selected": b.selected, "empirical_risks": b.empirical_risks},
    }


def cmd_bench(cfg: dict) -> tuple[str, str]:
    if not cfg["dataset"]:
        raise ConfigError("dataset", "bench needs --dataset")
    train = _tabular(cfg)
    test = _tabular(cfg, "test_dataset") if cfg["test_dataset"] else None
    res = run_bench(
        train, cfg["eps"], test=test, alpha=cfg["alpha"], beta=cfg["beta"], repetitions=cfg["repetitions"],
        metric_scale=cfg["metric_scale"], seed=cfg["seed"], min_test=cfg["min_test"],
    )
    prov = _provenance(cfg)
    head = "".join(f"# {k}={v}\n" for k, v in prov.items())
    buf = io.StringIO()
    buf.write(head)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric"] + [f"{e:g}" for e in res.epsilons])
    for m in METRICS:
        w.writerow([m] + [f"{v:.6f}" for v in res.table[m]])
    reps = io.StringIO()
    reps.write(head)
    w = csv.writer(reps, lineterminator="\n")
    cols = ["repetition", "epsilon"] + list(METRICS)
    w.writerow(cols)
    for r in res.repetitions:
        w.writerow([r["repetition"], f"{r['epsilon']:g}"] + [f"{r[m]:.6f}" if isinstance(r[m], float) else r[m] for m in METRICS])
    return buf.getvalue(), reps.getvalue()


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def run_subcommand(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        if args.command in ("sprt", "dp-sprt"):
            text = _emit_json(cfg, args.command, cmd_sprt(cfg, args.command == "dp-sprt", args.unsafe_debug))
        elif args.command in ("serm", "dp-serm"):
            text = _emit_json(cfg, args.command, cmd_serm(cfg, args.command == "dp-serm"))
        elif args.command == "audit":
            text = _emit_json(cfg, "audit", cmd_audit(cfg))
        elif args.command == "counterexample":
            text = _emit_json(cfg, "counterexample", cmd_counterexample(cfg))
        else:
            table, reps = cmd_bench(cfg)
            _write(cfg["out"], table)
            if cfg["out"] is not None:
                Path(cfg["out"]).with_suffix(".reps.csv").write_text(reps, encoding="utf-8")
            return 0
        _write(cfg["out"], text)
        return 0
    except ConfigError as exc:
        sys.stderr.write(json.dumps({"error": "config", "key": exc.key, "message": exc.message}) + "\n")
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        sys.stderr.write(json.dumps({"error": "runtime", "type": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


def main() -> None:
    sys.exit(run_subcommand())


if __name__ == "__main__":
    main()
