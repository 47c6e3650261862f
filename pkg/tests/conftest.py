import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def wdbc_csv(tmp_path_factory):
    """WDBC in its UCI layout (id, diagnosis, 30 features), rebuilt from scikit-learn's copy."""
    datasets = pytest.importorskip("sklearn.datasets")
    d = datasets.load_breast_cancer()
    path = tmp_path_factory.mktemp("data") / "wdbc.csv"
    lines = []
    for i, (x, t) in enumerate(zip(d.data, d.target)):
        diag = "B" if d.target_names[t] == "benign" else "M"
        lines.append(",".join([str(842302 + i), diag] + [repr(float(v)) for v in x]))
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def verdict(request):
    """Record a one-line acceptance verdict, print it, then assert it."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def check(name: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
