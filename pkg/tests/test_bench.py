import numpy as np
import pytest

from seqdp.bench import METRICS, run_bench, standardize
from seqdp.streams import Record, TabularData


def blobs(n, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    X = rng.normal(size=(n, 3)) + 2.0 * y[:, None]
    return TabularData(tuple(Record(x, int(c)) for x, c in zip(X, y)), 3, (0, 1))


def test_standardize_uses_training_statistics():
    train, other = blobs(200), blobs(50, seed=1)
    tr, ot = standardize(train, other)
    X = np.stack([r.features for r in tr])
    np.testing.assert_allclose(X.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(X.std(axis=0), 1, atol=1e-12)
    X0, _ = train.arrays()
    mu, sd = X0.mean(axis=0), X0.std(axis=0)
    np.testing.assert_allclose(ot[0].features, (other[0].features - mu) / sd)


def test_levels_share_stopping_time_and_parameters():
    res = run_bench(blobs(500), (0.1, 1.0), repetitions=3, seed=2)
    assert set(res.table) == set(METRICS)
    for rep in range(3):
        rows = [r for r in res.repetitions if r["repetition"] == rep]
        assert len({r["stopping_time"] for r in rows}) == 1
        assert len({r["train_acc"] for r in rows}) == 1


def test_short_datasets_are_reshuffled_then_rejected():
    # 350 rows leave fewer than 50 unused once the run passes step 311
    with pytest.raises(RuntimeError):
        run_bench(blobs(350), (0.5,), repetitions=1, max_attempts=3)


def test_external_test_split():
    res = run_bench(blobs(400), (0.5,), test=blobs(80, seed=5), repetitions=2, seed=1)
    assert res.discarded == 0
    assert res.table["test_acc"][0] > 0.8
