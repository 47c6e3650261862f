"""Privacy/accuracy trade-off benchmark for private SERM on tabular data."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from seqdp.serm import LinearSoftmax, SermConfig, dp_serm_run
from seqdp.streams import Dataset, Record, StreamExhausted, StreamSource, TabularData

METRICS = ("train_acc", "test_acc", "private_train_acc", "private_test_acc", "stopping_time")


def standardize(train: TabularData, *others: TabularData) -> list[list[Record]]:
    """Z-score every feature with statistics of ``train``; constant features are left centred."""
    X, _ = train.arrays()
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return [[Record((r.features - mu) / sd, r.label) for r in data] for data in (train, *others)]


@dataclass
class BenchResult:
    epsilons: tuple[float, ...]
    table: dict[str, list[float]]
    repetitions: list[dict]
    discarded: int

    def column(self, metric: str, eps: float) -> np.ndarray:
        return np.array([r[metric] for r in self.repetitions if r["epsilon"] == eps])


def run_bench(
    train: TabularData,
    epsilons: Sequence[float],
    *,
    test: TabularData | None = None,
    alpha: float = 0.2,
    beta: float = 0.2,
    repetitions: int = 10,
    metric_scale: float = 1000.0,
    seed: int = 0,
    min_test: int = 50,
    max_attempts: int = 100,
) -> BenchResult:
    """Repeat shuffled private-SERM runs and average accuracies per privacy level.

    Without a ``test`` split, the rows not consumed by the run form the test
    set and runs leaving fewer than ``min_test`` of them are discarded and
    reshuffled. Within one repetition every privacy level replays the same
    generator state, so all levels share the stopping step, the trained
    parameters and the direction of the Laplace perturbation.
    """
    epsilons = tuple(float(e) for e in epsilons)
    if test is None:
        (train_rows,) = standardize(train)
        test_rows = None
    else:
        train_rows, test_rows = standardize(train, test)
    n_classes = max(train.classes + (test.classes if test is not None else ())) + 1
    cls = LinearSoftmax(train.n_features, n_classes, pool_seed=seed)
    root = np.random.default_rng(seed)
    reps: list[dict] = []
    discarded = 0
    for rep in range(repetitions):
        for _ in range(max_attempts):
            order_seed = int(root.integers(0, 2**63 - 1))
            run_seed = int(root.integers(0, 2**63 - 1))
            data = Dataset(tuple(train_rows), order_seed)
            ordered = data.ordered()
            rows = []
            try:
                for eps in epsilons:
                    config = SermConfig(alpha, beta, epsilon=eps, metric_scale=metric_scale)
                    out = dp_serm_run(StreamSource(data).open(), cls, config, np.random.default_rng(run_seed))
                    rows.append((eps, out))
            except StreamExhausted:
                if test_rows is not None:
                    raise
                discarded += 1
                continue
            tau = rows[0][1].tau
            held_out = ordered[tau:] if test_rows is None else test_rows
            if test_rows is None and len(held_out) < min_test:
                discarded += 1
                continue
            break
        else:
            raise RuntimeError(f"no admissible shuffle in {max_attempts} attempts")

        Xtr = np.stack([r.features for r in ordered[:tau]])
        ytr = np.array([r.label for r in ordered[:tau]])
        Xte = np.stack([r.features for r in held_out])
        yte = np.array([r.label for r in held_out])
        for eps, out in rows:
            reps.append(
                {
                    "repetition": rep,
                    "epsilon": eps,
                    "train_acc": cls.accuracy(out.erm_selected, Xtr, ytr),
                    "test_acc": cls.accuracy(out.erm_selected, Xte, yte),
                    "private_train_acc": cls.accuracy(out.selected, Xtr, ytr),
                    "private_test_acc": cls.accuracy(out.selected, Xte, yte),
                    "stopping_time": out.tau,
                }
            )

    table = {m: [float(np.mean([r[m] for r in reps if r["epsilon"] == e])) for e in epsilons] for m in METRICS}
    return BenchResult(epsilons, table, reps, discarded)
