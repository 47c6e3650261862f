"""Data streams, adjacency and CSV ingestion.

A stream is a pull-based iterator over samples. Binary samples (0/1) feed
the SPRT; integer indices into a finite sample space or :class:`Record`
instances feed SERM.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

_BLOCK = 1024


@dataclass(frozen=True)
class Record:
    """A labelled feature vector."""

    features: np.ndarray
    label: int

    def __eq__(self, other):
        if not isinstance(other, Record):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.features, other.features)

    def __hash__(self):
        return hash((self.label, self.features.tobytes()))


Sample = Union[int, Record]


class StreamExhausted(RuntimeError):
    """Raised when a finite (dataset-backed) stream runs out of samples."""

    def __init__(self, consumed: int):
        super().__init__(f"stream exhausted after {consumed} samples")
        self.consumed = consumed


@dataclass(frozen=True)
class IidBernoulli:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")


@dataclass(frozen=True)
class IidFinite:
    """I.i.d. draws of indices ``0..len(pmf)-1``."""

    pmf: tuple[float, ...]

    def __post_init__(self):
        pmf = tuple(float(v) for v in self.pmf)
        object.__setattr__(self, "pmf", pmf)
        if not pmf:
            raise ValueError("pmf must be non-empty")
        if any(not 0.0 <= v <= 1.0 for v in pmf):
            raise ValueError("pmf entries must lie in [0, 1]")
        if abs(math.fsum(pmf) - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {math.fsum(pmf)!r}, not 1")


@dataclass(frozen=True)
class Dataset:
    """Finite list of records, optionally shuffled by ``order_seed``."""

    records: tuple
    order_seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def ordered(self) -> tuple:
        if self.order_seed is None:
            return self.records
        perm = np.random.default_rng(self.order_seed).permutation(len(self.records))
        return tuple(self.records[i] for i in perm)


@dataclass(frozen=True)
class Fixed:
    """Deterministic stream: ``prefix`` once, then ``tail`` repeated forever."""

    prefix: tuple
    tail: tuple

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(self.prefix))
        object.__setattr__(self, "tail", tuple(self.tail))
        if not self.tail:
            raise ValueError("Fixed stream needs a non-empty periodic tail")

    def at(self, k: int) -> Sample:
        """Entry at 1-based position ``k``."""
        if k <= len(self.prefix):
            return self.prefix[k - 1]
        return self.tail[(k - len(self.prefix) - 1) % len(self.tail)]


StreamKind = Union[IidBernoulli, IidFinite, Dataset, Fixed]


@dataclass(frozen=True)
class StreamSource:
    kind: StreamKind
    seed: int = 0

    def open(self, overrides: Mapping[int, Sample] | None = None) -> "Stream":
        return Stream(self, overrides)


class Stream:
    """Single-consumer iterator over a :class:`StreamSource`.

    ``overrides`` maps 1-based positions to replacement samples; this is how
    adjacent views are realized without copying the underlying source.
    """

    def __init__(self, source: StreamSource, overrides: Mapping[int, Sample] | None = None):
        self.source = source
        self.consumed = 0
        self._overrides = dict(overrides or {})
        self._rng = np.random.default_rng(source.seed)
        self._buf: np.ndarray | None = None
        self._pos = 0
        kind = source.kind
        if isinstance(kind, Dataset):
            self._records = kind.ordered()
        elif isinstance(kind, IidFinite):
            self._cdf = np.cumsum(kind.pmf)

    def __iter__(self):
        return self

    def _refill(self) -> None:
        kind = self.source.kind
        u = self._rng.random(_BLOCK)
        if isinstance(kind, IidBernoulli):
            self._buf = (u < kind.p).astype(np.int64)
        else:
            idx = np.searchsorted(self._cdf, u, side="right")
            self._buf = np.minimum(idx, len(kind.pmf) - 1)
        self._pos = 0

    def _draw(self, k: int) -> Sample:
        kind = self.source.kind
        if isinstance(kind, Fixed):
            return kind.at(k)
        if isinstance(kind, Dataset):
            if k > len(self._records):
                raise StreamExhausted(k - 1)
            return self._records[k - 1]
        if self._buf is None or self._pos >= _BLOCK:
            self._refill()
        value = int(self._buf[self._pos])
        self._pos += 1
        return value

    def __next__(self) -> Sample:
        k = self.consumed + 1
        # the underlying law is advanced even at overridden positions so that
        # adjacent views stay aligned everywhere else
        value = self._draw(k)
        self.consumed = k
        return self._overrides.get(k, value)

    def take(self, n: int) -> list:
        return [next(self) for _ in range(n)]


def next_sample(stream: Stream) -> Sample:
    return next(stream)


@dataclass(frozen=True)
class AdjacentPair:
    """Two views of ``base`` that differ only at 1-based position ``index``."""

    base: StreamSource
    index: int
    substitute: Any

    def stream_a(self) -> Stream:
        return self.base.open()

    def stream_b(self) -> Stream:
        return self.base.open({self.index: self.substitute})

    def prefixes(self, length: int) -> tuple[list, list]:
        return self.stream_a().take(length), self.stream_b().take(length)


def make_adjacent(base: StreamSource, index: int, substitute: Sample) -> AdjacentPair:
    if index < 1:
        raise ValueError(f"adjacency index must be >= 1, got {index}")
    return AdjacentPair(base, int(index), substitute)


class CsvFormatError(ValueError):
    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row = row
        self.column = column


@dataclass
class TabularData:
    """Records parsed from a delimited file."""

    records: list[Record]
    n_features: int
    classes: tuple[int, ...] = field(default=())

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.stack([r.features for r in self.records])
        y = np.array([r.label for r in self.records], dtype=np.int64)
        return X, y


def load_csv(
    path: str | Path,
    label_column: int,
    id_column: int | None = None,
    label_map: Mapping[str, int] | None = None,
    header: bool = False,
    delimiter: str | None = ",",
) -> TabularData:
    """Parse a delimited file into records.

    ``delimiter=None`` splits on runs of whitespace (the layout of the UCI
    Statlog files). Column indices may be negative. No feature scaling is
    applied.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if delimiter is None:
        rows = [line.split() for line in text.splitlines()]
    else:
        rows = list(csv.reader(text.splitlines(), delimiter=delimiter))
    numbered = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if header and numbered:
        numbered = numbered[1:]
    if not numbered:
        raise CsvFormatError(f"{path} contains no data rows")

    width = len(numbered[0][1])
    label_col = label_column % width
    drop = {label_col}
    if id_column is not None:
        drop.add(id_column % width)
    feature_cols = [c for c in range(width) if c not in drop]

    records = []
    for rownum, row in numbered:
        if len(row) != width:
            raise CsvFormatError(f"expected {width} fields, found {len(row)}", row=rownum)
        raw = row[label_col].strip()
        if label_map is not None:
            if raw not in label_map:
                raise CsvFormatError(f"unknown label {raw!r}", row=rownum, column=label_col)
            label = int(label_map[raw])
        else:
            try:
                label = int(raw)
            except ValueError:
                raise CsvFormatError(f"label {raw!r} is not an integer", row=rownum, column=label_col) from None
        feats = np.empty(len(feature_cols))
        for j, c in enumerate(feature_cols):
            try:
                feats[j] = float(row[c])
            except ValueError:
                raise CsvFormatError(f"cannot parse {row[c]!r} as a number", row=rownum, column=c) from None
            if not math.isfinite(feats[j]):
                raise CsvFormatError(f"non-finite value {row[c]!r}", row=rownum, column=c)
        records.append(Record(feats, label))

    classes = tuple(sorted({r.label for r in records}))
    logger.info("loaded %s: %d records, %d features, %d classes", path, len(records), len(feature_cols), len(classes))
    return TabularData(records, len(feature_cols), classes)
