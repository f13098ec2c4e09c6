"""Irregular binary functional observations and their cached design rows."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bspline import BSplineBasis, eval_basis
from .errors import DataError, InvalidArgumentError, OutOfDomainError

CSV_HEADER = ("subject", "time", "y")


@dataclass(frozen=True, eq=False)
class BinaryFunctionalDataset:
    """Observations stored flat in subject-major order.

    ``subject_index[r]`` is the dense 0-based subject of row ``r``; rows of a
    subject are contiguous and keep their input order.
    """

    subject_ids: tuple[str, ...]
    times: np.ndarray
    y: np.ndarray
    subject_index: np.ndarray
    T: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        y = np.asarray(self.y)
        sidx = np.asarray(self.subject_index, dtype=np.intp)
        if not (times.shape == y.shape == sidx.shape) or times.ndim != 1:
            raise InvalidArgumentError("times, y and subject_index must be 1-d and aligned")
        if times.size == 0:
            raise InvalidArgumentError("dataset has no observations")
        if not np.all((y == 0) | (y == 1)):
            raise InvalidArgumentError("outcomes must be 0 or 1")
        if np.any(times < 0) or np.any(times > self.T):
            raise OutOfDomainError(f"observation times must lie in [0, {self.T}]")
        n = len(self.subject_ids)
        if np.any(np.diff(sidx) < 0) or sidx[0] != 0 or sidx[-1] != n - 1 \
                or np.any(np.diff(sidx) > 1):
            raise InvalidArgumentError("rows must be grouped subject-major with every subject present")
        for name, arr in (("times", times), ("y", y.astype(np.int8)), ("subject_index", sidx)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_subjects(cls, subjects, T: float, ids=None) -> "BinaryFunctionalDataset":
        """Build from a sequence of ``(times, outcomes)`` pairs, one per subject."""
        subjects = list(subjects)
        if ids is None:
            ids = [f"s{i + 1}" for i in range(len(subjects))]
        times = [np.atleast_1d(np.asarray(t, dtype=float)) for t, _ in subjects]
        ys = [np.atleast_1d(np.asarray(v)) for _, v in subjects]
        if any(t.size == 0 for t in times):
            raise InvalidArgumentError("every subject needs at least one observation")
        sidx = np.repeat(np.arange(len(subjects)), [t.size for t in times])
        return cls(tuple(str(i) for i in ids), np.concatenate(times),
                   np.concatenate(ys), sidx, float(T))

    @property
    def n(self) -> int:
        return len(self.subject_ids)

    @property
    def N(self) -> int:
        return int(self.times.size)

    @property
    def counts(self) -> np.ndarray:
        """Per-subject observation counts ``m_i``."""
        return np.bincount(self.subject_index, minlength=self.n)

    @property
    def q(self) -> np.ndarray:
        """Signed outcomes ``2y - 1``."""
        return 2.0 * self.y - 1.0

    def subject(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        mask = self.subject_index == i
        return self.times[mask], self.y[mask]

    def is_common_grid(self) -> bool:
        """True when every subject is observed at the same sorted set of times."""
        counts = self.counts
        if np.any(counts != counts[0]):
            return False
        t = self.times.reshape(self.n, counts[0])
        return bool(np.all(t == t[0]))


def load_csv(path, T: float) -> BinaryFunctionalDataset:
    """Read a long-format ``subject,time,y`` file."""
    path = Path(path)
    ids: dict[str, int] = {}
    per_subject: list[tuple[list, list]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataError(f"expected header {','.join(CSV_HEADER)}, got {','.join(header)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"expected 3 fields, got {len(row)}", line=lineno)
            sid, t_raw, y_raw = (c.strip() for c in row)
            try:
                t = float(t_raw)
            except ValueError:
                raise DataError(f"time {t_raw!r} is not a number", line=lineno) from None
            if not np.isfinite(t) or t < 0 or t > T:
                raise DataError(f"time {t_raw} outside [0, {T}]", line=lineno)
            if y_raw not in ("0", "1"):
                try:
                    yv = float(y_raw)
                except ValueError:
                    yv = None
                if yv not in (0.0, 1.0):
                    raise DataError(f"invalid outcome {y_raw!r}, expected 0 or 1", line=lineno)
                y_raw = str(int(yv))
            if sid not in ids:
                ids[sid] = len(per_subject)
                per_subject.append(([], []))
            ts, ys = per_subject[ids[sid]]
            ts.append(t)
            ys.append(int(y_raw))
    if not per_subject:
        raise DataError(f"{path}: no observations")
    return BinaryFunctionalDataset.from_subjects(per_subject, T, ids=list(ids))


def write_csv(data: BinaryFunctionalDataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for s, t, y in zip(data.subject_index, data.times, data.y):
            w.writerow((data.subject_ids[s], repr(float(t)), int(y)))


@dataclass(frozen=True, eq=False)
class DesignCache:
    """Stacked ``N x L`` basis rows ``B_ij`` aligned with the dataset rows."""

    B: np.ndarray
    subject_index: np.ndarray
    n: int

    @property
    def N(self) -> int:
        return self.B.shape[0]

    def subject_sum(self, values: np.ndarray) -> np.ndarray:
        """Sum a length-N vector within subjects."""
        return np.bincount(self.subject_index, weights=values, minlength=self.n)


def build_design(data: BinaryFunctionalDataset, basis: BSplineBasis) -> DesignCache:
    if data.T > basis.T or np.any(data.times > basis.T):
        raise OutOfDomainError(
            f"data domain [0, {data.T}] exceeds basis domain [0, {basis.T}]")
    B = eval_basis(basis, data.times, 0)
    B.setflags(write=False)
    return DesignCache(B, data.subject_index, data.n)
