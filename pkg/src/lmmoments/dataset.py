"""Grouped observations ``(x_ij, y_ij)`` and their CSV representation.

Rows are stored flat (one ``N x p`` covariate matrix and one response
vector) with per-group offsets, which keeps every downstream computation
vectorised.  :class:`Group` objects are light views built on demand.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyData, GroupTooSmall, ParseError, UsageError

__all__ = [
    "Group",
    "GroupedDataset",
    "DropReport",
    "load_csv",
    "read_csv",
    "emit_csv",
    "write_csv",
    "validate_for_order",
]


@dataclass(frozen=True)
class Group:
    id: str
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.shape[0] != self.y.shape[0]:
            raise UsageError(
                f"group {self.id!r}: x has {self.x.shape[0]} rows, y has {self.y.shape[0]}"
            )

    @property
    def size(self) -> int:
        return int(self.y.shape[0])


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GroupedDataset:
    """Observations of a one-level linear mixed model.

    Parameters
    ----------
    ids : sequence of str
        Group labels, in group-index order ``i = 0..n-1``.
    sizes : array of int
        Group sizes ``l_i`` (all >= 1).
    x : ndarray, shape (N, p)
        Covariates, rows grouped contiguously in the order of ``ids``.
    y : ndarray, shape (N,)
        Responses.
    """

    ids: tuple
    sizes: np.ndarray
    x: np.ndarray
    y: np.ndarray
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=np.int64)
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 0) if x.size == 0 else x.reshape(-1, 1)
        if len(self.ids) != sizes.shape[0]:
            raise UsageError("ids and sizes disagree in length")
        if sizes.shape[0] == 0:
            raise EmptyData("dataset has no groups")
        if np.any(sizes < 1):
            raise UsageError("every group needs at least one row")
        if len(set(self.ids)) != len(self.ids):
            raise UsageError("group labels must be unique")
        total = int(sizes.sum())
        if y.shape != (total,) or x.shape[0] != total:
            raise UsageError(
                f"row count mismatch: sum(l_i)={total}, y has {y.shape[0]}, x has {x.shape[0]}"
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise UsageError("all x and y entries must be finite")
        sizes.setflags(write=False)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        offsets.setflags(write=False)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def from_groups(cls, groups: Iterable[Group], p: int | None = None) -> "GroupedDataset":
        groups = list(groups)
        if not groups:
            raise EmptyData("dataset has no groups")
        if p is None:
            p = groups[0].x.shape[1] if groups[0].x.ndim == 2 else 1
        xs = [np.asarray(g.x, dtype=float).reshape(g.size, p) for g in groups]
        return cls(
            ids=tuple(g.id for g in groups),
            sizes=np.array([g.size for g in groups]),
            x=np.vstack(xs),
            y=np.concatenate([np.asarray(g.y, dtype=float) for g in groups]),
        )

    @property
    def n(self) -> int:
        return int(self.sizes.shape[0])

    @property
    def N(self) -> int:  # noqa: N802 - model notation
        return int(self.offsets[-1])

    @property
    def p(self) -> int:
        return int(self.x.shape[1])

    @property
    def groups(self) -> list[Group]:
        return [self.group(i) for i in range(self.n)]

    def group(self, i: int) -> Group:
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return Group(self.ids[i], self.x[lo:hi], self.y[lo:hi])

    def subset(self, keep: Sequence[int]) -> "GroupedDataset":
        """Dataset restricted to the groups with the given indices (order kept)."""
        keep = list(keep)
        if not keep:
            raise EmptyData("no groups left")
        rows = np.concatenate(
            [np.arange(self.offsets[i], self.offsets[i + 1]) for i in keep]
        )
        return GroupedDataset(
            ids=tuple(self.ids[i] for i in keep),
            sizes=self.sizes[keep],
            x=self.x[rows],
            y=self.y[rows],
        )

    def __eq__(self, other):
        if not isinstance(other, GroupedDataset):
            return NotImplemented
        return (
            self.ids == other.ids
            and np.array_equal(self.sizes, other.sizes)
            and self.x.shape == other.x.shape
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
        )

    def __repr__(self):
        return f"GroupedDataset(n={self.n}, N={self.N}, p={self.p})"


# -- CSV ---------------------------------------------------------------------


def _parse_header(header):
    if len(header) < 2 or header[0].strip() != "group" or header[1].strip() != "y":
        raise ParseError("header must start with 'group,y'", row=1)
    xs = [h.strip() for h in header[2:]]
    for j, name in enumerate(xs, start=1):
        if name != f"x{j}":
            raise ParseError(f"expected column 'x{j}', found {name!r}", row=1)
    return len(xs)


def _to_float(cell, line):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"not a number: {cell!r}", row=line) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value: {cell!r}", row=line)
    return v


def read_csv(stream) -> GroupedDataset:
    """Parse the ``group,y,x1,...,xp`` format from an open text stream.

    Error row numbers are physical line numbers (the header is line 1).
    Rows sharing a ``group`` label form one group, ordered by first appearance.
    """
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyData("empty file") from None
    p = _parse_header(header)
    width = p + 2
    order: dict[str, int] = {}
    ys: list[list[float]] = []
    xs: list[list[list[float]]] = []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} columns, found {len(row)}", row=line)
        label = row[0].strip()
        if not label:
            raise ParseError("missing group label", row=line)
        y = _to_float(row[1], line)
        x = [_to_float(c, line) for c in row[2:]]
        i = order.setdefault(label, len(order))
        if i == len(ys):
            ys.append([])
            xs.append([])
        ys[i].append(y)
        xs[i].append(x)
    if not order:
        raise EmptyData("file contains a header but no data rows")
    sizes = np.array([len(v) for v in ys])
    y = np.array([v for g in ys for v in g], dtype=float)
    x = np.array([r for g in xs for r in g], dtype=float).reshape(y.size, p)
    return GroupedDataset(ids=tuple(order), sizes=sizes, x=x, y=y)


def load_csv(path) -> GroupedDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return read_csv(fh)


def emit_csv(ds: GroupedDataset) -> str:
    """Serialise to CSV text; floats use ``repr`` so values round-trip exactly."""
    buf = io.StringIO()
    header = ["group", "y"] + [f"x{j}" for j in range(1, ds.p + 1)]
    buf.write(",".join(header) + "\n")
    for i, gid in enumerate(ds.ids):
        lo, hi = ds.offsets[i], ds.offsets[i + 1]
        for r in range(lo, hi):
            cells = [gid, repr(float(ds.y[r]))]
            cells.extend(repr(float(v)) for v in ds.x[r])
            buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def write_csv(ds: GroupedDataset, path) -> None:
    Path(path).write_text(emit_csv(ds), encoding="utf-8")


# -- group-size validation ---------------------------------------------------


@dataclass(frozen=True)
class DropReport:
    order: int
    dropped: tuple  # (group id, l_i) pairs

    @property
    def any(self) -> bool:
        return bool(self.dropped)


def validate_for_order(ds: GroupedDataset, k: int, policy: str = "drop"):
    """Make every group usable by the order-``k`` estimators (``l_i >= k``).

    Returns ``(dataset, DropReport)``.  With ``policy="strict"`` an undersized
    group raises :class:`GroupTooSmall`; with ``"drop"`` it is removed and a
    warning is issued.
    """
    if k not in (2, 3, 4):
        raise UsageError(f"moment order must be 2, 3 or 4, got {k}")
    if policy not in ("strict", "drop"):
        raise UsageError(f"policy must be 'strict' or 'drop', got {policy!r}")
    small = np.flatnonzero(ds.sizes < k)
    if small.size == 0:
        return ds, DropReport(k, ())
    if policy == "strict":
        i = int(small[0])
        raise GroupTooSmall(ds.ids[i], int(ds.sizes[i]), k)
    dropped = tuple((ds.ids[i], int(ds.sizes[i])) for i in small)
    keep = np.flatnonzero(ds.sizes >= k)
    if keep.size == 0:
        raise EmptyData(f"no group has at least {k} observations")
    warnings.warn(
        f"dropped {len(dropped)} group(s) with fewer than {k} observations",
        stacklevel=2,
    )
    return ds.subset(keep), DropReport(k, dropped)
