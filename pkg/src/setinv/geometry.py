"""Intervals, boxes and subpavings.

Scalar operations work on :class:`Interval` / :class:`Box` values; the
``*_arr`` variants apply the same endpoint rules elementwise to arrays of
lower and upper bounds, which is what the bisection solver uses on whole
levels of boxes at once.

Arithmetic is plain floating point without outward rounding.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

INNER = 2
UNCERTAIN = 1
OUTER = 0

_KIND_NAMES = {INNER: "inner", UNCERTAIN: "uncertain", OUTER: "outer"}
_KIND_CODES = {v: k for k, v in _KIND_NAMES.items()}


@dataclass(frozen=True)
class Interval:
    """Closed real interval ``[lo, hi]``."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def is_subset(self, other: Interval) -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def intersects(self, other: Interval) -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def __add__(self, other: Interval) -> Interval:
        return interval_add(self, other)

    def __mul__(self, other: Interval) -> Interval:
        return interval_mul(self, other)

    def __iter__(self):
        yield self.lo
        yield self.hi


def interval_add(a: Interval, b: Interval) -> Interval:
    return Interval(a.lo + b.lo, a.hi + b.hi)


def interval_mul(a: Interval, b: Interval) -> Interval:
    p = (a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi)
    return Interval(min(p), max(p))


def interval_sq(a: Interval) -> Interval:
    """Exact range of ``x**2`` over ``a`` (tighter than ``a * a``)."""
    l2, h2 = a.lo * a.lo, a.hi * a.hi
    if a.lo <= 0.0 <= a.hi:
        return Interval(0.0, max(l2, h2))
    return Interval(min(l2, h2), max(l2, h2))


# -- array versions, one interval per element ---------------------------------

def add_arr(alo, ahi, blo, bhi):
    return alo + blo, ahi + bhi


def mul_arr(alo, ahi, blo, bhi):
    p1, p2, p3, p4 = alo * blo, alo * bhi, ahi * blo, ahi * bhi
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    return lo, hi


def sq_arr(alo, ahi):
    l2, h2 = alo * alo, ahi * ahi
    hi = np.maximum(l2, h2)
    lo = np.where((alo <= 0.0) & (ahi >= 0.0), 0.0, np.minimum(l2, h2))
    return lo, hi


@dataclass(frozen=True)
class Box:
    """Cartesian product of closed intervals."""

    intervals: tuple[Interval, ...]

    def __post_init__(self):
        ivs = tuple(self.intervals)
        if not ivs:
            raise ValueError("a box needs at least one interval")
        if not all(isinstance(iv, Interval) for iv in ivs):
            ivs = tuple(iv if isinstance(iv, Interval) else Interval(*iv) for iv in ivs)
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def from_bounds(cls, bounds: Iterable[Sequence[float]]) -> Box:
        return cls(tuple(Interval(float(lo), float(hi)) for lo, hi in bounds))

    @classmethod
    def from_arrays(cls, lo, hi) -> Box:
        return cls(tuple(Interval(float(a), float(b)) for a, b in zip(lo, hi)))

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> Box:
        return cls((Interval(lo, hi),) * dim)

    @property
    def dim(self) -> int:
        return len(self.intervals)

    @property
    def lo(self) -> np.ndarray:
        return np.array([iv.lo for iv in self.intervals])

    @property
    def hi(self) -> np.ndarray:
        return np.array([iv.hi for iv in self.intervals])

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def width(self) -> float:
        return max(iv.width for iv in self.intervals)

    @property
    def center(self) -> np.ndarray:
        return np.array([iv.center for iv in self.intervals])

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, x) -> bool:
        return box_contains(self, x)

    def is_subset(self, other: Box) -> bool:
        return all(a.is_subset(b) for a, b in zip(self.intervals, other.intervals))

    def intersects(self, other: Box) -> bool:
        return all(a.intersects(b) for a, b in zip(self.intervals, other.intervals))

    def bisect(self) -> tuple[Box, Box]:
        return box_bisect(self)

    def clamp(self, x) -> np.ndarray:
        return np.minimum(np.maximum(np.asarray(x, dtype=float), self.lo), self.hi)

    def to_list(self) -> list[list[float]]:
        return [[iv.lo, iv.hi] for iv in self.intervals]

    def to_json(self) -> str:
        return json.dumps(self.to_list())

    @classmethod
    def from_json(cls, text: str) -> Box:
        return cls.from_bounds(json.loads(text))

    def __len__(self):
        return self.dim

    def __getitem__(self, i) -> Interval:
        return self.intervals[i]


def box_contains(b: Box, x) -> bool:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != b.dim:
        raise ValueError(f"point has dimension {x.shape[0]}, box has {b.dim}")
    return bool(np.all((b.lo <= x) & (x <= b.hi)))


def box_bisect(b: Box) -> tuple[Box, Box]:
    """Split ``b`` at the midpoint of its widest side (lowest index on ties)."""
    widths = [iv.width for iv in b.intervals]
    k = int(np.argmax(widths))
    if widths[k] <= 0.0:
        raise ValueError("cannot bisect a zero-width box")
    iv = b.intervals[k]
    mid = iv.center
    left = b.intervals[:k] + (Interval(iv.lo, mid),) + b.intervals[k + 1:]
    right = b.intervals[:k] + (Interval(mid, iv.hi),) + b.intervals[k + 1:]
    return Box(left), Box(right)


@dataclass(frozen=True, eq=False)
class Subpaving:
    """Inner / uncertain / outer boxes covering a search box.

    Boxes are stored as ``(n, d)`` bound arrays sorted by kind, inner first,
    then uncertain, then outer, so a linear scan that stops at the first
    containing box honours the inner > uncertain > outer precedence on
    shared faces.
    """

    search_box: Box
    epsilon: float
    lo: np.ndarray
    hi: np.ndarray
    kind: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        kind = np.asarray(self.kind, dtype=np.int8)
        order = np.argsort(-kind, kind="stable")
        object.__setattr__(self, "kind", np.ascontiguousarray(kind[order]))
        lo = np.asarray(self.lo, dtype=float).reshape(-1, self.search_box.dim)
        hi = np.asarray(self.hi, dtype=float).reshape(-1, self.search_box.dim)
        object.__setattr__(self, "lo", np.ascontiguousarray(lo[order]))
        object.__setattr__(self, "hi", np.ascontiguousarray(hi[order]))

    def _boxes(self, code) -> list[Box]:
        sel = np.flatnonzero(self.kind == code)
        return [Box.from_arrays(self.lo[i], self.hi[i]) for i in sel]

    @property
    def inner(self) -> list[Box]:
        return self._boxes(INNER)

    @property
    def uncertain(self) -> list[Box]:
        return self._boxes(UNCERTAIN)

    @property
    def outer(self) -> list[Box]:
        return self._boxes(OUTER)

    def count(self, code: int | None = None) -> int:
        if code is None:
            return int(self.kind.shape[0])
        return int(np.count_nonzero(self.kind == code))

    def volume(self, code: int) -> float:
        sel = self.kind == code
        return float(np.prod(self.hi[sel] - self.lo[sel], axis=1).sum())

    def to_csv(self, path) -> None:
        d = self.search_box.dim
        header = ["class"] + [f"{s}{i}" for i in range(d) for s in ("lo", "hi")]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# epsilon", repr(self.epsilon), "search_box", self.search_box.to_json()])
            w.writerow(header)
            for k, lo, hi in zip(self.kind, self.lo, self.hi):
                row = [_KIND_NAMES[int(k)]]
                for a, b in zip(lo, hi):
                    row += [repr(float(a)), repr(float(b))]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> Subpaving:
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            meta = next(r)
            epsilon = float(meta[1])
            search_box = Box.from_json(meta[3])
            next(r)
            kinds, rows = [], []
            for row in r:
                kinds.append(_KIND_CODES[row[0]])
                rows.append([float(v) for v in row[1:]])
        arr = np.array(rows, dtype=float).reshape(len(rows), search_box.dim, 2)
        return cls(search_box, epsilon, arr[:, :, 0], arr[:, :, 1], np.array(kinds, dtype=np.int8))
