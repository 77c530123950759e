"""Set inversion by interval analysis (SIVIA) and subpaving point lookup.

Boxes are processed level by level: every box at depth ``k`` is tested with
one vectorised call to the model's inclusion function, and undecided boxes
wider than ``epsilon`` are split into the worklist for depth ``k + 1``.
This visits boxes in the same order as a FIFO queue, since siblings are
appended in order.
"""

from __future__ import annotations

import itertools
import logging
import math
import time

import numpy as np

from . import _backend
from .geometry import INNER, OUTER, UNCERTAIN, Subpaving
from .models import ProblemSpec, UnsupportedModelError, membership_batch

log = logging.getLogger(__name__)

DEFAULT_MAX_BOXES = 10_000_000


class BoxBudgetError(MemoryError):
    """The worklist would hold more boxes than the configured budget."""

    def __init__(self, max_boxes: int, depth: int, boxes: int, epsilon: float):
        self.max_boxes = max_boxes
        self.depth = depth
        self.boxes = boxes
        self.epsilon = epsilon
        super().__init__(
            f"box budget of {max_boxes} exceeded at depth {depth} "
            f"({boxes} boxes needed, epsilon={epsilon:g})")


class PointOutsideError(ValueError):
    pass


def _classify_level(spec: ProblemSpec, lo: np.ndarray, hi: np.ndarray):
    flo, fhi = spec.forward.inclusion_arrays(lo, hi)
    tlo, thi = spec.target.lo, spec.target.hi
    inner = np.all((flo >= tlo) & (fhi <= thi), axis=1)
    outer = np.any((fhi < tlo) | (flo > thi), axis=1)
    return inner, outer & ~inner


def sivia_invert(spec: ProblemSpec, epsilon: float, *, max_boxes: int = DEFAULT_MAX_BOXES) -> Subpaving:
    """Inner, uncertain and outer boxes for ``F^{-1}(U)`` over the state space.

    A box is inner when its inclusion image lies in the target box, outer
    when the image misses it, and uncertain once its widest side is at most
    ``epsilon``; anything else is bisected across its widest side.

    Raises
    ------
    UnsupportedModelError
        The forward model has no inclusion function.
    BoxBudgetError
        Stored plus pending boxes would exceed ``max_boxes``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not getattr(spec.forward, "has_inclusion", True):
        raise UnsupportedModelError(f"model {spec.forward.name!r} has no inclusion function")
    t0 = time.perf_counter()
    omega = spec.state_space
    d = omega.dim
    lo = omega.lo[None, :].copy()
    hi = omega.hi[None, :].copy()
    out_lo, out_hi, out_kind = [], [], []
    stored = 0
    depth = 0
    while lo.shape[0]:
        inner, outer = _classify_level(spec, lo, hi)
        widths = hi - lo
        small = widths.max(axis=1) <= epsilon
        undecided = ~(inner | outer)
        uncertain = undecided & small
        split = undecided & ~small
        for mask, code in ((inner, INNER), (uncertain, UNCERTAIN), (outer, OUTER)):
            if mask.any():
                out_lo.append(lo[mask])
                out_hi.append(hi[mask])
                out_kind.append(np.full(int(mask.sum()), code, dtype=np.int8))
        stored += int(np.count_nonzero(~split))
        n_split = int(np.count_nonzero(split))
        if stored + 2 * n_split > max_boxes:
            raise BoxBudgetError(max_boxes, depth + 1, stored + 2 * n_split, epsilon)
        if n_split == 0:
            break
        slo, shi, sw = lo[split], hi[split], widths[split]
        k = np.argmax(sw, axis=1)
        rows = np.arange(n_split)
        mid = 0.5 * (slo[rows, k] + shi[rows, k])
        lo = np.repeat(slo, 2, axis=0)
        hi = np.repeat(shi, 2, axis=0)
        hi[0::2][rows, k] = mid
        lo[1::2][rows, k] = mid
        depth += 1
    if out_lo:
        lo_all, hi_all = np.concatenate(out_lo), np.concatenate(out_hi)
        kind_all = np.concatenate(out_kind)
    else:
        lo_all, hi_all, kind_all = np.zeros((0, d)), np.zeros((0, d)), np.zeros(0, np.int8)
    meta = {"depth": depth, "seconds": time.perf_counter() - t0, "problem": spec.name}
    log.info("sivia %s eps=%g: %d boxes, depth %d", spec.name, epsilon, kind_all.shape[0], depth)
    return Subpaving(omega, float(epsilon), lo_all, hi_all, kind_all, meta)


def _kind_to_label(codes: np.ndarray) -> np.ndarray:
    if np.any(codes < 0):
        raise PointOutsideError("point lies outside every box of the subpaving")
    return np.where(codes == OUTER, -1, 1).astype(np.int8)


def subpaving_classify(sp: Subpaving, x) -> int:
    """+1 for points in an inner or uncertain box, -1 for outer boxes."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sp.search_box.dim,):
        raise ValueError(f"expected a point of dimension {sp.search_box.dim}")
    return int(subpaving_classify_batch(sp, x[None, :])[0])


def subpaving_classify_batch(sp: Subpaving, X, index: GridIndex | None = None) -> np.ndarray:
    """Vectorised :func:`subpaving_classify`; linear scan unless ``index`` is given."""
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    if index is not None:
        return _kind_to_label(index.lookup(X))
    return _kind_to_label(_backend.scan_classify(X, sp.lo, sp.hi, sp.kind))


class GridIndex:
    """Dense lookup table over the finest cells of a bisection subpaving.

    Every leaf box is a union of cells of side ``min width`` per dimension,
    so each cell stores the kind of the single box covering it. A point on
    a cell face takes the highest kind among the touching cells, matching
    the inner > uncertain > outer precedence of the linear scan.
    """

    def __init__(self, sp: Subpaving, max_cells: int = 50_000_000):
        self.origin = sp.search_box.lo
        top = sp.search_box.hi
        if sp.count() == 0:
            raise ValueError("empty subpaving")
        self.cell = (sp.hi - sp.lo).min(axis=0)
        shape = np.rint((top - self.origin) / self.cell).astype(np.int64)
        if np.prod(shape.astype(float)) > max_cells:
            raise MemoryError(f"grid index would need {int(np.prod(shape.astype(float)))} cells")
        self.shape = tuple(int(s) for s in shape)
        table = np.full(self.shape, -1, dtype=np.int8)
        a = np.rint((sp.lo - self.origin) / self.cell).astype(np.int64)
        b = np.rint((sp.hi - self.origin) / self.cell).astype(np.int64)
        for i in range(sp.count()):
            table[tuple(slice(a[i, j], b[i, j]) for j in range(len(self.shape)))] = sp.kind[i]
        self.table = table
        self._top = np.asarray(self.shape) - 1
        self.lo = sp.search_box.lo
        self.hi = top
        self._scalar = [(float(o), float(c), float(lo), float(hi), int(top)) for o, c, lo, hi, top
                        in zip(self.origin, self.cell, self.lo, self.hi, self._top)]

    def lookup(self, X: np.ndarray) -> np.ndarray:
        """Kind codes for rows of ``X``; -1 outside the search box."""
        t = (X - self.origin) / self.cell
        base = np.floor(t).astype(np.int64)
        inside = np.all((X >= self.lo) & (X <= self.hi), axis=1)
        np.minimum(base, self._top, out=base)
        np.maximum(base, 0, out=base)
        out = self.table[tuple(base.T)]
        out[~inside] = -1
        on_face = (t == np.floor(t)) & (t > 0) & inside[:, None]
        rows = np.flatnonzero(on_face.any(axis=1))
        if rows.size:
            out[rows] = self._face_lookup(t[rows], on_face[rows])
        return out

    def lookup_point(self, x) -> int:
        """Scalar :meth:`lookup` for one point, without array overhead."""
        key = []
        for xj, (o, c, lo, hi, top) in zip(x, self._scalar):
            if not lo <= xj <= hi:
                return -1
            t = (xj - o) / c
            f = math.floor(t)
            if f == t and t > 0:
                return int(self.lookup(np.asarray(x, dtype=float)[None, :])[0])
            key.append(min(f, top))
        return int(self.table[tuple(key)])

    def _face_lookup(self, t, on_face):
        # highest kind over every cell that touches the point
        base = np.floor(t).astype(np.int64)
        best = np.full(t.shape[0], -1, dtype=np.int8)
        for shift in itertools.product((0, 1), repeat=t.shape[1]):
            s = np.asarray(shift, dtype=bool)
            ok = np.all(on_face[:, s], axis=1) if s.any() else np.ones(t.shape[0], dtype=bool)
            idx = base - s
            ok &= np.all((idx >= 0) & (idx <= self._top), axis=1)
            if ok.any():
                np.maximum.at(best, np.flatnonzero(ok), self.table[tuple(idx[ok].T)])
        return best


def sandwich_violations(sp: Subpaving, spec: ProblemSpec, X) -> int:
    """Test points in inner boxes that the oracle rejects, plus outer-box points it accepts."""
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    truth = membership_batch(spec, X)
    bad = 0
    for code, forbidden in ((INNER, -1), (OUTER, 1)):
        sel = sp.kind == code
        if not sel.any():
            continue
        lo, hi = sp.lo[sel], sp.hi[sel]
        hit = _backend.scan_classify(X, lo, hi, np.zeros(lo.shape[0], dtype=np.int8)) == 0
        bad += int(np.count_nonzero(hit & (truth == forbidden)))
    return bad
