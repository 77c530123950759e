"""Accuracy and timing harness for trained classifiers and subpavings.

Ground truth always comes from the membership oracle. Test grids are kept
implicit (one axis per dimension) so that grids of ``10^7``-``10^8`` points
are streamed in chunks rather than materialised; for kernel models the
grid decision values are assembled from per-axis kernel tables with one
matrix product per chunk.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .geometry import OUTER, Box, Subpaving
from .models import ProblemSpec, membership_batch, problem_from_config
from .sampler import OasisConfig, OasisError, SamplingError, run_oasis
from .sivia import (DEFAULT_MAX_BOXES, BoxBudgetError, GridIndex, PointOutsideError, sivia_invert,
                    subpaving_classify, subpaving_classify_batch)
from .svm import SvmModel

log = logging.getLogger(__name__)

DEFAULT_POINT_BUDGET = 100_000_000
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
TIMING_CALLS = 10_000
_CHUNK = 1 << 20


class GridBudgetError(MemoryError):
    pass


@dataclass(frozen=True, eq=False)
class GridTestSet:
    """Cartesian grid given by its axes; point ``i`` follows C (row-major) order."""

    axes: tuple

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.shape[0] for a in self.axes)

    @property
    def resolution(self) -> int:
        return self.shape[0]

    def __len__(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def take(self, idx) -> np.ndarray:
        """Points at flat indices ``idx``."""
        sub = np.unravel_index(np.asarray(idx, dtype=np.int64), self.shape)
        return np.stack([a[s] for a, s in zip(self.axes, sub)], axis=-1)

    def chunks(self, size: int = _CHUNK):
        """Yield ``(start, points)`` blocks covering the grid in order."""
        n = len(self)
        for s in range(0, n, size):
            yield s, self.take(np.arange(s, min(n, s + size)))

    def points(self) -> np.ndarray:
        return self.take(np.arange(len(self)))

    @property
    def key(self) -> str:
        h = hashlib.sha1()
        for a in self.axes:
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]


def grid_testset(omega: Box, resolution: int, max_points: int = DEFAULT_POINT_BUDGET) -> GridTestSet:
    """Evenly spaced grid with ``resolution`` points per axis, endpoints included."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    total = float(resolution) ** omega.dim
    if total > max_points:
        raise GridBudgetError(f"{resolution}^{omega.dim} = {total:.3g} points exceeds the budget of {max_points}")
    return GridTestSet(tuple(np.linspace(lo, hi, resolution) for lo, hi in zip(omega.lo, omega.hi)))


# -- oracle labels -------------------------------------------------------------

_LABELS: dict = {}


def _spec_key(spec: ProblemSpec, testset: GridTestSet) -> str:
    text = json.dumps(spec.to_dict(), sort_keys=True) + testset.key
    return hashlib.sha1(text.encode()).hexdigest()[:20]


def oracle_labels(spec: ProblemSpec, testset, cache_dir=None, verify: int = 1000,
                  seed: int = 0) -> np.ndarray:
    """Membership labels for every test point, cached per (problem, grid).

    Cached labels (memory, then ``cache_dir``) are spot-checked against
    ``verify`` freshly computed entries before use.
    """
    if not isinstance(testset, GridTestSet):
        return membership_batch(spec, testset)
    key = _spec_key(spec, testset)
    labels = _LABELS.get(key)
    path = Path(cache_dir) / f"labels-{spec.name}-{key}.npy" if cache_dir is not None else None
    if labels is None and path is not None and path.exists():
        labels = np.unpackbits(np.load(path), count=len(testset)).astype(np.int8) * 2 - 1
    if labels is not None:
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, len(testset), size=min(verify, len(testset)))
        if not np.array_equal(labels[idx], membership_batch(spec, testset.take(idx))):
            log.warning("cached labels for %s failed verification; recomputing", spec.name)
            labels = None
    if labels is None:
        labels = np.empty(len(testset), dtype=np.int8)
        for s, X in testset.chunks():
            labels[s:s + X.shape[0]] = membership_batch(spec, X)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            np.save(path, np.packbits(labels > 0))
    _LABELS[key] = labels
    return labels


# -- prediction on grids -------------------------------------------------------

def _svm_grid_values(model: SvmModel, testset: GridTestSet) -> np.ndarray:
    """Decision values on a grid from separable per-axis kernel factors.

    ``exp(-|x - s|^2 / 2g^2)`` factorises over coordinates, so the axes are
    split into a leading and a trailing group, each group's factor is built
    as a row-wise Kronecker product of per-axis tables, and the grid block
    is ``(coef * A)^T @ B``.
    """
    S, c, g = model.support_points, model._dual, model.gamma
    tables = [np.exp(-(a[None, :] - S[:, j:j + 1]) ** 2 / (2.0 * g * g)) for j, a in enumerate(testset.axes)]

    def kron_rows(ts):
        out = np.ones((S.shape[0], 1))
        for t in ts:
            out = (out[:, :, None] * t[:, None, :]).reshape(S.shape[0], -1)
        return out

    d = testset.dim
    split = (d + 1) // 2
    B = kron_rows(tables[split:]) if split < d else np.ones((S.shape[0], 1))
    lead_shape = testset.shape[:split]
    n_lead = int(np.prod(lead_shape))
    out = np.empty((n_lead, B.shape[1]))
    rows = max(1, _CHUNK // max(1, B.shape[1]))
    idx = np.arange(n_lead)
    for s in range(0, n_lead, rows):
        sub = np.unravel_index(idx[s:s + rows], lead_shape)
        A = np.ones((S.shape[0], sub[0].shape[0]))
        for j, k in enumerate(sub):
            A *= tables[j][:, k]
        out[s:s + rows] = (A * c[:, None]).T @ B
    out += model.bias
    return out.ravel()


def predict_labels(classifier, testset, index: GridIndex | None = None) -> np.ndarray:
    if isinstance(classifier, SvmModel):
        if isinstance(testset, GridTestSet):
            return np.where(_svm_grid_values(classifier, testset) >= 0.0, 1, -1).astype(np.int8)
        return classifier.predict_batch(testset)
    if isinstance(classifier, Subpaving):
        if isinstance(testset, GridTestSet):
            out = np.empty(len(testset), dtype=np.int8)
            for s, X in testset.chunks():
                out[s:s + X.shape[0]] = subpaving_classify_batch(classifier, X, index)
            return out
        return subpaving_classify_batch(classifier, testset, index)
    raise TypeError(f"cannot evaluate a {type(classifier).__name__}")


def time_per_point(classifier, points: np.ndarray, calls: int = TIMING_CALLS, warmup: int = 200,
                   index: GridIndex | None = None) -> float:
    """Mean seconds per single-point query over ``calls`` queries after a warmup."""
    points = np.asarray(points, dtype=float)
    reps = int(math.ceil(calls / points.shape[0]))
    queue = np.tile(points, (reps, 1))[:calls]
    if isinstance(classifier, SvmModel):
        def query(x):
            return classifier.predict(x)
    elif index is not None:
        def query(x):
            code = index.lookup_point(x)
            if code < 0:
                raise PointOutsideError("point lies outside every box of the subpaving")
            return -1 if code == OUTER else 1
    else:
        def query(x):
            return subpaving_classify(classifier, x)
    for x in queue[:warmup]:
        query(x)
    t = time.perf_counter()
    for x in queue:
        query(x)
    return (time.perf_counter() - t) / queue.shape[0]


class Evaluation(NamedTuple):
    accuracy: float
    seconds_per_point: float


def evaluate_accuracy(classifier, spec: ProblemSpec, testset, *, timing_calls: int = TIMING_CALLS,
                      index: GridIndex | None = None, labels=None, cache_dir=None,
                      seed: int = 0) -> Evaluation:
    """Fraction of test points where the classifier agrees with the oracle.

    The per-point time comes from ``timing_calls`` single-point queries on
    test points drawn with ``seed``; oracle evaluation is not timed. Pass
    ``timing_calls=0`` to skip timing.
    """
    truth = oracle_labels(spec, testset, cache_dir) if labels is None else labels
    pred = predict_labels(classifier, testset, index)
    acc = float(np.mean(pred == truth))
    per_point = float("nan")
    if timing_calls > 0:
        n = len(testset)
        idx = np.random.default_rng(seed).integers(0, n, size=min(n, timing_calls))
        pts = testset.take(idx) if isinstance(testset, GridTestSet) else np.asarray(testset)[idx]
        per_point = time_per_point(classifier, pts, timing_calls, index=index)
    return Evaluation(acc, per_point)


# -- benchmark suite -----------------------------------------------------------

@dataclass
class BenchRow:
    problem: str
    method: str
    seed: int | None
    status: str
    accuracy: float = float("nan")
    train_seconds: float = float("nan")
    predict_us: float = float("nan")
    predict_index_us: float = float("nan")
    resolution: int = 0
    n_init: int = 0
    n_total: int = 0
    parameter: str = ""
    message: str = ""


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)

    def summary(self) -> list:
        """Mean and sample standard deviation of accuracy per (problem, method)."""
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r.problem, r.method), []).append(r)
        out = []
        for (problem, method), rows in groups.items():
            ok = [r.accuracy for r in rows if r.status == "ok"]
            acc = np.array(ok)
            out.append({
                "problem": problem, "method": method, "runs": len(rows), "ok": len(ok),
                "accuracy_mean": float(acc.mean()) if ok else float("nan"),
                "accuracy_std": float(acc.std(ddof=1)) if len(ok) > 1 else 0.0 if ok else float("nan"),
                "train_seconds_mean": float(np.mean([r.train_seconds for r in rows if r.status == "ok"]))
                if ok else float("nan"),
                "predict_us_mean": float(np.mean([r.predict_us for r in rows if r.status == "ok"]))
                if ok else float("nan"),
                "status": "ok" if len(ok) == len(rows) else ",".join(sorted({r.status for r in rows})),
            })
        return out

    def write_csv(self, path) -> None:
        names = list(BenchRow.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for r in self.rows:
                w.writerow([getattr(r, k) for k in names])

    def write_summary_csv(self, path) -> None:
        rows = self.summary()
        names = ["problem", "method", "runs", "ok", "accuracy_mean", "accuracy_std",
                 "train_seconds_mean", "predict_us_mean", "status"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=names)
            w.writeheader()
            w.writerows(rows)

    def format_table(self) -> str:
        lines = [f"{'problem':<16}{'method':<8}{'runs':>5}  {'accuracy':>18}  {'train s':>9}  {'pred us':>9}  status"]
        for s in self.summary():
            acc = f"{s['accuracy_mean']:.4f} +- {s['accuracy_std']:.4f}" if s["ok"] else "-"
            lines.append(f"{s['problem']:<16}{s['method']:<8}{s['runs']:>5}  {acc:>18}  "
                         f"{s['train_seconds_mean']:>9.2f}  {s['predict_us_mean']:>9.2f}  {s['status']}")
        return "\n".join(lines)


def _oasis_row(spec: ProblemSpec, cfg: OasisConfig, resolution: int, timing_calls: int,
               out_dir, cache_dir) -> BenchRow:
    row = BenchRow(spec.name, "oasis", cfg.rng_seed, "ok", resolution=resolution,
                   n_init=cfg.n_init, n_total=cfg.n_total)
    try:
        testset = grid_testset(spec.state_space, resolution)
        run = run_oasis(spec, cfg)
    except (OasisError, SamplingError) as exc:
        row.status, row.message = "run-error", str(exc)
        return row
    except MemoryError as exc:
        row.status, row.message = "resource-error", str(exc)
        return row
    ev = evaluate_accuracy(run.final_model, spec, testset, timing_calls=timing_calls,
                           cache_dir=cache_dir, seed=cfg.rng_seed)
    row.accuracy = ev.accuracy
    row.train_seconds = run.train_seconds
    row.predict_us = 1e6 * ev.seconds_per_point
    row.parameter = f"gamma={run.final_model.gamma:.6g}"
    if out_dir is not None:
        d = Path(out_dir) / spec.name / f"oasis-seed{cfg.rng_seed}"
        d.mkdir(parents=True, exist_ok=True)
        run.write_samples_csv(d / "samples.csv")
        run.write_log_csv(d / "log.csv")
        run.final_model.save(d / "model.json")
    return row


def _sivia_row(spec: ProblemSpec, sivia: tuple, resolution: int, timing_calls: int,
               out_dir, cache_dir) -> BenchRow:
    epsilon, max_boxes = sivia
    row = BenchRow(spec.name, "sivia", None, "ok", resolution=resolution, parameter=f"epsilon={epsilon:g}")
    try:
        testset = grid_testset(spec.state_space, resolution)
        t = time.perf_counter()
        sp = sivia_invert(spec, epsilon, max_boxes=max_boxes)
        row.train_seconds = time.perf_counter() - t
    except BoxBudgetError as exc:
        row.status, row.message = "resource-error", str(exc)
        return row
    except MemoryError as exc:
        row.status, row.message = "resource-error", str(exc)
        return row
    try:
        index = GridIndex(sp)
    except MemoryError:
        index = None
    # both lookups give identical labels; the index only makes large grids tractable
    ev = evaluate_accuracy(sp, spec, testset, timing_calls=0, index=index, cache_dir=cache_dir)
    row.accuracy = ev.accuracy
    if timing_calls > 0:
        pts = testset.take(np.random.default_rng(0).integers(0, len(testset), size=min(len(testset), timing_calls)))
        row.predict_us = 1e6 * time_per_point(sp, pts, timing_calls)
        if index is not None:
            row.predict_index_us = 1e6 * time_per_point(sp, pts, timing_calls, index=index)
    row.message = f"{sp.count()} boxes"
    if out_dir is not None:
        d = Path(out_dir) / spec.name
        d.mkdir(parents=True, exist_ok=True)
        sp.to_csv(d / "sivia-subpaving.csv")
    return row


@dataclass
class SuiteConfig:
    problems: list
    seeds: tuple = DEFAULT_SEEDS
    methods: tuple = ("oasis", "sivia")
    oasis: dict = field(default_factory=dict)
    sivia: dict = field(default_factory=dict)
    resolution: int | None = None
    timing_calls: int = TIMING_CALLS
    workers: int = 1
    out_dir: str | None = None
    cache_dir: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> SuiteConfig:
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown suite keys: {sorted(unknown)}")
        if "seeds" in d:
            d["seeds"] = tuple(int(s) for s in d["seeds"])
        if "methods" in d:
            d["methods"] = tuple(d["methods"])
            bad = set(d["methods"]) - {"oasis", "sivia"}
            if bad:
                raise ValueError(f"unknown methods: {sorted(bad)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def _job(kind, spec, arg, resolution, timing_calls, out_dir, cache_dir):
    if kind == "oasis":
        return _oasis_row(spec, arg, resolution, timing_calls, out_dir, cache_dir)
    return _sivia_row(spec, arg, resolution, timing_calls, out_dir, cache_dir)


def run_benchmark(suite: SuiteConfig | dict) -> BenchReport:
    """OASIS per seed and SIVIA once per problem; failures become report rows."""
    if isinstance(suite, dict):
        suite = SuiteConfig.from_dict(suite)
    jobs = []
    report = BenchReport()
    for entry in suite.problems:
        try:
            spec = problem_from_config(entry)
        except (ValueError, TypeError) as exc:
            report.rows.append(BenchRow(str(entry), "-", None, "config-error", message=str(exc)))
            continue
        res = suite.resolution or spec.defaults.get("resolution", 101)
        if "oasis" in suite.methods:
            base = {"n_init": spec.defaults.get("n_init", 100), "n_total": spec.defaults.get("n_total", 500)}
            base.update(suite.oasis)
            for seed in suite.seeds:
                cfg = OasisConfig.from_dict({**base, "rng_seed": seed})
                jobs.append(("oasis", spec, cfg, res))
        if "sivia" in suite.methods:
            if not spec.forward.has_inclusion:
                report.rows.append(BenchRow(spec.name, "sivia", None, "unsupported",
                                            message="model has no inclusion function"))
            else:
                eps = suite.sivia.get("epsilon", spec.defaults.get("sivia_epsilon", 0.05))
                budget = suite.sivia.get("max_boxes", DEFAULT_MAX_BOXES)
                jobs.append(("sivia", spec, (float(eps), int(budget)), res))
    args = [(k, s, a, r, suite.timing_calls, suite.out_dir, suite.cache_dir) for k, s, a, r in jobs]
    if suite.workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=suite.workers) as pool:
            rows = list(pool.map(_job, *zip(*args)))
    else:
        rows = [_job(*a) for a in args]
    report.rows.extend(rows)
    return report
