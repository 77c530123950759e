"""Active query synthesis for set inversion (OASIS).

Each iteration recalibrates the kernel width so the SVM separates every
labelled sample, draws a uniform point in the state space, projects it
onto the current decision boundary and asks the membership oracle for the
label of the projected point.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .models import ProblemSpec, membership_batch
from .optimizer import DegenerateGradientError, ProjectionOptions, nearest_point_on_manifold
from .svm import DEFAULT_L, CalibrationError, SvmModel, calibrate

log = logging.getLogger(__name__)

RANDOM = "random"
ACTIVE = "active"
FALLBACK = "fallback-random"

# half-octave width schedule; 60 steps span the same 2**30 range as 30 doublings
DEFAULT_GROWTH = 2.0 ** 0.5
DEFAULT_MAX_STEPS = 60


class SamplingError(RuntimeError):
    pass


class OasisError(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class LabeledSample:
    point: np.ndarray
    label: int
    origin: str
    iteration: int


# plain local SQP: each query only needs a nearby boundary point, not the globally nearest one
OASIS_PROJECTION = ProjectionOptions(segment_rounds=0, second_order=False)


@dataclass(frozen=True)
class OasisConfig:
    n_init: int = 100
    n_total: int = 500
    rng_seed: int = 0
    gamma0: float | None = None
    growth: float = DEFAULT_GROWTH
    max_steps: int = DEFAULT_MAX_STEPS
    box_bound: float = DEFAULT_L
    projection: ProjectionOptions = OASIS_PROJECTION
    duplicate_tol: float = 1e-10

    def __post_init__(self):
        if not 1 <= self.n_init <= self.n_total:
            raise ValueError("need 1 <= n_init <= n_total")
        if self.gamma0 is not None and not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if not self.growth > 1:
            raise ValueError("growth must exceed 1")

    @classmethod
    def from_dict(cls, d: dict) -> OasisConfig:
        d = dict(d)
        proj = d.pop("projection", None)
        if proj is not None:
            d["projection"] = replace(OASIS_PROJECTION, **proj)
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterationRecord:
    iteration: int
    gamma: float
    direction: str
    widths_tried: int
    residual: float
    projection_iterations: int
    origin: str
    fallback_reason: str
    train_ms: float
    project_ms: float


@dataclass
class OasisRun:
    spec: ProblemSpec
    config: OasisConfig
    samples: list
    final_model: SvmModel | None
    log: list
    train_seconds: float = 0.0
    wall_seconds: float = 0.0

    @property
    def points(self) -> np.ndarray:
        return np.array([s.point for s in self.samples])

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int8)

    @property
    def origins(self) -> np.ndarray:
        return np.array([s.origin for s in self.samples])

    def write_samples_csv(self, path) -> None:
        d = self.spec.input_dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(d)] + ["label", "origin", "iteration"])
            for s in self.samples:
                w.writerow([repr(float(v)) for v in s.point] + [s.label, s.origin, s.iteration])

    def write_log_csv(self, path) -> None:
        names = list(IterationRecord.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for rec in self.log:
                w.writerow([getattr(rec, k) for k in names])


def default_gamma0(spec: ProblemSpec) -> float:
    return 0.1 * spec.state_space.diameter


def sample_initial(spec: ProblemSpec, n_init: int, rng: np.random.Generator) -> list:
    """Uniform random points in the state space with oracle labels.

    If the first ``n_init`` draws carry a single label, further single
    draws are made (up to ``100 * n_init`` in total) until the missing
    label turns up; that point replaces the newest of the original draws.
    """
    if n_init < 1:
        raise ValueError("n_init must be at least 1")
    lo, hi = spec.state_space.lo, spec.state_space.hi
    X = rng.uniform(lo, hi, size=(n_init, spec.input_dim))
    y = membership_batch(spec, X)
    if n_init == 1 or ((y > 0).any() and (y < 0).any()):
        pass
    else:
        missing = -int(y[0])
        budget = 100 * n_init - n_init
        found = None
        block = max(1, n_init)
        while budget > 0 and found is None:
            m = min(block, budget)
            Z = rng.uniform(lo, hi, size=(m, spec.input_dim))
            z = membership_batch(spec, Z)
            hit = np.flatnonzero(z == missing)
            if hit.size:
                found = Z[hit[0]]
            budget -= m
        if found is None:
            raise SamplingError(
                f"only label {int(y[0]):+d} found in {100 * n_init} uniform draws; "
                "the target set may be empty or negligible in the state space")
        X[-1] = found
        y[-1] = missing
    return [LabeledSample(X[i].copy(), int(y[i]), RANDOM, 0) for i in range(n_init)]


def _sq_dist_rows(X: np.ndarray, x: np.ndarray) -> np.ndarray:
    diff = X - x
    return np.einsum("ij,ij->i", diff, diff)


def run_oasis(spec: ProblemSpec, config: OasisConfig, rng: np.random.Generator | None = None) -> OasisRun:
    t_start = time.perf_counter()
    rng = np.random.default_rng(config.rng_seed) if rng is None else rng
    omega = spec.state_space
    s, N = spec.input_dim, config.n_total
    gamma0 = config.gamma0 if config.gamma0 is not None else default_gamma0(spec)

    samples = sample_initial(spec, config.n_init, rng)
    X = np.zeros((N, s))
    y = np.zeros(N)
    D2 = np.zeros((N, N))
    beta = np.zeros(N)
    n = len(samples)
    for i, smp in enumerate(samples):
        X[i] = smp.point
        y[i] = smp.label
    for i in range(n):
        D2[i, :n] = _sq_dist_rows(X[:n], X[i])

    records = []
    run = OasisRun(spec, config, samples, None, records)
    incumbent = None
    train_total = 0.0

    def fit_current():
        nonlocal incumbent, train_total
        t = time.perf_counter()
        try:
            cal = calibrate(X[:n], y[:n], gamma0, config.growth, config.max_steps, config.box_bound,
                            incumbent=incumbent, beta0=beta[:n], sqdist=D2[:n, :n])
        except CalibrationError as exc:
            raise OasisError(f"kernel calibration failed with {n} samples: {exc}", run) from exc
        dt = time.perf_counter() - t
        train_total += dt
        incumbent = cal.gamma
        beta[:n] = cal.solution.beta
        return cal, dt

    iteration = 0
    while n < N:
        iteration += 1
        cal, t_train = fit_current()
        x0 = rng.uniform(omega.lo, omega.hi)
        t = time.perf_counter()
        reason = ""
        try:
            res = nearest_point_on_manifold(cal.model, x0, omega, config.projection)
        except DegenerateGradientError:
            res = None
            reason = "degenerate-gradient"
        t_proj = time.perf_counter() - t
        if res is not None and res.converged:
            x = res.point
            origin = ACTIVE
            if np.sqrt(_sq_dist_rows(X[:n], x).min()) <= config.duplicate_tol:
                x, origin, reason = x0, FALLBACK, "duplicate"
        else:
            x, origin = x0, FALLBACK
            reason = reason or "not-converged"
        label = int(membership_batch(spec, x[None, :])[0])
        X[n] = x
        y[n] = label
        d2 = _sq_dist_rows(X[:n], x)
        D2[n, :n] = d2
        D2[:n, n] = d2
        beta[n] = 0.0
        n += 1
        samples.append(LabeledSample(x.copy(), label, origin, iteration))
        records.append(IterationRecord(
            iteration, cal.gamma, cal.direction, len(cal.tried),
            res.residual if res is not None else float("nan"),
            res.iterations if res is not None else 0,
            origin, reason, 1e3 * t_train, 1e3 * t_proj))
        if reason:
            log.debug("iteration %d: fallback (%s)", iteration, reason)

    cal, _ = fit_current()
    run.final_model = cal.model
    run.train_seconds = train_total
    run.wall_seconds = time.perf_counter() - t_start
    return run
