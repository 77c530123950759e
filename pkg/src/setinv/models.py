"""Forward models, target sets and the membership oracle.

A :class:`ProblemSpec` bundles a forward map ``F``, a target box ``U`` in
output space and a state-space box ``Omega``; the pre-image to recover is
``{x in Omega : F(x) in U}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from ._pycore import _lv_step
from .geometry import Box, Interval, add_arr, interval_add, interval_mul, interval_sq, mul_arr, sq_arr


class IntegrationError(ArithmeticError):
    """The ODE state became non-finite."""

    def __init__(self, time: float, message: str | None = None):
        self.time = float(time)
        super().__init__(message or f"non-finite Lotka-Volterra state at t={self.time:g}")


class UnsupportedModelError(TypeError):
    pass


class ForwardModel:
    name: str = ""
    input_dim: int
    output_dim: int = 1
    has_inclusion: bool = True

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        """Rows of ``X`` -> rows of ``F(X)``, shape ``(m, output_dim)``."""
        raise NotImplementedError

    def inclusion_arrays(self, lo: np.ndarray, hi: np.ndarray):
        raise UnsupportedModelError(f"model {self.name!r} has no inclusion function")

    def inclusion(self, b: Box) -> Box:
        raise UnsupportedModelError(f"model {self.name!r} has no inclusion function")

    def params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {"model": self.name, "params": self.params()}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


class Circle(ForwardModel):
    """``x^2 + y^2``"""

    name = "circle"
    input_dim = 2

    def evaluate_batch(self, X):
        return (X[:, 0] * X[:, 0] + X[:, 1] * X[:, 1])[:, None]

    def inclusion(self, b):
        return Box((interval_add(interval_sq(b[0]), interval_sq(b[1])),))

    def inclusion_arrays(self, lo, hi):
        l0, h0 = sq_arr(lo[:, 0], hi[:, 0])
        l1, h1 = sq_arr(lo[:, 1], hi[:, 1])
        l, h = add_arr(l0, h0, l1, h1)
        return l[:, None], h[:, None]


class DoughnutForm(ForwardModel):
    """``x^2 + y^2 + x*y``"""

    name = "doughnut-form"
    input_dim = 2

    def evaluate_batch(self, X):
        x, y = X[:, 0], X[:, 1]
        return (x * x + y * y + x * y)[:, None]

    def inclusion(self, b):
        s = interval_add(interval_sq(b[0]), interval_sq(b[1]))
        return Box((interval_add(s, interval_mul(b[0], b[1])),))

    def inclusion_arrays(self, lo, hi):
        l0, h0 = sq_arr(lo[:, 0], hi[:, 0])
        l1, h1 = sq_arr(lo[:, 1], hi[:, 1])
        l, h = add_arr(l0, h0, l1, h1)
        lm, hm = mul_arr(lo[:, 0], hi[:, 0], lo[:, 1], hi[:, 1])
        l, h = add_arr(l, h, lm, hm)
        return l[:, None], h[:, None]


class SphereKD(ForwardModel):
    """``sum_i x_i^2`` in ``k`` dimensions."""

    name = "sphere"

    def __init__(self, k: int):
        if int(k) != k or k < 1:
            raise ValueError("sphere dimension must be an integer >= 1")
        self.k = int(k)
        self.input_dim = self.k

    def params(self):
        return {"k": self.k}

    def evaluate_batch(self, X):
        return np.einsum("ij,ij->i", X, X)[:, None]

    def inclusion(self, b):
        acc = Interval(0.0, 0.0)
        for iv in b.intervals:
            acc = interval_add(acc, interval_sq(iv))
        return Box((acc,))

    def inclusion_arrays(self, lo, hi):
        l = np.zeros(lo.shape[0])
        h = np.zeros(lo.shape[0])
        for i in range(self.k):
            sl, sh = sq_arr(lo[:, i], hi[:, i])
            l, h = add_arr(l, h, sl, sh)
        return l[:, None], h[:, None]


@dataclass(frozen=True)
class LVParams:
    """Lotka-Volterra rates: prey birth, predation loss, predator death, predator gain."""

    p1: float
    p2: float
    p3: float
    p4: float

    def __post_init__(self):
        for k in ("p1", "p2", "p3", "p4"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")

    @property
    def equilibrium(self) -> tuple[float, float]:
        return self.p3 / self.p4, self.p1 / self.p2


@dataclass
class LVTrajectory:
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    min_prey: float
    grid_min_prey: float


def lv_rhs(p1, p2, p3, p4, u, v):
    return u * (p1 - p2 * v), -v * (p3 - p4 * u)


def lv_first_integral(p1, p2, p3, p4, u, v):
    """Conserved along exact trajectories: ``p4 u - p3 ln u + p2 v - p1 ln v``."""
    return p4 * u - p3 * np.log(u) + p2 * v - p1 * np.log(v)


def _check_step(T: float, dt: float) -> None:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not T >= dt:
        raise ValueError("horizon T must be at least dt")


def integrate_lv(params, u0: float, v0: float, T: float = 20.0, dt: float = 1e-2,
                 *, p2: float | None = None) -> LVTrajectory:
    """Fixed-step RK4 trajectory of the Lotka-Volterra system.

    ``params`` is an :class:`LVParams` or a ``(p1, p2, p3, p4)`` tuple; a
    tuple may hold ``p2 = 0`` (decoupled prey), which :class:`LVParams`
    rejects. The last step is shortened so the grid ends exactly at ``T``.

    ``min_prey`` is the prey minimum over ``[0, T]``: the grid minimum,
    refined inside the adjacent cell when the minimum is interior (see
    :func:`lv_min_prey`). ``grid_min_prey`` is the raw grid minimum.
    """
    if isinstance(params, LVParams):
        p1, p2_, p3, p4 = params.p1, params.p2, params.p3, params.p4
    else:
        p1, p2_, p3, p4 = (float(p) for p in params)
    _check_step(T, dt)
    n = max(1, math.ceil(T / dt - 1e-9))
    hlast = T - (n - 1) * dt
    t = np.empty(n + 1)
    u = np.empty(n + 1)
    v = np.empty(n + 1)
    t[0], u[0], v[0] = 0.0, float(u0), float(v0)
    uc, vc, tc = float(u0), float(v0), 0.0
    for i in range(n):
        h = dt if i < n - 1 else hlast
        uc, vc = _lv_step(p1, p2_, p3, p4, h, uc, vc)
        tc += h
        if not (math.isfinite(uc) and math.isfinite(vc)):
            raise IntegrationError(tc)
        t[i + 1], u[i + 1], v[i + 1] = tc, uc, vc
    mins, _ = lv_min_prey(np.array([[p2_, p4]]), p1=p1, p3=p3, u0=u0, v0=v0, T=T, dt=dt)
    return LVTrajectory(t, u, v, float(mins[0]), float(u.min()))


def lv_min_prey(x: np.ndarray, *, p1: float, p3: float, u0: float, v0: float,
                T: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Batched prey minimum for rows ``x = (p2, p4)``.

    Returns ``(minimum, fail_time)``; ``fail_time`` is NaN for rows that
    integrated cleanly.
    """
    _check_step(T, dt)
    x = np.ascontiguousarray(x, dtype=float)
    m = x.shape[0]
    return _backend.lv_min_prey(np.full(m, float(p1)), np.ascontiguousarray(x[:, 0]),
                                np.full(m, float(p3)), np.ascontiguousarray(x[:, 1]),
                                float(u0), float(v0), float(T), float(dt))


class LotkaVolterraMinPrey(ForwardModel):
    """Prey minimum over ``[0, T]`` as a function of ``(p2, p4)``."""

    name = "lotka-volterra-min-prey"
    input_dim = 2
    has_inclusion = False

    def __init__(self, p1=1.0, p3=1.0, u0=50.0, v0=50.0, T=20.0, dt=1e-2):
        if not (u0 > 0 and v0 > 0 and T > 0):
            raise ValueError("u0, v0 and T must be positive")
        _check_step(T, dt)
        self.p1, self.p3 = float(p1), float(p3)
        self.u0, self.v0 = float(u0), float(v0)
        self.T, self.dt = float(T), float(dt)

    def params(self):
        return {"p1": self.p1, "p3": self.p3, "u0": self.u0, "v0": self.v0, "T": self.T, "dt": self.dt}

    def with_dt(self, dt: float) -> LotkaVolterraMinPrey:
        kw = self.params()
        kw["dt"] = dt
        return LotkaVolterraMinPrey(**kw)

    def evaluate_batch(self, X):
        mins, fail = lv_min_prey(X, p1=self.p1, p3=self.p3, u0=self.u0, v0=self.v0, T=self.T, dt=self.dt)
        bad = np.flatnonzero(~np.isnan(fail))
        if bad.size:
            k = bad[0]
            raise IntegrationError(fail[k], f"non-finite state at t={fail[k]:g} for (p2, p4)={tuple(X[k])}")
        return mins[:, None]


_MODELS = {
    "circle": lambda **kw: Circle(),
    "doughnut-form": lambda **kw: DoughnutForm(),
    "sphere": lambda **kw: SphereKD(**kw),
    "lotka-volterra-min-prey": lambda **kw: LotkaVolterraMinPrey(**kw),
}


def make_model(name: str, params: dict | None = None) -> ForwardModel:
    try:
        factory = _MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(_MODELS)}") from None
    return factory(**(params or {}))


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    forward: ForwardModel
    target: Box
    state_space: Box
    defaults: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.state_space.dim != self.forward.input_dim:
            raise ValueError(f"state space has dimension {self.state_space.dim}, "
                             f"model expects {self.forward.input_dim}")
        if self.target.dim != self.forward.output_dim:
            raise ValueError("target box dimension does not match model output")
        if np.any(self.state_space.widths <= 0):
            raise ValueError("state space must have positive width in every dimension")

    @property
    def input_dim(self) -> int:
        return self.forward.input_dim

    @property
    def output_dim(self) -> int:
        return self.forward.output_dim

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            **self.forward.to_dict(),
            "target": self.target.to_list(),
            "state_space": self.state_space.to_list(),
        }


def _as_point(spec: ProblemSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != spec.input_dim:
        raise ValueError(f"expected a point of dimension {spec.input_dim}, got shape {x.shape}")
    return x


def _as_points(spec: ProblemSpec, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"expected points of dimension {spec.input_dim}, got shape {X.shape}")
    return np.ascontiguousarray(X)


def eval_forward(spec: ProblemSpec, x) -> np.ndarray:
    return spec.forward.evaluate_batch(_as_point(spec, x)[None, :])[0]


def eval_forward_batch(spec: ProblemSpec, X) -> np.ndarray:
    return spec.forward.evaluate_batch(_as_points(spec, X))


def eval_inclusion(spec: ProblemSpec, b: Box) -> Box:
    if b.dim != spec.input_dim:
        raise ValueError(f"box has dimension {b.dim}, model expects {spec.input_dim}")
    return spec.forward.inclusion(b)


def membership(spec: ProblemSpec, x) -> int:
    """+1 when ``F(x)`` lies in the closed target box, -1 otherwise."""
    return int(membership_batch(spec, _as_point(spec, x)[None, :])[0])


def membership_batch(spec: ProblemSpec, X) -> np.ndarray:
    Y = eval_forward_batch(spec, X)
    inside = np.all((Y >= spec.target.lo) & (Y <= spec.target.hi), axis=1)
    return np.where(inside, 1, -1).astype(np.int8)


# -- built-in problems ----------------------------------------------------------

LV_TARGET_UPPER = 1e6

# oscillating reference trajectory from (50, 50); its prey minimum is the start value
OSCILLATION_PARAMS = LVParams(1.0, 0.02, 1.5, 0.02)


def _sphere(k: int, half: float, r2: float, resolution: int, eps: float) -> ProblemSpec:
    return ProblemSpec(
        f"sphere-{k}d", SphereKD(k), Box.from_bounds([[0.0, r2]]), Box.cube(-half, half, k),
        defaults={"n_init": 100, "n_total": 500, "resolution": resolution, "sivia_epsilon": eps},
    )


def _builtin_table() -> dict:
    omega2 = Box.cube(-3.0, 3.0, 2)
    d2 = {"n_init": 100, "n_total": 500, "resolution": 601, "sivia_epsilon": 0.05}
    probs = {
        "circle": ProblemSpec("circle", Circle(), Box.from_bounds([[0.0, 2.0]]), omega2, dict(d2)),
        "ring": ProblemSpec("ring", Circle(), Box.from_bounds([[1.0, 2.0]]), omega2, dict(d2)),
        "doughnut": ProblemSpec("doughnut", DoughnutForm(), Box.from_bounds([[1.0, 2.0]]), omega2, dict(d2)),
        "sphere-3d": _sphere(3, 1.5, 0.5, 151, 0.1),
        "sphere-4d": _sphere(4, 1.0, 0.25, 41, 0.1),
    }
    for k, res in zip(range(5, 9), (31, 18, 12, 9)):
        probs[f"sphere-{k}d"] = _sphere(k, 0.75, 0.25, res, 0.05)
    probs["lotka-volterra"] = ProblemSpec(
        "lotka-volterra", LotkaVolterraMinPrey(p1=1.0, p3=1.0, u0=50.0, v0=50.0, T=20.0, dt=1e-2),
        Box.from_bounds([[10.0, LV_TARGET_UPPER]]), Box.cube(0.01, 0.1, 2),
        defaults={"n_init": 400, "n_total": 800, "resolution": 301},
    )
    return probs


BUILTIN_PROBLEMS = _builtin_table()


def builtin_problem(name: str) -> ProblemSpec:
    try:
        return BUILTIN_PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; built-ins: {sorted(BUILTIN_PROBLEMS)}") from None


def problem_from_config(cfg) -> ProblemSpec:
    """Resolve a problem from a name or an inline mapping.

    An inline mapping holds ``model``, optional ``params``, ``target`` and
    ``state_space`` (boxes as lists of ``[lo, hi]`` pairs). A mapping with
    ``name`` set to a built-in problem may override its boxes.
    """
    if isinstance(cfg, str):
        return builtin_problem(cfg)
    cfg = dict(cfg)
    base = BUILTIN_PROBLEMS.get(cfg.get("name", ""))
    if "model" in cfg:
        forward = make_model(cfg["model"], cfg.get("params"))
    elif base is not None:
        forward = base.forward
    else:
        raise ValueError("problem config needs a built-in 'name' or a 'model'")
    try:
        target = Box.from_bounds(cfg["target"]) if "target" in cfg else base.target
        omega = Box.from_bounds(cfg["state_space"]) if "state_space" in cfg else base.state_space
    except AttributeError:
        raise ValueError("inline problem config needs 'target' and 'state_space'") from None
    defaults = dict(base.defaults) if base is not None else {}
    defaults.update(cfg.get("defaults", {}))
    return ProblemSpec(cfg.get("name", forward.name), forward, target, omega, defaults)


def load_problem(path) -> ProblemSpec:
    cfg = json.loads(Path(path).read_text())
    return problem_from_config(cfg.get("problem", cfg))
