"""Gaussian-kernel SVM: dual training, decision function and width calibration.

The kernel is ``exp(-|x - y|^2 / (2 gamma^2))``; ``gamma`` is a width, so a
smaller value gives a more flexible decision boundary.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend

log = logging.getLogger(__name__)

DEFAULT_L = 1e6
KKT_TOL = 1e-6
KERNEL_CACHE_LIMIT = 4096


class ConvergenceError(RuntimeError):
    def __init__(self, kkt_violation: float, iterations: int):
        self.kkt_violation = float(kkt_violation)
        self.iterations = int(iterations)
        super().__init__(f"dual solver stopped after {iterations} iterations "
                         f"with KKT violation {kkt_violation:.3g}")


class CalibrationError(RuntimeError):
    def __init__(self, best_error: float, tried: list):
        self.best_error = float(best_error)
        self.tried = tried
        super().__init__(f"no kernel width in the schedule separates the data "
                         f"(best training error {best_error:.4g} over {len(tried)} widths)")


def rbf_kernel(x, y, gamma: float) -> float:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("points must have the same dimension")
    d = x - y
    return float(np.exp(-np.dot(d, d) / (2.0 * gamma * gamma)))


def squared_distances(A, B=None) -> np.ndarray:
    """Pairwise squared distances from explicit differences.

    The ``|a|^2 + |b|^2 - 2 a.b`` shortcut loses most digits for the nearly
    coincident opposite-label pairs that active sampling produces.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    out = np.empty((A.shape[0], B.shape[0]))
    step = max(1, 4_000_000 // max(1, B.shape[0] * A.shape[1]))
    for s in range(0, A.shape[0], step):
        diff = A[s:s + step, None, :] - B[None, :, :]
        out[s:s + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def kernel_matrix(A, B=None, gamma: float = 1.0, sqdist=None) -> np.ndarray:
    d2 = squared_distances(A, B) if sqdist is None else sqdist
    return np.exp(-d2 / (2.0 * gamma * gamma))


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Trained decision function ``psi(x) = b + sum_k beta_k y_k K(x_k, x)``.

    Only points with ``beta_k > 0`` are kept.
    """

    support_points: np.ndarray
    support_labels: np.ndarray
    coefficients: np.ndarray
    bias: float
    gamma: float
    box_bound: float = DEFAULT_L
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(self.support_points, dtype=float)))
        object.__setattr__(self, "support_points", pts)
        object.__setattr__(self, "support_labels", np.asarray(self.support_labels, dtype=float))
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=float))
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "_dual", np.ascontiguousarray(self.coefficients * self.support_labels))

    @property
    def input_dim(self) -> int:
        return self.support_points.shape[1]

    @property
    def n_support(self) -> int:
        return self.support_points.shape[0]

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"expected dimension {self.input_dim}, got {x.shape[-1]}")
        return x

    def decision_values(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(self._check(X)))
        return _backend.rbf_decision(X, self.support_points, self._dual, self.bias, self.gamma)

    def decision_value(self, x) -> float:
        x = self._check(x)
        if x.ndim != 1:
            raise ValueError("expected a single point")
        return float(self.decision_values(x[None, :])[0])

    def predict_batch(self, X) -> np.ndarray:
        return np.where(self.decision_values(X) >= 0.0, 1, -1).astype(np.int8)

    def predict(self, x) -> int:
        return 1 if self.decision_value(x) >= 0.0 else -1

    def value_and_gradient(self, x) -> tuple[float, np.ndarray]:
        x = self._check(x)
        diff = self.support_points - x
        w = self._dual * np.exp(-np.einsum("ij,ij->i", diff, diff) / (2.0 * self.gamma ** 2))
        return self.bias + float(w.sum()), (w @ diff) / self.gamma ** 2

    def gradient(self, x) -> np.ndarray:
        return self.value_and_gradient(x)[1]

    def hessian(self, x) -> np.ndarray:
        """``sum_k beta_k y_k K_k ((x_k - x)(x_k - x)^T / g^4 - I / g^2)``."""
        x = self._check(x)
        diff = self.support_points - x
        g2 = self.gamma ** 2
        w = self._dual * np.exp(-np.einsum("ij,ij->i", diff, diff) / (2.0 * g2))
        return (diff.T * w) @ diff / (g2 * g2) - (w.sum() / g2) * np.eye(x.shape[0])

    def negated(self) -> SvmModel:
        return SvmModel(self.support_points, -self.support_labels, self.coefficients, -self.bias,
                        self.gamma, self.box_bound, dict(self.info))

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "bias": self.bias,
            "box_bound": self.box_bound,
            "support_points": self.support_points.tolist(),
            "support_labels": self.support_labels.astype(int).tolist(),
            "coefficients": self.coefficients.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SvmModel:
        return cls(np.array(d["support_points"], dtype=float), np.array(d["support_labels"], dtype=float),
                   np.array(d["coefficients"], dtype=float), d["bias"], d["gamma"],
                   d.get("box_bound", DEFAULT_L))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> SvmModel:
        return cls.from_dict(json.loads(Path(path).read_text()))


def decision_value(model: SvmModel, x) -> float:
    return model.decision_value(x)


def predict(model: SvmModel, x) -> int:
    return model.predict(x)


def decision_gradient(model: SvmModel, x) -> np.ndarray:
    return model.gradient(x)


@dataclass
class DualSolution:
    beta: np.ndarray
    bias: float
    gap: float
    iterations: int


def _exact_gradient(y, beta, K=None, X=None, gamma=1.0):
    w = beta * y
    if K is not None:
        return y * (K @ w) - 1.0
    nz = np.flatnonzero(beta)
    out = np.empty(y.shape[0])
    step = 1024
    for s in range(0, y.shape[0], step):
        Kc = kernel_matrix(X[s:s + step], X[nz], gamma)
        out[s:s + step] = y[s:s + step] * (Kc @ w[nz]) - 1.0
    return out


def _gap(y, beta, G, L):
    score = -y * G
    pos = y > 0
    up = np.where(pos, beta < L, beta > 0)
    low = np.where(pos, beta > 0, beta < L)
    if not up.any() or not low.any():
        return 0.0
    return float(score[up].max() - score[low].min())


def _bias(y, beta, G, L):
    free = (beta > 0) & (beta < L)
    if free.any():
        return float(np.mean(-y[free] * G[free]))
    # no free vectors: midpoint of the feasible range for b
    score = -y * G
    pos = y > 0
    up = np.where(pos, beta < L, beta > 0)
    low = np.where(pos, beta > 0, beta < L)
    hi = score[up].max() if up.any() else score[low].min()
    lo = score[low].min() if low.any() else score[up].max()
    return float(0.5 * (hi + lo))


def solve_dual(y, L: float, *, K=None, X=None, gamma: float = 1.0, beta0=None,
               tol: float = KKT_TOL, max_iter: int | None = None) -> DualSolution:
    """Maximise the SVM dual by pairwise coordinate ascent.

    The solver runs in growing chunks. After each chunk the gradient is
    recomputed exactly, and the equality-constrained KKT system on the
    current free set is solved directly; that polished point is accepted
    when it stays feasible and closes the KKT gap. Near-singular kernel
    matrices (hard margin, clustered samples) otherwise need ``O(10^6)``
    pair updates to reach the tolerance.
    """
    y = np.ascontiguousarray(y, dtype=float)
    n = y.shape[0]
    beta = np.zeros(n) if beta0 is None else np.array(beta0, dtype=float)
    if beta.shape != (n,):
        raise ValueError("warm start has the wrong length")
    np.clip(beta, 0.0, L, out=beta)
    if abs(beta @ y) > 1e-8 * max(1.0, beta.max(initial=0.0)):
        beta = np.zeros(n)
    if max_iter is None:
        max_iter = max(1_000_000, 1000 * n)
    total = 0
    gap = np.inf
    chunk = max(1000, 20 * n)
    G = None
    while True:
        it, _, _ = _backend.smo_solve(y, beta, float(L), float(tol), int(min(chunk, max_iter - total)),
                                      K=K, X=X, gamma=float(gamma))
        total += it
        G = _exact_gradient(y, beta, K, X, gamma)
        gap = _gap(y, beta, G, L)
        if gap <= tol:
            break
        polished = _polish(y, beta, L, K, X, gamma)
        if polished is not None:
            Gp = _exact_gradient(y, polished, K, X, gamma)
            gp = _gap(y, polished, Gp, L)
            if gp <= tol:
                beta, G, gap = polished, Gp, gp
                break
        if total >= max_iter:
            break
        chunk *= 2
    if gap > tol:
        raise ConvergenceError(gap, total)
    return DualSolution(beta, _bias(y, beta, G, L), gap, total)


def _polish(y, beta, L, K=None, X=None, gamma=1.0):
    """Solve the KKT equalities on the free set; ``None`` if infeasible."""
    free = np.flatnonzero((beta > 0) & (beta < L))
    if free.size == 0 or free.size > 2000:
        return None
    bound = np.flatnonzero(beta >= L)
    if K is not None:
        KF = K[np.ix_(free, free)]
        KB = K[np.ix_(free, bound)]
    else:
        KF = kernel_matrix(X[free], gamma=gamma)
        KB = kernel_matrix(X[free], X[bound], gamma) if bound.size else np.zeros((free.size, 0))
    m = free.size
    A = np.zeros((m + 1, m + 1))
    A[:m, :m] = KF
    A[:m, m] = 1.0
    A[m, :m] = 1.0
    wB = L * y[bound]
    rhs = np.empty(m + 1)
    rhs[:m] = y[free] - KB @ wB
    rhs[m] = -wB.sum()
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    bF = y[free] * sol[:m]
    if np.any(bF < 0.0) or np.any(bF > L):
        return None
    out = beta.copy()
    out[free] = bF
    return out


def _validate(samples, labels):
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(samples, dtype=float)))
    y = np.asarray(labels, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("samples and labels differ in length")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +1 or -1")
    if not ((y > 0).any() and (y < 0).any()):
        raise ValueError("training data must contain both labels")
    uniq, inv = np.unique(X, axis=0, return_inverse=True)
    if uniq.shape[0] < X.shape[0]:
        inv = inv.ravel()
        lo = np.full(uniq.shape[0], 2.0)
        hi = np.full(uniq.shape[0], -2.0)
        np.minimum.at(lo, inv, y)
        np.maximum.at(hi, inv, y)
        if np.any(lo != hi):
            raise ValueError("identical points carry conflicting labels")
    return X, y


def fit(samples, labels, gamma: float, L: float = DEFAULT_L, *, beta0=None, sqdist=None,
        tol: float = KKT_TOL, max_iter: int | None = None, validate: bool = True):
    """Train and return ``(model, solution)``; ``solution.beta`` covers every sample."""
    if not gamma > 0 or not L > 0:
        raise ValueError("gamma and L must be positive")
    if validate:
        X, y = _validate(samples, labels)
    else:
        X, y = samples, labels
    n = X.shape[0]
    if n <= KERNEL_CACHE_LIMIT:
        K = kernel_matrix(X, gamma=gamma, sqdist=sqdist)
        sol = solve_dual(y, L, K=K, gamma=gamma, beta0=beta0, tol=tol, max_iter=max_iter)
    else:
        sol = solve_dual(y, L, X=X, gamma=gamma, beta0=beta0, tol=tol, max_iter=max_iter)
    sv = sol.beta > 0
    model = SvmModel(X[sv], y[sv], sol.beta[sv], sol.bias, gamma, L,
                     info={"kkt_gap": sol.gap, "iterations": sol.iterations})
    return model, sol


def train_svm(samples, labels, gamma: float, L: float = DEFAULT_L, **kw) -> SvmModel:
    return fit(samples, labels, gamma, L, **kw)[0]


def training_error(model: SvmModel, samples, labels) -> float:
    pred = model.predict_batch(samples)
    return float(np.mean(pred != np.asarray(labels)))


@dataclass
class Calibration:
    gamma: float
    model: SvmModel
    solution: DualSolution
    direction: str
    tried: list


def calibrate(samples, labels, gamma0: float, growth: float = 2.0, max_steps: int = 30,
              L: float = DEFAULT_L, *, incumbent: float | None = None, beta0=None, sqdist=None,
              patience: int = 4, tol: float = KKT_TOL, max_iter: int | None = None) -> Calibration:
    """Find a kernel width on the schedule ``gamma0 * growth**i`` with zero training error.

    ``incumbent`` (if given) is tried first. Otherwise ``gamma0`` is tried,
    then one step each way; the scan continues in whichever direction gave
    the lower error (ties go to narrower kernels) and switches to the other
    side once the error has not improved for ``patience`` steps.
    """
    if not gamma0 > 0 or not growth > 1:
        raise ValueError("need gamma0 > 0 and growth > 1")
    X, y = _validate(samples, labels)
    if sqdist is None and X.shape[0] <= KERNEL_CACHE_LIMIT:
        sqdist = squared_distances(X)
    tried = []
    warm = [beta0]

    def attempt(g):
        try:
            model, sol = fit(X, y, g, L, beta0=warm[0], sqdist=sqdist, tol=tol,
                             max_iter=max_iter, validate=False)
        except ConvergenceError as exc:
            tried.append((g, None))
            log.debug("width %.4g: solver did not converge (%s)", g, exc)
            return None, None, np.inf
        warm[0] = sol.beta
        err = training_error(model, X, y)
        tried.append((g, err))
        return model, sol, err

    if incumbent is not None:
        model, sol, err = attempt(incumbent)
        if err == 0.0:
            return Calibration(incumbent, model, sol, "incumbent", tried)
    model, sol, err = attempt(gamma0)
    if err == 0.0:
        return Calibration(gamma0, model, sol, "start", tried)

    best = err
    probes = {}
    for name, factor in (("narrow", 1.0 / growth), ("wide", growth)):
        g = gamma0 * factor
        model, sol, e = attempt(g)
        if e == 0.0:
            return Calibration(g, model, sol, name, tried)
        probes[name] = e
        best = min(best, e)
    order = ["narrow", "wide"] if probes["narrow"] <= probes["wide"] else ["wide", "narrow"]
    for name in order:
        factor = 1.0 / growth if name == "narrow" else growth
        local_best = probes[name]
        stale = 0
        for i in range(2, max_steps + 1):
            g = gamma0 * factor ** i
            model, sol, e = attempt(g)
            if e == 0.0:
                return Calibration(g, model, sol, name, tried)
            best = min(best, e)
            if e < local_best:
                local_best, stale = e, 0
            else:
                stale += 1
                if stale >= patience:
                    break
    raise CalibrationError(best, tried)


def calibrate_gamma(samples, labels, gamma0: float, growth: float = 2.0, max_steps: int = 30,
                    L: float = DEFAULT_L, **kw) -> tuple[float, SvmModel]:
    cal = calibrate(samples, labels, gamma0, growth, max_steps, L, **kw)
    return cal.gamma, cal.model
