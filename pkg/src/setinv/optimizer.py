"""Nearest point on the zero set of a decision function.

Solves ``min |x - x0|  s.t.  psi(x) = 0`` by SQP with a single equality
constraint. The local model uses the identity as Hessian (the exact
Hessian of ``0.5 |x - x0|^2``, constraint curvature dropped), so every
iteration is the closed-form solution of a bordered ``(n+1) x (n+1)`` KKT
system. Steps are globalised with an l1 merit function and Armijo
backtracking, and iterates are clamped to the state-space box.

``max_step`` optionally caps the step length (a crude trust region); it
is off by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Box


class DegenerateGradientError(ArithmeticError):
    def __init__(self, point):
        self.point = np.asarray(point, dtype=float)
        super().__init__(f"decision gradient vanishes at {self.point.tolist()}")


@dataclass(frozen=True)
class ProjectionOptions:
    residual_tol: float = 1e-6
    angle_tol: float = 1e-3
    max_iter: int = 100
    restarts: int = 3
    stall_iters: int = 10
    perturbation: float = 1e-3
    grad_tol: float = 1e-12
    seed: int = 0
    max_step: float | None = None
    restoration: bool = False
    segment_samples: int = 32
    segment_rounds: int = 3
    second_order: bool = True
    escape_step: float = 0.1
    max_escapes: int = 5


@dataclass
class ProjectionResult:
    point: np.ndarray
    distance: float
    residual: float
    iterations: int
    converged: bool
    clamped: bool = False
    restarts: int = 0


def _angle(d: np.ndarray, g: np.ndarray) -> float:
    nd, ng = np.linalg.norm(d), np.linalg.norm(g)
    if nd == 0.0 or ng == 0.0:
        return 0.0
    c = min(1.0, abs(float(d @ g)) / (nd * ng))
    return math.acos(c)


def _on_boundary(x: np.ndarray, omega: Box) -> bool:
    return bool(np.any((x <= omega.lo) | (x >= omega.hi)))


def _bisect_to_zero(model, a, fa, b, tol, max_iter=200):
    """Point on the segment ``[a, b]`` with ``|psi| <= tol``; ``fa``, ``psi(b)`` differ in sign."""
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        if np.array_equal(m, a) or np.array_equal(m, b):
            break
        fm = model.value_and_gradient(m)[0]
        if abs(fm) <= tol:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return None


def _escape_direction(model, x, d, g, tol=1e-6):
    """Tangent direction of negative curvature of ``|x - x0|^2 / 2`` on the zero set, if any.

    At a first-order point ``d + lam g = 0``; the point is a local minimum
    of the distance only if ``I + lam H`` is positive semidefinite on the
    tangent space ``g^perp``.
    """
    hess = getattr(model, "hessian", None)
    n = x.shape[0]
    if hess is None or n < 2:
        return None
    gn2 = float(g @ g)
    lam = -float(d @ g) / gn2
    M = np.eye(n) + lam * hess(x)
    # orthonormal tangent basis: drop the gradient direction from a QR of [g, I]
    Q = np.linalg.qr(np.column_stack([g, np.eye(n)]))[0][:, 1:n]
    vals, vecs = np.linalg.eigh(Q.T @ M @ Q)
    if vals[0] >= -tol:
        return None
    return Q @ vecs[:, 0]


def _closer_zero(model, x0, psi0, x, n, tol):
    """A zero of psi on the segment ``[x0, x)`` closer to ``x0`` than ``x``, if psi changes sign there."""
    if n < 2 or psi0 == 0.0:
        return None
    prev = x0
    for k in range(1, n):
        z = x0 + (k / n) * (x - x0)
        fz = model.value_and_gradient(z)[0]
        if abs(fz) <= tol:
            return z
        if (fz > 0) != (psi0 > 0):
            return _bisect_to_zero(model, prev, psi0, z, tol)
        prev = z
    return None


def nearest_point_on_manifold(model, x0, omega: Box, opts: ProjectionOptions | None = None,
                              anchors=None) -> ProjectionResult:
    """Locally nearest point to ``x0`` on ``{model.value_and_gradient(x)[0] == 0}``.

    Converged results satisfy ``|psi| <= residual_tol`` and, unless an
    iterate sits on the boundary of ``omega``, ``x - x0`` is parallel to
    the gradient within ``angle_tol`` radians.

    A first-order point at which the distance is not locally minimal
    along the zero set (checked through the model's ``hessian``) is left
    for the closer zero on the segment back to ``x0`` if psi changes sign
    there, otherwise along a direction of negative curvature, and SQP
    continues.

    SQP is run from ``x0``, then from up to ``restarts`` random
    perturbations of it. A converged point is then checked against the
    segment back to ``x0``: if psi changes sign on it, a strictly closer
    zero exists, and SQP is restarted from that zero (``segment_rounds``
    times at most, probing ``segment_samples`` points each time). With ``opts.restoration`` set, a last phase
    bisects the segment from ``x0`` towards the nearest few ``anchors`` on
    the other side of the zero set (the support vectors, by default) and
    restarts SQP from each zero found.

    Raises
    ------
    DegenerateGradientError
        Every attempt stopped at an infeasible iterate with gradient norm
        below ``grad_tol``.
    """
    opts = opts or ProjectionOptions()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (omega.dim,):
        raise ValueError(f"x0 must have dimension {omega.dim}")
    rng = np.random.default_rng(opts.seed)
    lo, hi = omega.lo, omega.hi
    scale = opts.perturbation * omega.diameter
    cap = math.inf if opts.max_step is None else float(opts.max_step)
    if anchors is None:
        anchors = getattr(model, "support_points", None)

    state = {"total": 0, "best": None, "degenerate": None}
    psi_x0 = model.value_and_gradient(x0)[0]

    def keep(cand):
        best = state["best"]
        if best is None or cand.residual < best.residual:
            state["best"] = cand

    def sqp(x, attempt):
        mu = 0.0
        stall = 0
        escapes = 0
        for _ in range(opts.max_iter):
            state["total"] += 1
            psi, g = model.value_and_gradient(x)
            d = x - x0
            gn2 = float(g @ g)
            on_bd = _on_boundary(x, omega)
            if abs(psi) <= opts.residual_tol:
                ok = on_bd or _angle(d, g) <= opts.angle_tol
                cand = ProjectionResult(x.copy(), float(np.linalg.norm(d)), abs(psi),
                                        state["total"], ok, on_bd, attempt)
                if ok and not on_bd and opts.second_order:
                    t = _escape_direction(model, x, d, g)
                    if t is not None:
                        # first-order point that is not a local minimum of the distance
                        cand.converged = ok = False
                        if escapes < opts.max_escapes:
                            escapes += 1
                            keep(cand)
                            z = _closer_zero(model, x0, psi_x0, x, opts.segment_samples, opts.residual_tol)
                            if z is None:
                                z = np.minimum(np.maximum(x + opts.escape_step * cand.distance * t, lo), hi)
                            x = z
                            # the penalty weight from earlier far-off steps would stall the line search
                            mu, stall = 0.0, 0
                            continue
                if ok:
                    return cand
                keep(cand)
            if math.sqrt(gn2) < opts.grad_tol:
                state["degenerate"] = x.copy()
                return None

            # bordered KKT system [I g; g^T 0][p; lam] = [-d; -psi]
            lam = (psi - float(g @ d)) / gn2
            p = -d - lam * g
            shrink = 1.0
            pn = math.sqrt(float(p @ p))
            if pn > cap:
                shrink = cap / pn
                p *= shrink
            mu = max(mu, 2.0 * abs(lam) + 1e-12)
            merit0 = 0.5 * float(d @ d) + mu * abs(psi)
            slope = float(d @ p) - shrink * mu * abs(psi)
            alpha = 1.0
            accepted = False
            for _ in range(40):
                xt = np.minimum(np.maximum(x + alpha * p, lo), hi)
                psit = model.value_and_gradient(xt)[0]
                dt = xt - x0
                merit = 0.5 * float(dt @ dt) + mu * abs(psit)
                if merit <= merit0 + 1e-4 * alpha * min(slope, 0.0):
                    accepted = True
                    break
                alpha *= 0.5
            if accepted and merit < merit0 - 1e-15 * max(1.0, merit0):
                stall = 0
            else:
                stall += 1
            if np.array_equal(xt, x) and not accepted:
                stall = opts.stall_iters
            x = xt
            if stall >= opts.stall_iters:
                break
        psi = model.value_and_gradient(x)[0]
        keep(ProjectionResult(x.copy(), float(np.linalg.norm(x - x0)), abs(psi), state["total"],
                              False, _on_boundary(x, omega), attempt))
        return None

    def shorten(res):
        # a sign change between x0 and the result means a strictly closer zero
        for _ in range(opts.segment_rounds):
            z = _closer_zero(model, x0, psi_x0, res.point, opts.segment_samples, opts.residual_tol)
            if z is None:
                break
            nxt = sqp(z, res.restarts)
            if nxt is None or nxt.distance >= res.distance:
                break
            res = nxt
        return res

    res = sqp(x0.copy(), 0)
    if res is not None:
        return shorten(res)
    attempt = 0
    for _ in range(opts.restarts):
        attempt += 1
        start = np.minimum(np.maximum(x0 + scale * rng.standard_normal(x0.shape[0]), lo), hi)
        res = sqp(start, attempt)
        if res is not None:
            return shorten(res)

    if opts.restoration and anchors is not None and len(anchors):
        A = np.asarray(anchors, dtype=float)
        psi0 = model.value_and_gradient(x0)[0]
        if psi0 != 0.0:
            side = np.array([model.value_and_gradient(a)[0] for a in A])
            other = np.flatnonzero((side > 0) != (psi0 > 0))
            order = other[np.argsort(np.einsum("ij,ij->i", A[other] - x0, A[other] - x0))]
            for k in order[:opts.restarts]:
                z = _bisect_to_zero(model, x0, psi0, A[k], opts.residual_tol)
                if z is None:
                    continue
                attempt += 1
                res = sqp(z, attempt)
                if res is not None:
                    return shorten(res)

    if state["best"] is None:
        raise DegenerateGradientError(state["degenerate"])
    return state["best"]
