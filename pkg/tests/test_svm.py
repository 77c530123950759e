import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from setinv.svm import (
    CalibrationError,
    ConvergenceError,
    SvmModel,
    calibrate,
    calibrate_gamma,
    decision_gradient,
    decision_value,
    fit,
    kernel_matrix,
    predict,
    rbf_kernel,
    squared_distances,
    train_svm,
    training_error,
)


def kkt_violations(model, beta, X, y, L):
    """Per-sample violation of the hard/soft margin conditions at the returned bias."""
    m = y * model.decision_values(X)
    v = np.where(beta <= 0, np.maximum(0, 1 - m), np.where(beta >= L, np.maximum(0, m - 1), np.abs(m - 1)))
    return v


def dual_objective(beta, y, K):
    w = beta * y
    return beta.sum() - 0.5 * w @ K @ w


def cvxpy_dual(y, K, L):
    """Reference solution of the dual QP from a general conic solver."""
    n = y.shape[0]
    b = cp.Variable(n)
    Q = cp.psd_wrap(np.outer(y, y) * K)
    prob = cp.Problem(cp.Maximize(cp.sum(b) - 0.5 * cp.quad_form(b, Q)), [y @ b == 0, b >= 0, b <= L])
    prob.solve(solver=cp.CLARABEL)
    return np.asarray(b.value), prob.value


# -- kernel --------------------------------------------------------------------

def test_kernel_examples():
    assert rbf_kernel([1.0, 2.0], [1.0, 2.0], 0.3) == 1.0
    g = 0.7
    assert math.isclose(rbf_kernel([0.0, 0.0], [g * math.sqrt(2), 0.0], g), math.exp(-1), rel_tol=1e-14)
    far = rbf_kernel([0.0], [1e3], 1.0)
    assert far >= 0.0 and far < 1e-300
    with pytest.raises(ValueError):
        rbf_kernel([0.0], [1.0], 0.0)
    with pytest.raises(ValueError):
        rbf_kernel([0.0], [1.0, 2.0], 1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4), st.floats(0.01, 10))
def test_kernel_is_positive_and_bounded(coords, gamma):
    x, y = np.array(coords[:2]), np.array(coords[2:])
    k = rbf_kernel(x, y, gamma)
    assert 0.0 <= k <= 1.0
    assert rbf_kernel(x, x, gamma) == 1.0
    assert k == rbf_kernel(y, x, gamma)


def test_squared_distances_resolve_close_pairs():
    a = np.array([[1e4, 1e4]])
    b = np.array([[1e4, 1e4 + 1e-6]])
    assert math.isclose(squared_distances(a, b)[0, 0], 1e-12, rel_tol=1e-3)


# -- training ------------------------------------------------------------------

def test_two_point_closed_form():
    # by symmetry beta_1 = beta_2 = 1 / (1 - K12) and b = 0
    X = np.array([[0.0], [2.0]])
    model, sol = fit(X, [1, -1], gamma=1.0)
    k12 = math.exp(-2.0)
    assert np.allclose(sol.beta, 1.0 / (1.0 - k12), rtol=1e-9)
    assert abs(model.bias) < 1e-9
    assert decision_value(model, [0.0]) > 0 > decision_value(model, [2.0])
    assert abs(decision_value(model, [1.0])) < 1e-9


def test_training_matches_conic_solver_hard_and_soft_margin():
    r = np.random.default_rng(4)
    X = r.uniform(-1, 1, (30, 2))
    y = np.where(X[:, 0] ** 2 + X[:, 1] ** 2 < 0.5, 1.0, -1.0)
    y[:3] *= -1  # a few flipped labels make the soft-margin bound active
    for gamma, L in ((0.5, 1e6), (0.8, 5.0)):
        K = kernel_matrix(X, gamma=gamma)
        model, sol = fit(X, y, gamma, L)
        ref_beta, ref_obj = cvxpy_dual(y, K, L)
        ours = dual_objective(sol.beta, y, K)
        assert ours >= ref_obj - 1e-6 * max(1.0, abs(ref_obj))
        assert abs(ours - ref_obj) <= 1e-5 * max(1.0, abs(ref_obj))
        if L < 1e3:
            assert np.any(sol.beta >= L)
        # decision values agree with the reference dual, with the reference bias from its free set
        P = r.uniform(-1, 1, (50, 2))
        free = (ref_beta > 1e-6 * L) & (ref_beta < L * (1 - 1e-6))
        wref = ref_beta * y
        bref = np.mean(y[free] - K[free] @ wref)
        ref_vals = bref + kernel_matrix(P, X, gamma) @ wref
        assert np.allclose(model.decision_values(P), ref_vals, atol=1e-3 * max(1.0, np.abs(ref_vals).max()))


@pytest.mark.parametrize("seed", range(5))
def test_dual_feasibility_and_kkt(seed):
    r = np.random.default_rng(seed)
    X = r.uniform(-3, 3, (120, 2))
    y = np.where(X[:, 0] ** 2 + X[:, 1] ** 2 + X[:, 0] * X[:, 1] <= 2, 1.0, -1.0)
    L = 1e6
    model, sol = fit(X, y, 0.6, L)
    assert abs(sol.beta @ y) <= 1e-8
    assert np.all((sol.beta >= 0) & (sol.beta <= L))
    assert np.all(model.coefficients > 0)
    assert sol.gap <= 1e-6
    assert kkt_violations(model, sol.beta, X, y, L).max() <= 1e-6


def test_duplicate_point_gives_same_decision_function():
    X = np.array([[0.0, 0.0], [1.0, 0.3], [0.2, 1.1]])
    y = np.array([1.0, -1.0, -1.0])
    base = train_svm(X, y, 0.8)
    dup = train_svm(np.vstack([X, X[1]]), np.append(y, -1.0), 0.8)
    P = np.random.default_rng(0).uniform(-1, 2, (200, 2))
    assert np.allclose(base.decision_values(P), dup.decision_values(P), atol=1e-6)


def test_training_input_errors():
    X = np.array([[0.0], [1.0]])
    with pytest.raises(ValueError):
        train_svm(X, [1, 1], 1.0)
    with pytest.raises(ValueError):
        train_svm(np.array([[0.0], [0.0], [1.0]]), [1, -1, -1], 1.0)
    with pytest.raises(ValueError):
        train_svm(X, [1, 0], 1.0)
    with pytest.raises(ValueError):
        train_svm(X, [1, -1], -1.0)


def test_non_convergence_reports_violation():
    r = np.random.default_rng(1)
    X = r.uniform(-3, 3, (200, 2))
    y = np.where((X ** 2).sum(1) <= 2, 1.0, -1.0)
    with pytest.raises(ConvergenceError) as info:
        fit(X, y, 0.5, max_iter=5)
    assert info.value.kkt_violation > 1e-6
    assert info.value.iterations <= 5


def test_label_flip_negates_decision_function():
    r = np.random.default_rng(2)
    X = r.uniform(-3, 3, (150, 2))
    y = np.where((X ** 2).sum(1) <= 2, 1.0, -1.0)
    a = train_svm(X, y, 0.7)
    b = train_svm(X, -y, 0.7)
    P = r.uniform(-3, 3, (500, 2))
    va, vb = a.decision_values(P), b.decision_values(P)
    assert np.allclose(va, -vb, atol=1e-6)
    away = np.abs(va) > 1e-5
    assert np.array_equal(a.predict_batch(P)[away], -b.predict_batch(P)[away])


# -- decision function and gradient ---------------------------------------------

def test_single_support_vector_values():
    g = 0.5
    m = SvmModel(np.array([[1.0, 2.0]]), [1.0], [1.0], 0.0, g)
    assert decision_value(m, [1.0, 2.0]) == 1.0
    assert math.isclose(decision_value(m, [1.0 + g * math.sqrt(2), 2.0]), math.exp(-1), rel_tol=1e-14)
    assert np.array_equal(decision_gradient(m, [1.0, 2.0]), [0.0, 0.0])
    with pytest.raises(ValueError):
        decision_value(m, [1.0])


def test_unit_circle_model(unit_circle_model):
    th = np.linspace(0, 2 * np.pi, 50)
    ring = np.column_stack([np.cos(th), np.sin(th)])
    assert np.allclose(unit_circle_model.decision_values(ring), 0.0, atol=1e-15)
    g = decision_gradient(unit_circle_model, [1.0, 0.0])
    assert np.allclose(g, [-math.exp(-0.5), 0.0], rtol=1e-14)


@pytest.mark.parametrize("value, label", [(0.5, 1), (-0.5, -1), (0.0, 1)])
def test_predict_sign_and_tie(value, label):
    m = SvmModel(np.array([[0.0]]), [1.0], [1e-300], value, 1.0)
    assert predict(m, [5.0]) == label


def test_gradient_matches_finite_differences():
    r = np.random.default_rng(11)
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        d = int(r.integers(1, 6))
        n = int(r.integers(1, 30))
        m = SvmModel(r.uniform(-1, 1, (n, d)), r.choice([-1.0, 1.0], n), r.uniform(0, 5, n),
                     r.normal(), r.uniform(0.2, 2.0))
        x = r.uniform(-1, 1, d)
        g = decision_gradient(m, x)
        fd = np.array([(decision_value(m, x + h * e) - decision_value(m, x - h * e)) / (2 * h)
                       for e in np.eye(d)])
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-8))
    assert worst < 1e-5


def test_model_json_roundtrip(tmp_path):
    r = np.random.default_rng(3)
    X = r.uniform(-1, 1, (40, 3))
    y = np.where(X.sum(1) > 0, 1.0, -1.0)
    m = train_svm(X, y, 0.9)
    path = tmp_path / "m.json"
    m.save(path)
    back = SvmModel.load(path)
    P = r.uniform(-1, 1, (100, 3))
    assert np.array_equal(back.decision_values(P), m.decision_values(P))


# -- calibration ---------------------------------------------------------------

def test_calibration_returns_start_width_when_separable():
    gamma, m = calibrate_gamma(np.array([[0.0], [2.0]]), [1, -1], 1.0)
    assert gamma == 1.0
    assert training_error(m, np.array([[0.0], [2.0]]), [1, -1]) == 0.0


def test_calibration_reaches_zero_error_on_random_datasets():
    r = np.random.default_rng(20)
    for i in range(20):
        d = int(r.integers(1, 5))
        n = int(r.integers(10, 80))
        X = r.uniform(-1, 1, (n, d))
        y = r.choice([-1.0, 1.0], n)
        y[0], y[1] = 1.0, -1.0
        cal = calibrate(X, y, gamma0=0.1 * 2 * math.sqrt(d))
        assert training_error(cal.model, X, y) == 0.0
        assert cal.direction in ("start", "narrow", "wide", "incumbent")


def test_calibration_scans_narrower_widths_for_interleaved_labels():
    X = np.linspace(0, 1, 40)[:, None]
    y = np.where(np.arange(40) % 2 == 0, 1.0, -1.0)
    cal = calibrate(X, y, gamma0=1.0)
    assert cal.gamma < 1.0 and cal.direction == "narrow"


def test_calibration_failure_reports_best_error():
    X = np.linspace(0, 1, 40)[:, None]
    y = np.where(np.arange(40) % 2 == 0, 1.0, -1.0)
    with pytest.raises(CalibrationError) as info:
        calibrate(X, y, gamma0=10.0, growth=1.5, max_steps=2)
    assert 0.0 < info.value.best_error <= 1.0
    assert len(info.value.tried) >= 3


def test_calibration_rejects_bad_schedule():
    with pytest.raises(ValueError):
        calibrate(np.array([[0.0], [1.0]]), [1, -1], gamma0=1.0, growth=1.0)
