import numpy as np
import pytest

from setinv.models import OSCILLATION_PARAMS, builtin_problem, integrate_lv, membership_batch
from setinv.plots import PlotError, plot_lv_trajectory, plot_region, plot_samples, plot_subpaving
from setinv.sivia import sivia_invert
from setinv.svm import calibrate


def is_svg(path):
    text = path.read_text()
    return path.stat().st_size > 1000 and "<svg" in text


def test_2d_figures(tmp_path):
    spec = builtin_problem("circle")
    X = np.random.default_rng(0).uniform(-3, 3, (80, 2))
    y = membership_batch(spec, X)
    model = calibrate(X, y.astype(float), gamma0=0.8).model
    origins = np.array(["random"] * 60 + ["active"] * 20)
    assert is_svg(plot_samples(X, y, origins, spec, tmp_path / "s.svg"))
    assert is_svg(plot_region(model, spec, tmp_path / "r.svg", resolution=61, samples=X))
    assert is_svg(plot_subpaving(sivia_invert(spec, 0.3), tmp_path / "p.svg"))


def test_lv_trajectory_figure(tmp_path):
    traj = integrate_lv(OSCILLATION_PARAMS, 50.0, 50.0, 5.0, 1e-2)
    assert is_svg(plot_lv_trajectory(traj, tmp_path / "lv.svg"))


def test_higher_dimensions_are_rejected(tmp_path):
    spec = builtin_problem("sphere-3d")
    X = np.zeros((4, 3))
    with pytest.raises(PlotError):
        plot_samples(X, np.ones(4), np.array(["random"] * 4), spec, tmp_path / "x.svg")
    with pytest.raises(PlotError):
        plot_region(None, spec, tmp_path / "x.svg")
    with pytest.raises(PlotError):
        plot_subpaving(sivia_invert(spec, 1.0), tmp_path / "x.svg")
    assert not (tmp_path / "x.svg").exists()
