import csv
from dataclasses import replace

import numpy as np
import pytest

from setinv.geometry import Box
from setinv.models import ProblemSpec, builtin_problem, membership_batch
from setinv.models import Circle
from setinv.sampler import (
    ACTIVE,
    FALLBACK,
    OASIS_PROJECTION,
    RANDOM,
    OasisConfig,
    OasisError,
    SamplingError,
    default_gamma0,
    run_oasis,
    sample_initial,
)
from setinv.svm import calibrate, training_error

CIRCLE = builtin_problem("circle")


def tiny_disk(r2: float) -> ProblemSpec:
    return ProblemSpec("tiny", Circle(), Box.from_bounds([[0.0, r2]]), Box.cube(-3, 3, 2))


def test_initial_positive_fraction_matches_disk_area():
    # P(+1) = 2 pi / 36; 20 seeds x 100 draws, 4 binomial standard deviations
    p = 2 * np.pi / 36
    total = sum(sum(s.label > 0 for s in sample_initial(CIRCLE, 100, np.random.default_rng(seed)))
                for seed in range(20))
    n = 2000
    assert abs(total - n * p) <= 4 * np.sqrt(n * p * (1 - p))


def test_initial_samples_are_uniform_labelled_and_deterministic():
    a = sample_initial(CIRCLE, 50, np.random.default_rng(9))
    b = sample_initial(CIRCLE, 50, np.random.default_rng(9))
    assert all(np.array_equal(s.point, t.point) for s, t in zip(a, b))
    X = np.array([s.point for s in a])
    assert np.all(np.abs(X) <= 3)
    assert np.array_equal([s.label for s in a], membership_batch(CIRCLE, X))
    assert {s.origin for s in a} == {RANDOM} and {s.iteration for s in a} == {0}


def test_initial_resampling_finds_the_rare_label():
    spec = tiny_disk(0.3)
    for seed in range(10):
        smp = sample_initial(spec, 5, np.random.default_rng(seed))
        labels = [s.label for s in smp]
        assert len(smp) == 5 and 1 in labels and -1 in labels


def test_initial_single_class_raises():
    spec = ProblemSpec("all", Circle(), Box.from_bounds([[0.0, 100.0]]), Box.cube(-3, 3, 2))
    with pytest.raises(SamplingError):
        sample_initial(spec, 10, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_initial(CIRCLE, 0, np.random.default_rng(0))


def test_config_validation_and_dict_roundtrip():
    with pytest.raises(ValueError):
        OasisConfig(n_init=10, n_total=5)
    with pytest.raises(ValueError):
        OasisConfig(growth=1.0)
    with pytest.raises(ValueError):
        OasisConfig(gamma0=-1.0)
    cfg = OasisConfig.from_dict({"n_init": 20, "n_total": 40, "projection": {"max_iter": 50}})
    assert cfg.projection == replace(OASIS_PROJECTION, max_iter=50)
    assert OasisConfig().projection == OASIS_PROJECTION
    assert OasisConfig.from_dict(cfg.to_dict()) == cfg


def test_default_width_is_tenth_of_diameter():
    assert np.isclose(default_gamma0(CIRCLE), 0.1 * np.sqrt(72))


@pytest.fixture(scope="module")
def short_run():
    return run_oasis(CIRCLE, OasisConfig(n_init=40, n_total=90, rng_seed=3))


def test_run_invariants(short_run):
    run = short_run
    assert len(run.samples) == 90
    assert len(run.log) == 50
    assert [r.iteration for r in run.log] == list(range(1, 51))
    assert [s.iteration for s in run.samples[40:]] == list(range(1, 51))
    X, y = run.points, run.labels
    assert np.all(np.abs(X) <= 3)
    assert np.array_equal(y, membership_batch(CIRCLE, X))
    assert training_error(run.final_model, X, y) == 0.0
    assert {s.origin for s in run.samples[40:]} <= {ACTIVE, FALLBACK}
    for rec in run.log:
        if rec.origin == ACTIVE:
            assert rec.residual <= 1e-6 and rec.fallback_reason == ""
        else:
            assert rec.fallback_reason in ("not-converged", "degenerate-gradient", "duplicate")
    assert run.train_seconds > 0 and run.wall_seconds >= run.train_seconds


def test_run_is_reproducible(short_run):
    again = run_oasis(CIRCLE, OasisConfig(n_init=40, n_total=90, rng_seed=3))
    assert np.array_equal(again.points, short_run.points)
    assert np.array_equal(again.final_model.coefficients, short_run.final_model.coefficients)
    assert again.final_model.gamma == short_run.final_model.gamma


def test_csv_outputs(short_run, tmp_path):
    short_run.write_samples_csv(tmp_path / "s.csv")
    short_run.write_log_csv(tmp_path / "l.csv")
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert len(rows) == 90 and float(rows[5]["x1"]) == short_run.samples[5].point[1]
    log_rows = list(csv.DictReader(open(tmp_path / "l.csv")))
    assert len(log_rows) == 50 and {"gamma", "residual", "origin", "train_ms"} <= set(log_rows[0])


def test_no_active_iterations_gives_passive_svm():
    cfg = OasisConfig(n_init=60, n_total=60, rng_seed=4)
    run = run_oasis(CIRCLE, cfg)
    assert run.log == [] and len(run.samples) == 60
    X, y = run.points, run.labels.astype(float)
    cal = calibrate(X, y, default_gamma0(CIRCLE), cfg.growth, cfg.max_steps)
    assert cal.gamma == run.final_model.gamma
    P = np.random.default_rng(0).uniform(-3, 3, (200, 2))
    assert np.allclose(cal.model.decision_values(P), run.final_model.decision_values(P), atol=1e-9)


def test_calibration_failure_is_a_run_error_with_partial_log():
    cfg = OasisConfig(n_init=50, n_total=60, rng_seed=0, gamma0=50.0, growth=1.01, max_steps=2)
    with pytest.raises(OasisError) as info:
        run_oasis(CIRCLE, cfg)
    assert info.value.partial is not None
    assert len(info.value.partial.samples) == 50


def test_active_samples_concentrate_near_the_boundary():
    wins = 0
    for seed in range(1, 6):
        run = run_oasis(CIRCLE, OasisConfig(n_init=50, n_total=110, rng_seed=seed))
        dist = np.abs(np.linalg.norm(run.points, axis=1) - np.sqrt(2))
        org = run.origins
        act, rnd = dist[org == ACTIVE], dist[org == RANDOM]
        assert act.size >= 10
        wins += np.median(act) < np.median(rnd)
    assert wins == 5
