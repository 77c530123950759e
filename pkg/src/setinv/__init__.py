"""Set inversion with active-learning SVMs, and an interval-analysis baseline."""

from ._backend import BACKEND
from .bench import BenchReport, GridTestSet, evaluate_accuracy, grid_testset, run_benchmark
from .geometry import INNER, OUTER, UNCERTAIN, Box, Interval, Subpaving, box_bisect, box_contains
from .models import (
    BUILTIN_PROBLEMS,
    ProblemSpec,
    builtin_problem,
    eval_forward,
    eval_inclusion,
    integrate_lv,
    membership,
    membership_batch,
    problem_from_config,
)
from .optimizer import DegenerateGradientError, ProjectionOptions, ProjectionResult, nearest_point_on_manifold
from .sampler import LabeledSample, OasisConfig, OasisRun, run_oasis, sample_initial
from .sivia import BoxBudgetError, GridIndex, sivia_invert, subpaving_classify, subpaving_classify_batch
from .svm import SvmModel, calibrate_gamma, decision_gradient, decision_value, predict, rbf_kernel, train_svm

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BUILTIN_PROBLEMS", "INNER", "OUTER", "UNCERTAIN",
    "BenchReport", "Box", "BoxBudgetError", "DegenerateGradientError", "GridIndex", "GridTestSet",
    "Interval", "LabeledSample", "OasisConfig", "OasisRun", "ProblemSpec", "ProjectionOptions",
    "ProjectionResult", "Subpaving", "SvmModel",
    "box_bisect", "box_contains", "builtin_problem", "calibrate_gamma", "decision_gradient",
    "decision_value", "eval_forward", "eval_inclusion", "evaluate_accuracy", "grid_testset",
    "integrate_lv", "membership", "membership_batch", "nearest_point_on_manifold", "predict",
    "problem_from_config", "rbf_kernel", "run_benchmark", "run_oasis", "sample_initial",
    "sivia_invert", "subpaving_classify", "subpaving_classify_batch", "train_svm",
]
