"""Command line entry point: ``setinv {oasis,sivia,eval,bench,plot}``.

Exit codes: 0 success, 1 configuration error, 2 run error, 3 resource error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import _backend
from .bench import SuiteConfig, evaluate_accuracy, grid_testset, run_benchmark
from .geometry import Subpaving
from .models import OSCILLATION_PARAMS, UnsupportedModelError, integrate_lv, problem_from_config
from .sampler import OasisConfig, OasisError, SamplingError, run_oasis
from .sivia import DEFAULT_MAX_BOXES, GridIndex, PointOutsideError, sivia_invert
from .svm import CalibrationError, ConvergenceError, SvmModel

log = logging.getLogger("setinv")

EXIT_OK, EXIT_CONFIG, EXIT_RUN, EXIT_RESOURCE = 0, 1, 2, 3


class ConfigError(Exception):
    pass


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def _config(args) -> dict:
    cfg = _load_json(args.config) if getattr(args, "config", None) else {}
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def _problem(args, cfg):
    entry = args.problem if getattr(args, "problem", None) else cfg.get("problem")
    if entry is None:
        raise ConfigError("no problem given (use --problem or a config with 'problem')")
    try:
        return problem_from_config(entry)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _out_dir(args, cfg, default: str) -> Path:
    out = Path(args.out or cfg.get("out_dir") or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=float))


# -- subcommands ---------------------------------------------------------------

def cmd_oasis(args) -> int:
    cfg = _config(args)
    spec = _problem(args, cfg)
    params = {"n_init": spec.defaults.get("n_init", 100), "n_total": spec.defaults.get("n_total", 500)}
    params.update(cfg.get("oasis", {}))
    for key in ("n_init", "n_total", "seed"):
        val = getattr(args, key)
        if val is not None:
            params["rng_seed" if key == "seed" else key] = val
    try:
        config = OasisConfig.from_dict(params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid oasis settings: {exc}") from exc
    out = _out_dir(args, cfg, f"runs/{spec.name}-oasis-seed{config.rng_seed}")
    try:
        run = run_oasis(spec, config)
    except OasisError as exc:
        if exc.partial is not None:
            exc.partial.write_samples_csv(out / "samples.partial.csv")
            exc.partial.write_log_csv(out / "log.partial.csv")
        raise
    run.write_samples_csv(out / "samples.csv")
    run.write_log_csv(out / "log.csv")
    run.final_model.save(out / "model.json")
    summary = {"problem": spec.to_dict(), "config": config.to_dict(), "backend": _backend.BACKEND,
               "gamma": run.final_model.gamma, "n_support": run.final_model.n_support,
               "train_seconds": run.train_seconds, "wall_seconds": run.wall_seconds}
    res = args.resolution or (spec.defaults.get("resolution") if args.evaluate else None)
    if res:
        ev = evaluate_accuracy(run.final_model, spec, grid_testset(spec.state_space, res),
                               timing_calls=args.timing_calls)
        summary.update(resolution=res, accuracy=ev.accuracy, predict_us=1e6 * ev.seconds_per_point)
    _dump(out / "summary.json", summary)
    msg = f"{spec.name}: {len(run.samples)} samples, gamma={run.final_model.gamma:.4g}"
    if "accuracy" in summary:
        msg += f", accuracy={summary['accuracy']:.4f} on {res}^{spec.input_dim} grid"
    print(msg)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_sivia(args) -> int:
    cfg = _config(args)
    spec = _problem(args, cfg)
    if not spec.forward.has_inclusion:
        raise ConfigError(f"problem {spec.name!r} has no inclusion function; SIVIA cannot run")
    scfg = cfg.get("sivia", {})
    eps = args.epsilon or scfg.get("epsilon") or spec.defaults.get("sivia_epsilon")
    if eps is None:
        raise ConfigError(f"no epsilon given and problem {spec.name!r} has no default")
    max_boxes = args.max_boxes or scfg.get("max_boxes", DEFAULT_MAX_BOXES)
    out = _out_dir(args, cfg, f"runs/{spec.name}-sivia")
    sp = sivia_invert(spec, float(eps), max_boxes=int(max_boxes))
    sp.to_csv(out / "subpaving.csv")
    summary = {"problem": spec.to_dict(), "epsilon": eps, "boxes": sp.count(),
               "inner": sp.count(2), "uncertain": sp.count(1), "outer": sp.count(0),
               "depth": sp.meta["depth"], "seconds": sp.meta["seconds"]}
    res = args.resolution or (spec.defaults.get("resolution") if args.evaluate else None)
    if res:
        ev = evaluate_accuracy(sp, spec, grid_testset(spec.state_space, res), timing_calls=args.timing_calls)
        summary.update(resolution=res, accuracy=ev.accuracy, predict_us=1e6 * ev.seconds_per_point)
    _dump(out / "summary.json", summary)
    print(f"{spec.name}: {sp.count()} boxes (inner {sp.count(2)}, uncertain {sp.count(1)}, "
          f"outer {sp.count(0)}), depth {sp.meta['depth']}"
          + (f", accuracy={summary['accuracy']:.4f}" if "accuracy" in summary else ""))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    spec = _problem(args, cfg)
    if bool(args.model) == bool(args.subpaving):
        raise ConfigError("give exactly one of --model or --subpaving")
    try:
        if args.model:
            clf = SvmModel.load(args.model)
        else:
            clf = Subpaving.from_csv(args.subpaving)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load classifier: {exc}") from exc
    res = args.resolution or spec.defaults.get("resolution", 101)
    index = GridIndex(clf) if args.index and isinstance(clf, Subpaving) else None
    ev = evaluate_accuracy(clf, spec, grid_testset(spec.state_space, res), timing_calls=args.timing_calls,
                           index=index)
    result = {"problem": spec.name, "resolution": res, "accuracy": ev.accuracy,
              "predict_us": 1e6 * ev.seconds_per_point,
              "classifier": "svm" if args.model else ("subpaving-index" if index else "subpaving-scan")}
    print(json.dumps(result))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        _dump(Path(args.out), result)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    suite = dict(cfg.get("bench", cfg))
    suite.pop("problem", None)
    if args.problems:
        suite["problems"] = args.problems
    if args.seeds:
        suite["seeds"] = args.seeds
    if args.methods:
        suite["methods"] = args.methods
    if args.workers:
        suite["workers"] = args.workers
    if args.timing_calls is not None:
        suite["timing_calls"] = args.timing_calls
    suite.setdefault("problems", [])
    out = _out_dir(args, suite, "runs/bench")
    suite["out_dir"] = str(out)
    try:
        suite = SuiteConfig.from_dict(suite)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid suite: {exc}") from exc
    report = run_benchmark(suite)
    report.write_csv(out / "report.csv")
    report.write_summary_csv(out / "summary.csv")
    print(report.format_table())
    print(f"wrote {out}")
    if any(r.status == "config-error" for r in report.rows):
        return EXIT_CONFIG
    return EXIT_OK


def _read_samples(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path} holds no samples")
    dims = sorted((k for k in rows[0] if k.startswith("x")), key=lambda k: int(k[1:]))
    pts = np.array([[float(r[k]) for k in dims] for r in rows])
    return pts, np.array([int(r["label"]) for r in rows]), np.array([r["origin"] for r in rows])


def cmd_plot(args) -> int:
    from . import plots

    try:
        return _plot(args, plots)
    except plots.PlotError as exc:
        raise ConfigError(str(exc)) from exc


def _plot(args, plots) -> int:
    out = Path(args.out or "runs/plots")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.lv:
        traj = integrate_lv(OSCILLATION_PARAMS, 50.0, 50.0, 20.0, 1e-2)
        written.append(plots.plot_lv_trajectory(traj, out / "lv-trajectory.svg"))
    if args.run_dir or args.subpaving:
        cfg = _config(args)
        spec = _problem(args, cfg)
        if args.run_dir:
            run_dir = Path(args.run_dir)
            try:
                pts, labels, origins = _read_samples(run_dir / "samples.csv")
                model = SvmModel.load(run_dir / "model.json")
            except (OSError, KeyError, ValueError) as exc:
                raise ConfigError(f"cannot read run directory {run_dir}: {exc}") from exc
            written.append(plots.plot_samples(pts, labels, origins, spec, out / f"{spec.name}-samples.svg"))
            written.append(plots.plot_region(model, spec, out / f"{spec.name}-region.svg", samples=pts))
        if args.subpaving:
            try:
                sp = Subpaving.from_csv(args.subpaving)
            except (OSError, KeyError, ValueError) as exc:
                raise ConfigError(f"cannot read subpaving: {exc}") from exc
            written.append(plots.plot_subpaving(sp, out / f"{spec.name}-subpaving.svg"))
    if not written:
        raise ConfigError("nothing to plot: give --run-dir, --subpaving or --lv")
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="setinv", description="Set inversion by active SVM sampling and SIVIA.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, problem=True):
        sp.add_argument("--config", help="JSON config file")
        if problem:
            sp.add_argument("--problem", help="built-in problem name (overrides the config)")
        sp.add_argument("--out", help="output directory")

    o = sub.add_parser("oasis", help="run active sampling on a problem")
    common(o)
    o.add_argument("--seed", type=int)
    o.add_argument("--n-init", type=int)
    o.add_argument("--n-total", type=int)
    o.add_argument("--evaluate", action="store_true", help="score on the problem's default grid")
    o.add_argument("--resolution", type=int)
    o.add_argument("--timing-calls", type=int, default=10_000)
    o.set_defaults(func=cmd_oasis)

    s = sub.add_parser("sivia", help="run the interval baseline")
    common(s)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--max-boxes", type=int)
    s.add_argument("--evaluate", action="store_true")
    s.add_argument("--resolution", type=int)
    s.add_argument("--timing-calls", type=int, default=10_000)
    s.set_defaults(func=cmd_sivia)

    e = sub.add_parser("eval", help="score a saved model or subpaving on a grid")
    common(e)
    e.add_argument("--model", help="model JSON")
    e.add_argument("--subpaving", help="subpaving CSV")
    e.add_argument("--index", action="store_true", help="use the grid-bucket index for subpavings")
    e.add_argument("--resolution", type=int)
    e.add_argument("--timing-calls", type=int, default=10_000)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="run a benchmark suite")
    common(b, problem=False)
    b.add_argument("--problems", nargs="+")
    b.add_argument("--seeds", nargs="+", type=int)
    b.add_argument("--methods", nargs="+", choices=["oasis", "sivia"])
    b.add_argument("--workers", type=int)
    b.add_argument("--timing-calls", type=int)
    b.set_defaults(func=cmd_bench)

    pl = sub.add_parser("plot", help="render SVG figures")
    common(pl)
    pl.add_argument("--run-dir", help="directory written by 'setinv oasis'")
    pl.add_argument("--subpaving", help="subpaving CSV written by 'setinv sivia'")
    pl.add_argument("--lv", action="store_true", help="Lotka-Volterra trajectory for the reference parameters")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnsupportedModelError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MemoryError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (OasisError, SamplingError, CalibrationError, ConvergenceError, PointOutsideError,
            ArithmeticError) as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
