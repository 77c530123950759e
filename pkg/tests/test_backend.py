import importlib.util
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from setinv import _backend, _pycore

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_backends.py"


def load_bench():
    spec = importlib.util.spec_from_file_location("bench_backends", BENCH)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def selected_backend(env_value):
    env = dict(os.environ)
    env.pop("SETINV_PURE_PYTHON", None)
    if env_value is not None:
        env["SETINV_PURE_PYTHON"] = env_value
    out = subprocess.run([sys.executable, "-c", "from setinv import _backend; print(_backend.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


def test_environment_forces_pure_python():
    assert selected_backend("1") == "python"
    assert selected_backend("0") == selected_backend(None) == _backend.BACKEND


@pytest.mark.skipif(_backend.BACKEND != "compiled", reason="extension not built")
@pytest.mark.parametrize("case", ["smo", "decision", "scan", "lv"])
def test_backends_agree(case):
    bb = load_bench()
    rng = np.random.default_rng(0)
    make = {"smo": lambda: bb.case_smo(120, rng),
            "decision": lambda: bb.case_decision(2000, 30, 3, rng),
            "scan": lambda: bb.case_scan(2000, rng),
            "lv": lambda: bb.case_lv(200, 1e-2, rng)}[case]
    _, run, same = make()
    assert same(run(_backend.core)(), run(_pycore)())


def test_benchmark_script_quick_run(tmp_path):
    out = tmp_path / "b.csv"
    proc = subprocess.run([sys.executable, str(BENCH), "--quick", "--csv", str(out)],
                          capture_output=True, text=True)
    if _backend.BACKEND != "compiled":
        assert proc.returncode == 1
        return
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert out.read_text().count("\n") >= 5
