"""Select the compiled kernels when available, NumPy otherwise.

Set ``SETINV_PURE_PYTHON=1`` to force the NumPy implementation.
"""

import os

from . import _pycore

if os.environ.get("SETINV_PURE_PYTHON", "") not in ("", "0"):
    core = _pycore
else:
    try:
        from . import _core as core
    except ImportError:
        core = _pycore

BACKEND = "compiled" if core is not _pycore else "python"

smo_solve = core.smo_solve
rbf_decision = core.rbf_decision
scan_classify = core.scan_classify
lv_min_prey = core.lv_min_prey
