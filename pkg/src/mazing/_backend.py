"""Select the compiled kernels when available; ``MAZING_PURE_PYTHON=1`` forces the fallback."""

from __future__ import annotations

import os

if os.environ.get("MAZING_PURE_PYTHON", "") not in ("", "0"):
    from . import _core_py as core
    COMPILED = False
else:
    try:
        from . import _core as core
        COMPILED = True
    except ImportError:  # extension not built
        from . import _core_py as core
        COMPILED = False

linear_dual_cd = core.linear_dual_cd
kernel_dual_cd = core.kernel_dual_cd
count_inversions = core.count_inversions
