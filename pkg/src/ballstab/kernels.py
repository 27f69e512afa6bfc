"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting the environment
variable ``BALLSTAB_PURE_PYTHON=1`` forces the numpy fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("BALLSTAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "compiled"

element_matrices = _impl.element_matrices
riesz_gram = _impl.riesz_gram
frank_wolfe_away = _impl.frank_wolfe_away

__all__ = ["BACKEND", "element_matrices", "riesz_gram", "frank_wolfe_away"]
