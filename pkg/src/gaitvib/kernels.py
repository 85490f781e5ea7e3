"""Backend selection for the numerical hot loops.

The compiled extension is used when it was built; otherwise the pure-Python
versions are used. Setting ``GAITVIB_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels

python_backend = _pykernels

if os.environ.get("GAITVIB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
    compiled_backend = None
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "compiled"
        compiled_backend = _impl
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"
        compiled_backend = None

modal_recurrence = _impl.modal_recurrence
newmark_integrate = _impl.newmark_integrate
smo_solve = _impl.smo_solve

__all__ = ["BACKEND", "modal_recurrence", "newmark_integrate", "smo_solve",
           "python_backend", "compiled_backend"]
