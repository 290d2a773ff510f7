"""Backend selection for the hot kernels.

The compiled module is used when it was built and imports cleanly; otherwise
the pure-Python twin is loaded. Set ``SPECEDGE_PURE_PYTHON=1`` to force the
fallback.
"""

import os
from types import ModuleType

from . import _kernels_py


def load(name: str | None = None) -> ModuleType:
    """Return a kernel backend by name: ``"c"``, ``"py"`` or ``None`` for auto."""
    if name == "py":
        return _kernels_py
    try:
        from . import _ckernels
    except ImportError:
        if name == "c":
            raise
        return _kernels_py
    return _ckernels


def _auto() -> ModuleType:
    if os.environ.get("SPECEDGE_PURE_PYTHON", "") not in ("", "0"):
        return _kernels_py
    return load(None)


backend = _auto()
BACKEND = "c" if backend is not _kernels_py else "py"
