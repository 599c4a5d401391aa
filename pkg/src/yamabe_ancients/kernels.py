"""Backend selection for the implicit-Euler kernels.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy fallback.  ``YAMABE_ANCIENTS_BACKEND=python`` forces the fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``"compiled"``, ``"python"`` or the default."""
    if name is None:
        name = os.environ.get("YAMABE_ANCIENTS_BACKEND", "auto")
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    if name == "auto":
        return _compiled if _compiled is not None else _kernels_py
    raise ValueError(f"unknown kernel backend {name!r}")


def backend_name(mod: ModuleType | None = None) -> str:
    mod = get_backend() if mod is None else mod
    return "python" if mod is _kernels_py else "compiled"


HAVE_COMPILED = _compiled is not None
