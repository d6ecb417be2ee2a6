"""Backend selection for the convolution kernels.

The compiled extension is used when it imported cleanly; otherwise the
numpy kernels take over. ``BTSNET_BACKEND=python`` forces the fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _conv_py

try:
    from . import _conv_ext
except ImportError:  # extension not built
    _conv_ext = None

BACKENDS: dict[str, ModuleType] = {"python": _conv_py}
if _conv_ext is not None:
    BACKENDS["cython"] = _conv_ext

_requested = os.environ.get("BTSNET_BACKEND", "").strip().lower()
if _requested and _requested not in BACKENDS:
    raise ImportError(
        f"BTSNET_BACKEND={_requested!r} is unavailable; have {sorted(BACKENDS)}"
    )
_active = _requested or ("cython" if "cython" in BACKENDS else "python")


def backend_name() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {sorted(BACKENDS)}")
    _active = name


def get_backend(name: str | None = None) -> ModuleType:
    return BACKENDS[name or _active]
