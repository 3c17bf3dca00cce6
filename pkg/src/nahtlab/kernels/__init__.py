"""Hot-kernel dispatch: compiled Cython extension with a numpy fallback.

The backend is chosen at import time: the compiled extension if it built,
otherwise the pure-python reference.  ``NAHTLAB_BACKEND=python|compiled``
forces a choice, and :func:`set_backend` switches at runtime (used by the
parity tests and the benchmark).  Call sites go through this module's
attributes so a switch takes effect everywhere.
"""

from __future__ import annotations

import os

from . import pykernels

_KERNEL_NAMES = [
    "layernorm_forward",
    "layernorm_backward",
    "gru_gates_forward",
    "gru_out_forward",
    "gru_out_backward",
    "gru_gates_backward",
    "adam_update",
    "log_softmax_forward",
    "log_softmax_backward",
]

try:
    from . import _ckernels

    _HAVE_COMPILED = True
except ImportError:  # extension not built; fallback stays active
    _ckernels = None
    _HAVE_COMPILED = False

_active_name = "python"


def available_backends():
    names = ["python"]
    if _HAVE_COMPILED:
        names.append("compiled")
    return names


def set_backend(name: str) -> None:
    global _active_name
    if name == "compiled" and not _HAVE_COMPILED:
        raise RuntimeError("compiled kernel extension is not available")
    if name not in ("python", "compiled"):
        raise ValueError(f"unknown kernel backend {name!r}")
    module = _ckernels if name == "compiled" else pykernels
    g = globals()
    for fn in _KERNEL_NAMES:
        g[fn] = getattr(module, fn)
    _active_name = name


def backend_name() -> str:
    return _active_name


_requested = os.environ.get("NAHTLAB_BACKEND", "auto")
if _requested == "auto":
    _requested = "compiled" if _HAVE_COMPILED else "python"
set_backend(_requested)
