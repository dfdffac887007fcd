"""Kernel selection.

The compiled extension is used when it imports; otherwise the pure-Python
twin. Set ``RBBCHAOS_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _fallback

BACKENDS = {"python": _fallback}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["compiled"] = _compiled

if _compiled is not None and not os.environ.get("RBBCHAOS_PURE_PYTHON"):
    impl = _compiled
    BACKEND = "compiled"
else:
    impl = _fallback
    BACKEND = "python"

COMPILED_AVAILABLE = _compiled is not None


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    if name is None:
        return impl
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}") from None
