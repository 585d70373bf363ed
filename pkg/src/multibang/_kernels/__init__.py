"""Kernel backend selection.

The compiled extension is preferred; the NumPy fallback is used when the
extension is unavailable or when MULTIBANG_PURE is set to a nonempty value.
Both backends share signatures and floating-point semantics.
"""

import os

from . import _ref

if os.environ.get("MULTIBANG_PURE"):
    _impl = _ref
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _ref

COMPILED = _impl.COMPILED
laplacian = _impl.laplacian
schur_matvec = _impl.schur_matvec
prox_field = _impl.prox_field


def backends():
    """Available backends by name; used by tests and the benchmark."""
    out = {"numpy": _ref}
    try:
        from . import _core

        out["compiled"] = _core
    except ImportError:
        pass
    return out
