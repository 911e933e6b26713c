"""Kernel backend selection.

The compiled extension (``_core``, Cython) is preferred; the pure-numpy
implementation (``_purepy``) is the fallback, selected automatically when the
extension is unavailable or when the environment variable
``VLSFBC_FORCE_PURE=1`` is set.  Both expose the same functions with the same
semantics; ``backend.NAME`` identifies which one is active.
"""

import os

if os.environ.get("VLSFBC_FORCE_PURE") == "1":
    from . import _purepy as backend
else:
    try:
        from . import _core as backend  # type: ignore[attr-defined]
    except ImportError:
        from . import _purepy as backend


def get_backend():
    return backend


def backend_name():
    return backend.NAME
