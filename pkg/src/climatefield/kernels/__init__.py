"""Hash-grid kernel backend selection.

The compiled extension (_gridcore, Cython) is used when importable; otherwise
the pure-NumPy twin takes over. `CLIMATE_FIELD_BACKEND=numpy|cython` forces a
choice. Both backends produce bit-identical forward features; backward scatter
order differs, so table gradients agree to float64 rounding only.
"""

import os

from . import grid_numpy

_requested = os.environ.get("CLIMATE_FIELD_BACKEND", "auto").lower()

if _requested not in ("auto", "cython", "numpy"):
    raise ValueError(
        f"CLIMATE_FIELD_BACKEND={_requested!r}: expected auto, cython, or numpy"
    )

if _requested == "numpy":
    _impl = grid_numpy
else:
    try:
        from . import _gridcore as _impl
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "CLIMATE_FIELD_BACKEND=cython but the compiled extension is "
                "missing; reinstall with `pip install -e . --no-build-isolation`"
            ) from None
        _impl = grid_numpy

BACKEND = _impl.backend_name()

hash_encode_forward = _impl.hash_encode_forward
hash_encode_backward = _impl.hash_encode_backward


def get_backend(name):
    """Return a specific backend module ('numpy' or 'cython'), for tests."""
    if name == "numpy":
        return grid_numpy
    if name == "cython":
        from . import _gridcore

        return _gridcore
    raise ValueError(f"unknown backend {name!r}")
