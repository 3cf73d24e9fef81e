"""Backend selection for the hot loops.

Set ``CONVDIFF_BACKEND=numpy`` to force the pure-numpy fallbacks even when
numba is importable.  Any other value (or unset) uses numba when available.
"""

import os

_requested = os.environ.get("CONVDIFF_BACKEND", "numba").strip().lower()

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is installed in CI
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _requested != "numpy"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise.

    The compiled and plain versions are both kept available by the kernels
    module so parity tests can compare them regardless of ``BACKEND``.
    """
    if HAVE_NUMBA:
        import numba

        return numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap
