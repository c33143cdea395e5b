"""Select between numba-compiled kernels and the pure-numpy fallback.

Set ``NCOT_DISABLE_JIT=1`` (or ``NCOT_BACKEND=numpy``) before import to force
the numpy path. Numba missing from the environment has the same effect.
"""
import os

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None
    HAVE_NUMBA = False


def _jit_requested():
    if os.environ.get("NCOT_DISABLE_JIT", "0").strip() not in ("", "0"):
        return False
    return os.environ.get("NCOT_BACKEND", "numba").strip().lower() != "numpy"


USE_NUMBA = HAVE_NUMBA and _jit_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, identity decorator otherwise.

    Compilation is lazy, so decorating is cheap even when the numpy backend
    is active; the compiled twin is only built if something calls it.
    """
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda func: func
    kwargs.setdefault("cache", True)
    return nb.njit(*args, **kwargs)
