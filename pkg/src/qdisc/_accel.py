"""Backend selection for the numeric kernels.

Every hot kernel in the package exists twice: a numba ``@njit`` version and a
pure-numpy version. ``QDISC_DISABLE_NUMBA=1`` (or a missing numba install)
makes the numpy path the default; callers can still request either backend
explicitly, which is what the benchmark does.
"""
import os

_FALSEY = {"", "0", "false", "no", "off"}

try:
    import numba as _numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None
    HAVE_NUMBA = False

NUMBA_DISABLED = os.environ.get("QDISC_DISABLE_NUMBA", "").strip().lower() not in _FALSEY

BACKENDS = ("numba", "numpy")


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if HAVE_NUMBA:
        return _numba.njit(cache=True)(func)
    return func


def default_backend():
    return "numba" if HAVE_NUMBA and not NUMBA_DISABLED else "numpy"


def resolve_backend(backend=None):
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
