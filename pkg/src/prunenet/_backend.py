"""Backend selection for the numeric kernels.

``PRUNENET_BACKEND=numpy`` forces the pure-numpy path; anything else (or
unset) uses numba when it imports cleanly.
"""
import os

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

_BACKENDS = ("numba", "numpy")


def _initial_backend():
    requested = os.environ.get("PRUNENET_BACKEND", "numba").strip().lower()
    if requested == "numpy" or not HAS_NUMBA:
        return "numpy"
    return "numba"


_active = _initial_backend()


def njit(fn):
    """Compile ``fn`` with numba when available; keep the Python original on ``py_func``."""
    if not HAS_NUMBA:
        fn.py_func = fn
        return fn
    return numba.njit(cache=True)(fn)


def get_backend():
    return _active


def set_backend(name):
    """Switch the kernel backend at runtime. Returns the previous backend."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {_BACKENDS}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    previous, _active = _active, name
    return previous


def set_threads(n):
    if HAS_NUMBA and n is not None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
