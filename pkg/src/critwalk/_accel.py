"""Backend switch for the hot kernels.

Every kernel exists twice: a loop version compiled with numba and a
vectorised numpy version.  The numba path is used when numba imports and
``CRITWALK_DISABLE_NUMBA`` is unset (or "0").  Random draws are always made
by the caller, so both paths return identical results for identical inputs.
"""
from __future__ import annotations

import contextlib
import os

try:
    from numba import njit as _numba_njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def _numba_njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def _env_disabled() -> bool:
    return os.environ.get("CRITWALK_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


_state = {"backend": "numba" if HAVE_NUMBA and not _env_disabled() else "numpy"}


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True`` by default; identity without numba."""
    kwargs.setdefault("cache", True)
    return _numba_njit(*args, **kwargs)


def backend() -> str:
    return _state["backend"]


def set_backend(name: str) -> None:
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _state["backend"] = name


@contextlib.contextmanager
def use_backend(name: str):
    old = backend()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(old)


def dispatch(numba_fn, numpy_fn):
    """Return a callable that routes to whichever backend is active."""

    def call(*args, **kwargs):
        if _state["backend"] == "numba":
            return numba_fn(*args, **kwargs)
        return numpy_fn(*args, **kwargs)

    call.__name__ = getattr(numpy_fn, "__name__", "kernel")
    call.__doc__ = numpy_fn.__doc__
    call.numba_impl = numba_fn
    call.numpy_impl = numpy_fn
    return call


def kernel(fn):
    """Dispatch a loop kernel: compiled under numba, interpreted otherwise.

    For inherently sequential scans (DFS, union-find, walks) the numpy
    backend simply runs the same Python source.
    """
    return dispatch(njit(fn), fn)
