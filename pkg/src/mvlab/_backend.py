"""Backend selection for the hot kernels.

Numba is used when importable unless ``MVLAB_NUMBA`` is set to a false-ish
value (``0``, ``false``, ``off``, ``no``), in which case every kernel runs its
vectorized numpy twin.  ``set_backend`` switches at runtime (tests, benchmarks).
"""
from __future__ import annotations

import os

try:  # pragma: no cover - exercised implicitly
    import numba
except ImportError:  # pragma: no cover
    numba = None

_FALSE = {"0", "false", "off", "no"}


def _env_wants_numba() -> bool:
    return os.environ.get("MVLAB_NUMBA", "1").strip().lower() not in _FALSE


_state = {"numba": numba is not None and _env_wants_numba()}


def numba_available() -> bool:
    return numba is not None


def use_numba() -> bool:
    return _state["numba"]


def backend_name() -> str:
    return "numba" if _state["numba"] else "numpy"


def set_backend(name: str) -> None:
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba is not installed")
    _state["numba"] = name == "numba"


def njit(func=None, **kwargs):
    """``numba.njit`` with caching on; identity decorator when numba is absent."""
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)

    def wrap(f):
        if numba is None:
            return f
        return numba.njit(**kwargs)(f)

    return wrap(func) if func is not None else wrap
