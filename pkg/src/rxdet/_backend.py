"""Hot-loop backend selection.

The compiled extension is preferred when importable; otherwise the NumPy
twin takes over.  ``RXDET_BACKEND`` forces the choice: "compiled" errors out
if the extension is missing, "python" skips it.
"""

import os

from .errors import DataError

_ENV = "RXDET_BACKEND"


def _load_compiled():
    from . import _hotloop

    return _hotloop


def _load_python():
    from . import _hotloop_py

    return _hotloop_py


def _select():
    forced = os.environ.get(_ENV, "auto").strip().lower() or "auto"
    if forced in ("python", "numpy"):
        return _load_python()
    if forced == "compiled":
        return _load_compiled()
    if forced == "auto":
        try:
            return _load_compiled()
        except ImportError:
            return _load_python()
    raise DataError(
        f"unknown {_ENV} value {forced!r}; expected 'auto', 'compiled' or 'python'"
    )


_impl = _select()

rrx_score_one = _impl.rrx_score_one
rrx_score_block = _impl.rrx_score_block


def active_backend() -> str:
    """Name of the hot-loop implementation selected at import."""
    return _impl.BACKEND


def available_backends() -> list:
    names = []
    try:
        _load_compiled()
        names.append("compiled")
    except ImportError:
        pass
    names.append("python")
    return names


def get_backend(name: str):
    """Fetch a specific backend module (for benchmarks and parity tests)."""
    if name == "compiled":
        return _load_compiled()
    if name == "python":
        return _load_python()
    raise DataError(f"unknown backend {name!r}; expected 'compiled' or 'python'")
