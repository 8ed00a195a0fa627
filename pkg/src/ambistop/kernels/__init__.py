"""Hot loops with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; setting the environment
variable ``AMBISTOP_PURE_PYTHON`` to a non-empty value other than ``0`` forces
the fallback.  ``BACKEND`` names the active one.
"""
import os

from . import _fallback


def _load_compiled():
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = None if os.environ.get("AMBISTOP_PURE_PYTHON", "") not in ("", "0") else _load_compiled()
_active = _compiled or _fallback
BACKEND = "cython" if _compiled is not None else "python"

lattice_backward = _active.lattice_backward
mc_exit_chunk = _active.mc_exit_chunk


def get_backend(name: str):
    """Kernel module by name (``"cython"`` or ``"python"``), for benchmarks and tests."""
    if name == "python":
        return _fallback
    if name == "cython":
        mod = _compiled or _load_compiled()
        if mod is None:
            raise ImportError("compiled kernels are not built")
        return mod
    raise ValueError(f"unknown backend {name!r}")
