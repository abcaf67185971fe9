"""Backend selection for the hot loops.

The compiled extension is used when importable; set HYPLAB_PURE_PYTHON=1 to
force the numpy fallback.  Both expose the same functions.
"""
import os

if os.environ.get("HYPLAB_PURE_PYTHON") == "1":
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        from . import _kernels_py as _impl

from . import _kernels_py as python_backend

__all__ = [
    "BACKEND", "orbit_bfs", "jacobi_rk4", "riccati_rk4", "fold_points", "flow_fold",
    "python_backend", "compiled_backend", "is_budget_error",
]

BACKEND = _impl.BACKEND
orbit_bfs = _impl.orbit_bfs
jacobi_rk4 = _impl.jacobi_rk4
riccati_rk4 = _impl.riccati_rk4
fold_points = _impl.fold_points
flow_fold = _impl.flow_fold


def compiled_backend():
    """The compiled module, or None when it is not available."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


def is_budget_error(exc: BaseException) -> bool:
    return type(exc).__name__ == "BudgetExceeded"
