"""Hot-kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback
keeps everything working without it.  ``OCTASK_KERNELS=python`` forces
the fallback, ``OCTASK_KERNELS=compiled`` makes a missing extension an
import error instead of a silent downgrade.
"""

import os

_choice = os.environ.get("OCTASK_KERNELS", "auto").strip().lower() or "auto"

if _choice in ("auto", "compiled", "c"):
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _choice != "auto":
            raise
        from . import _pykernels as _impl
elif _choice in ("python", "py"):
    from . import _pykernels as _impl
else:
    raise RuntimeError(
        f"OCTASK_KERNELS={_choice!r} not understood (use 'auto', 'compiled' or 'python')"
    )

BACKEND = _impl.BACKEND_NAME

hw_counter_available = _impl.hw_counter_available
hw_timestamp = _impl.hw_timestamp
maclaurin_partial = _impl.maclaurin_partial
direct_potential = _impl.direct_potential
gravity_walk = _impl.gravity_walk
max_signal = _impl.max_signal
hydro_update = _impl.hydro_update

__all__ = [
    "BACKEND",
    "hw_counter_available",
    "hw_timestamp",
    "maclaurin_partial",
    "direct_potential",
    "gravity_walk",
    "max_signal",
    "hydro_update",
]
