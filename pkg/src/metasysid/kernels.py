"""Backend selection for the simulation kernels.

Importing this module picks the compiled extension when it is available and
falls back to the pure-numpy implementation otherwise. Setting the
environment variable ``METASYSID_PURE_PYTHON=1`` forces the fallback, which
is mainly useful for benchmarking the two side by side.
"""

from __future__ import annotations

import os

if os.environ.get("METASYSID_PURE_PYTHON", "").strip() not in ("", "0"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

BACKEND: str = _impl.BACKEND

simulate_blocks = _impl.simulate_blocks
closed_loop_blocks = _impl.closed_loop_blocks


def backend() -> str:
    """Name of the active kernel backend: ``"compiled"`` or ``"python"``."""
    return BACKEND
