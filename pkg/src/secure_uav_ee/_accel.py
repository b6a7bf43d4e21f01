"""Optional numba acceleration.

Set ``SECURE_UAV_NUMBA=0`` to force the pure-numpy kernels (also used
automatically when numba is not importable).
"""

import os

USE_NUMBA = os.environ.get("SECURE_UAV_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None
    USE_NUMBA = False
