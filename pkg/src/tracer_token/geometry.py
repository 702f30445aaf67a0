"""Contact geometry, backed by the compiled kernel when it is importable.

Set ``TRACER_TOKEN_PURE=1`` to force the pure-Python kernels.
"""

import os
from array import array

if os.environ.get("TRACER_TOKEN_PURE"):
    from . import _geometry_py as _impl
    BACKEND = "python"
else:
    try:
        from . import _geometry as _impl
        BACKEND = "cython"
    except ImportError:
        from . import _geometry_py as _impl
        BACKEND = "python"

PATH_LOSS_EXPONENT = 2.0
REFERENCE_POWER = -59.0  # dBm at 1 m


def neighbor_pairs(xs, ys, radius):
    return _impl.neighbor_pairs(array("d", xs), array("d", ys), float(radius))


def rssi_hints(distances, tx_power=REFERENCE_POWER, exponent=PATH_LOSS_EXPONENT):
    return _impl.rssi_hints(array("d", distances), float(tx_power), float(exponent))
