"""Pure-Python contact-geometry kernels (fallback for ``_geometry``)."""

import math


def neighbor_pairs(xs, ys, radius):
    """All index pairs ``(i, j, distance)`` with ``i < j`` and distance <= radius."""
    n = len(xs)
    r2 = radius * radius
    out = []
    for i in range(n):
        xi, yi = xs[i], ys[i]
        for j in range(i + 1, n):
            dx = xi - xs[j]
            dy = yi - ys[j]
            d2 = dx * dx + dy * dy
            if d2 <= r2:
                out.append((i, j, math.sqrt(d2)))
    return out


def rssi_hints(distances, tx_power, exponent):
    """Log-distance path loss, rounded half away from zero; distances floored at 0.1 m."""
    out = []
    for d in distances:
        v = tx_power - 10.0 * exponent * math.log10(max(d, 0.1))
        out.append(int(v - 0.5) if v < 0 else int(v + 0.5))
    return out
