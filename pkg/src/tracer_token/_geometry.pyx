# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled contact-geometry kernels; same contract as ``_geometry_py``."""

from libc.math cimport sqrt, log10


def neighbor_pairs(double[:] xs, double[:] ys, double radius):
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, d2
    cdef double r2 = radius * radius
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            dx = xs[i] - xs[j]
            dy = ys[i] - ys[j]
            d2 = dx * dx + dy * dy
            if d2 <= r2:
                out.append((i, j, sqrt(d2)))
    return out


def rssi_hints(double[:] distances, double tx_power, double exponent):
    cdef Py_ssize_t n = distances.shape[0]
    cdef Py_ssize_t k
    cdef double v
    out = []
    for k in range(n):
        v = tx_power - 10.0 * exponent * log10(distances[k] if distances[k] > 0.1 else 0.1)
        out.append(<int>(v - 0.5) if v < 0 else <int>(v + 0.5))
    return out
