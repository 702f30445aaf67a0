import importlib
import os
from array import array

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracer_token import _geometry_py, geometry

try:
    compiled = importlib.import_module("tracer_token._geometry")
except ImportError:  # extension not built
    compiled = None

needs_ext = pytest.mark.skipif(compiled is None, reason="compiled kernel not built")

coords = st.lists(
    st.tuples(st.floats(-50, 50, allow_nan=False), st.floats(-50, 50, allow_nan=False)),
    max_size=40,
)


def test_pairs_small_example():
    pairs = geometry.neighbor_pairs([0, 1, 5], [0, 0, 0], 2.0)
    assert pairs == [(0, 1, 1.0)]


def test_pairs_boundary_inclusive():
    assert geometry.neighbor_pairs([0, 3], [0, 4], 5.0) == [(0, 1, 5.0)]


def test_rssi_examples():
    assert geometry.rssi_hints([1.0, 10.0, 0.0]) == [-59, -79, -39]


@needs_ext
@settings(max_examples=200, deadline=None)
@given(pts=coords, radius=st.floats(0, 20, allow_nan=False))
def test_pairs_backends_agree(pts, radius):
    xs = array("d", [p[0] for p in pts])
    ys = array("d", [p[1] for p in pts])
    assert compiled.neighbor_pairs(xs, ys, radius) == _geometry_py.neighbor_pairs(xs, ys, radius)


@needs_ext
@settings(max_examples=200, deadline=None)
@given(ds=st.lists(st.floats(0, 1e4, allow_nan=False), max_size=50),
       tx=st.floats(-100, 20, allow_nan=False), exp=st.floats(1, 4, allow_nan=False))
def test_rssi_backends_agree(ds, tx, exp):
    d = array("d", ds)
    assert compiled.rssi_hints(d, tx, exp) == _geometry_py.rssi_hints(d, tx, exp)


def test_backend_reported():
    assert geometry.BACKEND in ("cython", "python")
    if os.environ.get("TRACER_TOKEN_PURE"):
        assert geometry.BACKEND == "python"
    elif compiled is not None:
        assert geometry.BACKEND == "cython"
