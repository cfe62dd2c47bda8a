import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from orbit import _core

pytestmark = pytest.mark.skipif(_core.compiled_backend is None, reason="compiled extension not built")

py, cy = _core.python_backend, _core.compiled_backend

finite = st.floats(-2.0, 2.0, allow_nan=False, width=64)


@settings(max_examples=40, deadline=None)
@given(
    img=hnp.arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9)), elements=finite),
    w=hnp.arrays(np.float64, (3, 3, 3), elements=finite),
    b=hnp.arrays(np.float64, (3,), elements=finite),
)
def test_conv3x3_backends_bit_identical(img, w, b):
    assert np.array_equal(py.conv3x3(img, w, b), cy.conv3x3(img, w, b))


@settings(max_examples=40, deadline=None)
@given(data=st.data(), c=st.integers(1, 7), n=st.integers(1, 60))
def test_confusion_matrix_backends_agree(data, c, n):
    p = np.array(data.draw(st.lists(st.integers(0, c - 1), min_size=n, max_size=n)), dtype=np.uint8).reshape(1, n)
    r = np.array(data.draw(st.lists(st.integers(0, c - 1), min_size=n, max_size=n)), dtype=np.uint8).reshape(1, n)
    assert np.array_equal(py.confusion_matrix(p, r, c), cy.confusion_matrix(p, r, c))


@settings(max_examples=40, deadline=None)
@given(
    corpus=hnp.arrays(np.float64, st.tuples(st.integers(1, 12), st.just(5)), elements=finite),
    q=hnp.arrays(np.float64, (5,), elements=finite),
)
def test_nearest_backends_agree(corpus, q):
    d_py, i_py = py.nearest(q, corpus)
    d_cy, i_cy = cy.nearest(q, corpus)
    assert i_py == i_cy
    assert d_py == pytest.approx(d_cy, rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(objs=hnp.arrays(np.float64, st.tuples(st.integers(1, 25), st.just(2)),
                       elements=st.sampled_from([0.0, 0.25, 0.5, 1.0, 2.0])))
def test_nondominated_ranks_backends_agree(objs):
    assert np.array_equal(py.nondominated_ranks(objs), cy.nondominated_ranks(objs))


def test_pairwise_mean_distance_backends_agree(rng):
    pts = rng.normal(size=(40, 7))
    assert py.pairwise_mean_distance(pts) == pytest.approx(cy.pairwise_mean_distance(pts), rel=1e-12)


def test_backend_flag_names_the_active_backend():
    assert _core.BACKEND in ("cython", "python")
    expected = cy if _core.BACKEND == "cython" else py
    assert _core.conv3x3 is expected.conv3x3


def test_pure_python_fallback_selected_by_env(monkeypatch):
    import importlib

    monkeypatch.setenv("ORBIT_PURE_PYTHON", "1")
    mod = importlib.reload(_core)
    try:
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("ORBIT_PURE_PYTHON")
        importlib.reload(_core)
