import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qkdnet import kernels

backends = [kernels.python_backend]
if kernels.compiled_backend is not None:
    backends.append(kernels.compiled_backend)
needs_compiled = pytest.mark.skipif(kernels.compiled_backend is None,
                                    reason="compiled extension not built")


def sorted_events(draw, max_sync=40, max_n=60):
    n = draw(st.integers(0, max_n))
    sync = np.sort(np.array(draw(st.lists(st.integers(0, max_sync), min_size=n, max_size=n)),
                            dtype=np.int64))
    return sync


@st.composite
def event_pairs(draw):
    sa, sb = sorted_events(draw), sorted_events(draw)
    oa = np.array(draw(st.lists(st.integers(0, 3), min_size=sa.size, max_size=sa.size)), np.int8)
    ob = np.array(draw(st.lists(st.integers(0, 3), min_size=sb.size, max_size=sb.size)), np.int8)
    return sa, oa, sb, ob


@pytest.mark.parametrize("impl", backends, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_dead_time_filter_basic(impl):
    t = np.array([0.0, 0.5, 1.0, 1.2, 2.5, 2.6])
    keep, last = impl.dead_time_filter(t, 1.0, -np.inf)
    assert list(np.asarray(keep)) == [True, False, True, False, True, False]
    assert last == 2.5
    keep, last = impl.dead_time_filter(np.array([3.0, 3.6]), 1.0, 2.5)
    assert list(np.asarray(keep)) == [False, True]


@needs_compiled
@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 100), max_size=80), st.floats(0, 5), st.floats(-10, 10))
def test_dead_time_parity(times, tau, last):
    t = np.sort(np.array(times, dtype=np.float64))
    k1, l1 = kernels.python_backend.dead_time_filter(t, tau, last)
    k2, l2 = kernels.compiled_backend.dead_time_filter(t, tau, last)
    assert np.array_equal(np.asarray(k1), np.asarray(k2)) and l1 == l2


@needs_compiled
@settings(max_examples=200, deadline=None)
@given(event_pairs())
def test_coincidence_parity(ev):
    t1, a1 = kernels.python_backend.pulse_coincidences(*ev)
    t2, a2 = kernels.compiled_backend.pulse_coincidences(*ev)
    assert np.array_equal(np.asarray(t1), np.asarray(t2)) and a1 == a2


@needs_compiled
@settings(max_examples=200, deadline=None)
@given(event_pairs())
def test_histogram_parity(ev):
    sa, oa, sb, ob = ev
    args = (sa, oa.astype(np.int64) * 7, sb, ob.astype(np.int64) * 5, 32)
    h1 = kernels.python_backend.pulse_histogram2d(*args)
    h2 = kernels.compiled_backend.pulse_histogram2d(*args)
    assert np.array_equal(np.asarray(h1), np.asarray(h2))


def test_backend_selection_env():
    code = "from qkdnet import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, QKDNET_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
    env["QKDNET_PURE_PYTHON"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == ("compiled" if kernels.compiled_backend else "python")
