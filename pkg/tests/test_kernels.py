"""Both kernel backends must agree bit for bit."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mbtsim import kernels

needs_cython = pytest.mark.skipif("cython" not in kernels.BACKENDS, reason="extension not built")


def test_python_backend_always_available():
    assert "python" in kernels.BACKENDS
    with kernels.use_backend("python"):
        assert kernels.BACKEND == "python"


def _run(backend, fn, *args):
    with kernels.use_backend(backend):
        return fn(*args)


@needs_cython
@given(st.integers(0, 2**32 - 1), st.booleans(), st.integers(1, 4))
def test_propagate_parity(seed, mode_hdg, n_fix):
    rng = np.random.default_rng(seed)
    rx = rng.uniform(-40, 40, n_fix)
    ry = rng.uniform(-40, 40, n_fix)
    rfl = np.where(rng.random(n_fix) < 0.5, np.nan, rng.choice([250.0, 300.0, 350.0], n_fix))
    args = (*rng.uniform(-40, 40, 2), float(rng.uniform(200, 400)), float(rng.uniform(0, 360)),
            float(rng.uniform(250, 500)), float(rng.choice([250.0, 330.0, 400.0])),
            float(rng.uniform(1000, 3000)), float(rng.uniform(1000, 3000)), float(rng.uniform(1, 5)),
            mode_hdg, float(rng.uniform(0, 360)), rx, ry, rfl, 0,
            float(rng.uniform(-30, 30)), float(rng.uniform(-30, 30)), 5.0, 150, 1.0)
    a = _run("python", kernels.propagate, *args)
    b = _run("cython", kernels.propagate, *args)
    for u, v in zip(a[:4], b[:4]):
        assert np.array_equal(u, v)
    assert a[4:] == b[4:]


@needs_cython
@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_pair_scan_parity(seed, n):
    rng = np.random.default_rng(seed)
    T = 40
    X = np.cumsum(rng.normal(0, 0.6, (n, T)), axis=1) + rng.uniform(-10, 10, (n, 1))
    Y = np.cumsum(rng.normal(0, 0.6, (n, T)), axis=1) + rng.uniform(-10, 10, (n, 1))
    F = rng.choice([320.0, 325.0, 330.0], (n, 1)) + np.zeros((n, T))
    valid = rng.random((n, T)) < 0.95
    a = _run("python", kernels.pair_scan, X, Y, F, valid, 5.0, 10.0)
    b = _run("cython", kernels.pair_scan, X, Y, F, valid, 5.0, 10.0)
    for u, v in zip(a, b):
        assert u.shape == v.shape
        assert np.array_equal(u, v)


@needs_cython
def test_full_run_identical_across_backends():
    from mbtsim.agents import Hawk
    from mbtsim.harness.formats import dumps_log
    from mbtsim.harness.generator import MIXED, PatternSpec, generate_scenario
    from mbtsim.simcore import run_scenario

    sc = generate_scenario(PatternSpec(MIXED, 4, 1.0, 2))
    logs = [dumps_log(_run(b, run_scenario, sc, Hawk())) for b in ("python", "cython")]
    assert logs[0] == logs[1]
