import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mbtsim.cmaes import ask, default_params, init_state, minimize, tell


def sphere(x):
    return float(np.dot(x, x))


def test_default_params_reference_values():
    # standard defaults for n = 10: lambda = 4 + floor(3 ln 10) = 10, mu = 5
    p = default_params(10)
    assert (p.lam, p.mu) == (10, 5)
    assert p.weights.sum() == pytest.approx(1.0)
    assert np.all(np.diff(p.weights) < 0)
    assert p.mu_eff == pytest.approx(1.0 / np.sum(p.weights ** 2))
    assert p.c_1 == pytest.approx(2.0 / (11.3 ** 2 + p.mu_eff))
    assert p.chi_n == pytest.approx(np.sqrt(10) * (1 - 1 / 40 + 1 / 2100))


def test_param_validation():
    with pytest.raises(ValueError):
        default_params(0)
    with pytest.raises(ValueError):
        default_params(3, lam=3)
    with pytest.raises(ValueError):
        minimize(sphere, [1.0, 1.0], 0.5, budget=3)
    with pytest.raises(ValueError):
        init_state([1.0], 0.0)


def test_sphere_converges():
    x, f, evals = minimize(sphere, np.full(5, 3.0), 1.0, budget=50_000, seed=1, ftarget=1e-10)
    assert f < 1e-9
    assert evals <= 50_000
    assert np.linalg.norm(x) < 1e-4


def test_budget_is_spent_exactly():
    _, _, evals = minimize(sphere, np.ones(3), 1.0, budget=101, seed=0)
    assert evals == 101


def test_same_seed_same_result():
    a = minimize(sphere, np.ones(4), 0.7, budget=400, seed=9)
    b = minimize(sphere, np.ones(4), 0.7, budget=400, seed=9)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


def test_nan_objective_rejected():
    p = default_params(2)
    s = init_state([0.0, 0.0], 1.0)
    X = ask(s, p, np.random.default_rng(0))
    with pytest.raises(ValueError):
        tell(s, p, X, np.full(p.lam, np.nan))


def _history(objective, x0, sigma0, seed, gens=40):
    p = default_params(len(x0))
    s = init_state(x0, sigma0)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(gens):
        X = ask(s, p, rng)
        tell(s, p, X, [objective(x) for x in X])
        out.append((s.sigma, s.C.copy(), s.mean.copy()))
    return out


def test_translation_invariance():
    shift = np.array([1000.0, -250.0, 64.0])
    ref = _history(sphere, np.array([1.0, 2.0, -1.0]), 0.5, seed=3)
    moved = _history(lambda x: sphere(x - shift), np.array([1.0, 2.0, -1.0]) + shift, 0.5, seed=3)
    for (s1, c1, m1), (s2, c2, m2) in zip(ref, moved):
        assert s1 == s2
        assert np.array_equal(c1, c2)
        assert np.allclose(m2 - shift, m1, atol=1e-9)


@pytest.mark.parametrize("k", [-3, 4])
def test_scale_equivariance_of_argmin(k):
    s = 2.0 ** k
    x0 = np.array([0.8, -1.3, 2.1])
    f_ref = lambda x: sphere(x - 0.3) + x[0] * x[1]  # noqa: E731
    xa, fa, _ = minimize(f_ref, x0, 0.5, budget=600, seed=5)
    xb, fb, _ = minimize(lambda y: f_ref(y / s), x0 * s, 0.5 * s, budget=600, seed=5)
    assert np.array_equal(xb, xa * s)
    assert fa == fb


@given(st.integers(0, 1000), st.integers(2, 6))
def test_best_value_is_monotone(seed, n):
    seen = []
    minimize(sphere, np.ones(n), 1.0, budget=200, seed=seed, callback=lambda s: seen.append(s.best_f))
    assert all(b <= a for a, b in zip(seen, seen[1:]))


def test_covariance_stays_symmetric_positive_definite():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(6, 6))
    H = A @ A.T + np.eye(6)

    def check(s):
        assert np.array_equal(s.C, s.C.T)
        assert np.linalg.eigvalsh(s.C).min() > 0

    minimize(lambda x: float(x @ H @ x), np.ones(6), 1.0, budget=2000, seed=2, callback=check)
