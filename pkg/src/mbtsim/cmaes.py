"""Covariance Matrix Adaptation Evolution Strategy (positive weights, rank-1 + rank-mu).

Typical use::

    x, fx, evals = minimize(f, x0=[3.0, 3.0], sigma0=1.0, budget=2000, seed=1)

or drive the ask/tell loop directly with `default_params`, `init_state`,
`ask` and `tell`. All randomness comes from the generator passed in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

EIGEN_FLOOR = 1e-14


class NumericalDegeneracyError(FloatingPointError):
    """Covariance matrix could not be repaired into a positive-definite one."""


@dataclass(frozen=True)
class CmaParams:
    n: int
    lam: int
    mu: int
    weights: np.ndarray
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi_n: float

    @property
    def eigen_gap(self) -> int:
        """Generations between eigendecompositions."""
        return max(1, int(1.0 / (10.0 * self.n * (self.c_1 + self.c_mu))))


def default_params(n: int, lam: int | None = None) -> CmaParams:
    if n < 1:
        raise ValueError("dimension must be >= 1")
    lam = lam or 4 + int(math.floor(3 * math.log(n)))
    if lam < 4:
        raise ValueError("population size must be >= 4")
    mu = lam // 2
    w = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
    w = w / w.sum()
    mu_eff = 1.0 / float(np.sum(w ** 2))
    c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
    c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n)
    c_1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
    c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
    chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))
    return CmaParams(n, lam, mu, w, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu, chi_n)


@dataclass
class CmaState:
    mean: np.ndarray
    sigma: float
    C: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    B: np.ndarray
    D: np.ndarray
    generation: int = 0
    evals: int = 0
    best_x: np.ndarray | None = None
    best_f: float = math.inf
    eigen_generation: int = 0
    # deviations of the last asked population, so tell() need not
    # reconstruct them from x (keeps updates translation-exact)
    last_x: np.ndarray | None = field(default=None, repr=False)
    last_y: np.ndarray | None = field(default=None, repr=False)


def init_state(x0: Sequence[float], sigma0: float) -> CmaState:
    x0 = np.asarray(x0, dtype=float).copy()
    if x0.ndim != 1 or x0.size < 1:
        raise ValueError("x0 must be a non-empty vector")
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive")
    n = x0.size
    return CmaState(mean=x0, sigma=float(sigma0), C=np.eye(n), p_sigma=np.zeros(n),
                    p_c=np.zeros(n), B=np.eye(n), D=np.ones(n))


def _decompose(state: CmaState) -> None:
    C = (state.C + state.C.T) / 2.0
    if not np.all(np.isfinite(C)):
        raise NumericalDegeneracyError("covariance has non-finite entries")
    evals, B = np.linalg.eigh(C)
    top = evals.max()
    if not top > 0:
        raise NumericalDegeneracyError("covariance has no positive eigenvalue")
    floor = EIGEN_FLOOR * top
    if evals.min() < floor:
        evals = np.maximum(evals, floor)
        C = (B * evals) @ B.T
        C = (C + C.T) / 2.0
    state.C = C
    state.B = B
    state.D = np.sqrt(evals)


def ask(state: CmaState, params: CmaParams, rng: np.random.Generator) -> np.ndarray:
    """Sample `lam` candidates from N(mean, sigma^2 C); rows are candidates."""
    z = rng.standard_normal((params.lam, params.n))
    y = (z * state.D) @ state.B.T
    x = state.mean + state.sigma * y
    state.last_x, state.last_y = x, y
    return x.copy()


def tell(state: CmaState, params: CmaParams, candidates, values) -> CmaState:
    """Update the distribution from evaluated candidates (minimisation)."""
    X = np.asarray(candidates, dtype=float)
    f = np.asarray(values, dtype=float)
    if X.shape != (params.lam, params.n) or f.shape != (params.lam,):
        raise ValueError(f"expected {params.lam} candidates of dimension {params.n} and as many values")
    if np.isnan(f).any():
        raise ValueError("objective returned NaN")
    if np.any(f == -np.inf):
        raise ValueError("objective returned -inf")
    if state.last_y is not None and state.last_x is not None and np.array_equal(X, state.last_x):
        Y = state.last_y
    else:
        Y = (X - state.mean) / state.sigma
    state.last_x = state.last_y = None

    n, g = params.n, state.generation
    order = np.argsort(f, kind="stable")
    sel = order[: params.mu]
    w = params.weights
    y_w = w @ Y[sel]

    state.mean = state.mean + state.sigma * y_w
    inv_sqrt_C = (state.B / state.D) @ state.B.T
    cs = params.c_sigma
    state.p_sigma = (1.0 - cs) * state.p_sigma + math.sqrt(cs * (2.0 - cs) * params.mu_eff) * (inv_sqrt_C @ y_w)
    ps_norm = float(np.linalg.norm(state.p_sigma))
    h_sigma = ps_norm / math.sqrt(1.0 - (1.0 - cs) ** (2 * (g + 1))) < (1.4 + 2.0 / (n + 1)) * params.chi_n
    cc = params.c_c
    state.p_c = (1.0 - cc) * state.p_c + (math.sqrt(cc * (2.0 - cc) * params.mu_eff) * y_w if h_sigma else 0.0)
    delta_h = 0.0 if h_sigma else cc * (2.0 - cc)
    rank_mu = (Y[sel].T * w) @ Y[sel]
    state.C = ((1.0 + params.c_1 * delta_h - params.c_1 - params.c_mu) * state.C
               + params.c_1 * np.outer(state.p_c, state.p_c) + params.c_mu * rank_mu)
    state.C = (state.C + state.C.T) / 2.0
    state.sigma = state.sigma * math.exp((cs / params.d_sigma) * (ps_norm / params.chi_n - 1.0))

    i_best = order[0]
    if f[i_best] < state.best_f:
        state.best_f = float(f[i_best])
        state.best_x = X[i_best].copy()
    state.generation = g + 1
    state.evals += params.lam
    if state.generation - state.eigen_generation >= params.eigen_gap:
        _decompose(state)
        state.eigen_generation = state.generation
    return state


def minimize(objective: Callable[[np.ndarray], float], x0: Sequence[float], sigma0: float,
             budget: int, seed: int = 0, ftarget: float | None = None, tolx: float = 0.0,
             lam: int | None = None, callback: Callable[[CmaState], None] | None = None
             ) -> tuple[np.ndarray, float, int]:
    """Minimise `objective` from `x0`; returns (best x, best value, evaluations).

    Stops when the budget is spent, the best value reaches `ftarget`, or
    sigma times the largest coordinate deviation drops below `tolx`. A final
    partial generation spends the budget exactly; its unevaluated members
    count as +inf.
    """
    x0 = np.asarray(x0, dtype=float)
    params = default_params(x0.size, lam)
    if budget < params.lam:
        raise ValueError(f"budget {budget} smaller than population size {params.lam}")
    rng = np.random.default_rng(seed)
    state = init_state(x0, sigma0)
    evals = 0
    while evals < budget:
        X = ask(state, params, rng)
        r = min(params.lam, budget - evals)
        f = np.full(params.lam, np.inf)
        for i in range(r):
            f[i] = float(objective(X[i]))
        evals += r
        tell(state, params, X, f)
        state.evals = evals
        if callback is not None:
            callback(state)
        if ftarget is not None and state.best_f <= ftarget:
            break
        if tolx > 0 and state.sigma * math.sqrt(float(np.max(np.diag(state.C)))) < tolx:
            break
    return state.best_x.copy(), state.best_f, evals
