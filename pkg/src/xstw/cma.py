"""Self-contained CMA-ES (ask/tell) for derivative-free minimization.

Non-active covariance adaptation with the standard rank-one plus rank-mu
update and cumulative step-size control; constants follow Hansen's tutorial
defaults (arXiv:1604.00772, table 1).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np


def default_population(n: int) -> int:
    """Default population size 4 + floor(3 ln n)."""
    if n < 1:
        raise ValueError(f"dimension {n} must be positive")
    return 4 + int(3 * math.log(n))


@dataclasses.dataclass
class CmaConfig:
    x0: np.ndarray
    sigma0: float
    population: int | None = None
    seed: int = 0
    max_evals: int = 10_000

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=np.float64)
        if self.x0.ndim != 1:
            raise ValueError("x0 must be a vector")
        if not np.all(np.isfinite(self.x0)):
            raise ValueError("x0 must be finite")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if self.population is None:
            self.population = default_population(len(self.x0))
        if self.population < 2:
            raise ValueError("population must be at least 2")

    @property
    def dimension(self) -> int:
        return len(self.x0)


class CmaState:
    """Evolving mean, step size, covariance, and evolution paths."""

    def __init__(self, config: CmaConfig):
        n = config.dimension
        lam = config.population
        mu = lam // 2
        raw = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        weights = raw / raw.sum()
        mueff = 1.0 / float(np.sum(weights**2))

        self.config = config
        self.n = n
        self.lam = lam
        self.mu = mu
        self.weights = weights
        self.mueff = mueff
        self.c_sigma = (mueff + 2) / (n + mueff + 5)
        self.d_sigma = (
            1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + self.c_sigma
        )
        self.c_c = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
        self.c_1 = 2 / ((n + 1.3) ** 2 + mueff)
        self.c_mu = min(
            1 - self.c_1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff)
        )
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.eigen_gap = max(1, int(1.0 / (10 * n * (self.c_1 + self.c_mu))))

        self.mean = config.x0.copy()
        self.sigma = float(config.sigma0)
        self.cov = np.eye(n)
        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self.generation = 0
        self.evals = 0
        self.best_x = config.x0.copy()
        self.best_f = math.inf
        self.rng = np.random.default_rng(config.seed)
        self._eigen_basis = np.eye(n)  # B
        self._eigen_scale = np.ones(n)  # D (standard deviations per axis)
        self._eigen_generation = 0
        self._pending: np.ndarray | None = None

    def _refresh_eigen(self) -> None:
        cov = (self.cov + self.cov.T) / 2.0
        eigvals, basis = np.linalg.eigh(cov)
        floor = max(eigvals.max(), 0.0) * 1e-20
        eigvals = np.maximum(eigvals, max(floor, 1e-300))
        assert eigvals.min() > 0
        self.cov = cov
        self._eigen_basis = basis
        self._eigen_scale = np.sqrt(eigvals)
        self._eigen_generation = self.generation

    def _cov_inv_sqrt_times(self, v: np.ndarray) -> np.ndarray:
        b, d = self._eigen_basis, self._eigen_scale
        return b @ ((b.T @ v) / d)


def ask(state: CmaState) -> np.ndarray:
    """Sample the next generation, shape (population, n)."""
    if not (
        np.all(np.isfinite(state.mean))
        and math.isfinite(state.sigma)
        and state.sigma > 0
    ):
        raise FloatingPointError("diverged")
    if state.generation - state._eigen_generation >= state.eigen_gap:
        state._refresh_eigen()
    z = state.rng.standard_normal((state.lam, state.n))
    y = (state._eigen_basis * state._eigen_scale) @ z.T  # B D z
    candidates = state.mean[None, :] + state.sigma * y.T
    state._pending = candidates
    return candidates


def _sanitize(fitnesses: np.ndarray) -> np.ndarray:
    finite = np.isfinite(fitnesses)
    if finite.all():
        return fitnesses
    if not finite.any():
        raise ValueError("all fitnesses non-finite")
    worst = fitnesses[finite].max()
    bad = worst + 0.1 * max(abs(worst), 1e-12)
    out = fitnesses.copy()
    out[~finite] = bad
    return out


def tell(state: CmaState, candidates: np.ndarray, fitnesses) -> CmaState:
    """Consume one generation of index-aligned fitnesses and adapt."""
    candidates = np.asarray(candidates, dtype=np.float64)
    fitnesses = np.asarray(fitnesses, dtype=np.float64)
    if fitnesses.shape != (state.lam,):
        raise ValueError(f"need {state.lam} fitnesses, got {fitnesses.shape}")
    if candidates.shape != (state.lam, state.n):
        raise ValueError("candidate shape mismatch")

    ranked_f = _sanitize(fitnesses)
    order = np.argsort(ranked_f, kind="stable")
    parents = candidates[order[: state.mu]]

    finite = np.isfinite(fitnesses)
    if finite.any():
        gen_best = int(np.nonzero(finite)[0][np.argmin(fitnesses[finite])])
        if fitnesses[gen_best] < state.best_f:
            state.best_f = float(fitnesses[gen_best])
            state.best_x = candidates[gen_best].copy()

    old_mean = state.mean
    y_parents = (parents - old_mean[None, :]) / state.sigma
    y_w = state.weights @ y_parents
    state.mean = old_mean + state.sigma * y_w

    cs, cc, c1, cmu = state.c_sigma, state.c_c, state.c_1, state.c_mu
    state.p_sigma = (1 - cs) * state.p_sigma + math.sqrt(
        cs * (2 - cs) * state.mueff
    ) * state._cov_inv_sqrt_times(y_w)
    norm_ps = float(np.linalg.norm(state.p_sigma))
    expected = math.sqrt(1 - (1 - cs) ** (2 * (state.generation + 1)))
    hsig = norm_ps / expected / state.chi_n < 1.4 + 2 / (state.n + 1)

    state.p_c = (1 - cc) * state.p_c
    if hsig:
        state.p_c = state.p_c + math.sqrt(cc * (2 - cc) * state.mueff) * y_w

    rank_one = np.outer(state.p_c, state.p_c)
    if not hsig:
        rank_one = rank_one + cc * (2 - cc) * state.cov
    rank_mu = (y_parents.T * state.weights) @ y_parents
    state.cov = (1 - c1 - cmu) * state.cov + c1 * rank_one + cmu * rank_mu

    state.sigma *= math.exp((cs / state.d_sigma) * (norm_ps / state.chi_n - 1))
    state.generation += 1
    state.evals += state.lam
    state._pending = None
    return state


@dataclasses.dataclass(frozen=True)
class HistoryRow:
    generation: int
    evals: int
    best_f: float
    median_f: float
    sigma: float


def _call_with_retry(objective, x: np.ndarray) -> float:
    try:
        return float(objective(x))
    except Exception:
        try:
            return float(objective(x))
        except Exception:
            return math.nan


def optimize(
    config: CmaConfig, objective, map_fn=None
) -> tuple[np.ndarray, float, list[HistoryRow]]:
    """Run ask/tell until the evaluation budget is spent.

    ``map_fn`` may evaluate one generation concurrently; it must preserve
    order (like the builtin ``map``).  x0 is always evaluated once so the
    best-so-far is defined even with a zero budget.
    """
    if map_fn is None:
        map_fn = map
    state = CmaState(config)

    f0 = _call_with_retry(objective, config.x0.copy())
    state.evals = 1
    if math.isfinite(f0):
        state.best_f = f0
        state.best_x = config.x0.copy()
    history = [
        HistoryRow(
            generation=0,
            evals=state.evals,
            best_f=state.best_f,
            median_f=f0 if math.isfinite(f0) else math.inf,
            sigma=state.sigma,
        )
    ]

    while state.evals + state.lam <= config.max_evals:
        candidates = ask(state)
        fitnesses = np.array(
            list(map_fn(lambda x: _call_with_retry(objective, x), candidates))
        )
        tell(state, candidates, fitnesses)
        finite = fitnesses[np.isfinite(fitnesses)]
        median = float(np.median(finite)) if finite.size else math.inf
        history.append(
            HistoryRow(
                generation=state.generation,
                evals=state.evals,
                best_f=state.best_f,
                median_f=median,
                sigma=state.sigma,
            )
        )
    return state.best_x.copy(), state.best_f, history
