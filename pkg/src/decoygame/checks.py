"""Self-checks shared by the CLI and the acceptance suite.

Each check returns a small result object with the measured quantities and a
``passed`` flag, so callers can print or assert as they see fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import challenger as ch
from . import model
from .datagen import envelope_constant, density_ratio, rejection_sample, sample_class
from .domain import ChallengerMode, GameConfig, Scenario, ScenarioSpec, TrainHyper
from .engine import run_game
from .model import Role


@dataclass
class GradCheckResult:
    trials: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradcheck_trials(trials: int = 100, epsilon: float = 1e-5, tolerance: float = 1e-4, seed: int = 0):
    """Backprop against central differences on random architectures and batches."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        d = int(rng.integers(1, 5))
        hidden = tuple(int(h) for h in rng.integers(1, 9, size=int(rng.integers(0, 3))))
        n = int(rng.integers(1, 17))
        params = model.init_params(d, hidden, Role.ADVERSARY, rng.integers(2**31))
        X = rng.normal(size=(n, d))
        y = rng.integers(0, 2, size=n)
        worst = max(worst, model.grad_check(params, X, y, epsilon))
    return GradCheckResult(trials, worst, tolerance)


@dataclass
class SelectionCheckResult:
    instances: int
    mismatches: int
    k1_max_rel_error: float
    value_max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        errors = (self.k1_max_rel_error, self.value_max_rel_error)
        return self.mismatches == 0 and max(errors) <= self.tolerance


def relaxed_selection(probs, K: int, hyper: TrainHyper, features=None, hidden=(), seed=0):
    """Train the relaxed selector on one pool and return its top-K index set and value.

    Without ``features`` the scorer is free per post (one-hot inputs into a
    zero-initialised linear layer), which is the unconstrained setting where
    relaxed and discrete optima coincide.
    """
    probs = np.asarray(probs, dtype=float)
    n = len(probs)
    if features is None:
        X = np.eye(n)
        phi = model.zero_params(n, (), Role.CHALLENGER)
    else:
        X = np.asarray(features, dtype=float)
        phi = model.init_params(X.shape[1], hidden, Role.CHALLENGER, seed)
    phi = ch.train_d2(phi, X, probs, hyper)
    g = model.logits(phi, X)
    top = ch._top_k(g, np.arange(n), K)
    return set(int(i) for i in top), ch.d2_loss(phi, X, probs)


def selection_equivalence(
    instances: int = 100,
    seed: int = 1000,
    hyper: TrainHyper = TrainHyper(learning_rate=10.0, epochs=3000),
    tolerance: float = 1e-3,
    mlp_hidden: tuple[int, ...] | None = None,
) -> SelectionCheckResult:
    """Compare relaxed top-K against the exhaustive discrete optimum.

    Instances draw ``N`` in [2, 12], ``K`` in [1, min(4, N)] and adversary
    probabilities uniform in (0.01, 0.99). With ``mlp_hidden`` the scorer is an
    MLP over random 2-D features instead of a free per-post score.

    The relaxed value is a convex combination of per-post costs, so for every
    K it should approach the single largest cost; for K = 1 that is also the
    discrete optimum.
    """
    mismatches = 0
    worst = 0.0
    worst_value = 0.0
    for i in range(instances):
        rng = np.random.default_rng(seed + i)
        N = int(rng.integers(2, 13))
        K = int(rng.integers(1, min(4, N) + 1))
        probs = rng.uniform(0.01, 0.99, N)
        if mlp_hidden is None:
            top, value = relaxed_selection(probs, K, hyper)
        else:
            top, value = relaxed_selection(probs, K, hyper, rng.normal(size=(N, 2)), mlp_hidden, seed + i)
        w, V = ch.brute_force_discrete_optimum(probs, K)
        mismatches += top != set(np.flatnonzero(w).tolist())
        best_single = float(ch.decoy_costs(probs).max())
        worst_value = max(worst_value, abs(value - best_single) / best_single)
        if K == 1:
            worst = max(worst, abs(value - V) / V)
    return SelectionCheckResult(instances, mismatches, worst, worst_value, tolerance)


@dataclass
class SamplerCheckResult:
    draws: int
    accepted: int
    acceptance_rate: float
    envelope: float
    chi2: float
    dof: int
    p_value: float
    alpha: float
    rate_tolerance: float

    @property
    def rate_error(self) -> float:
        return abs(self.acceptance_rate * self.envelope - 1.0)

    @property
    def passed(self) -> bool:
        return self.rate_error <= self.rate_tolerance and self.p_value > self.alpha


def grid_cell_probs(mean, sigma: float, edges) -> np.ndarray:
    """Cell masses of an isotropic 2-D Gaussian on the product grid ``edges x edges``."""
    cdf_x = np.diff(stats.norm.cdf(edges, loc=mean[0], scale=sigma))
    cdf_y = np.diff(stats.norm.cdf(edges, loc=mean[1], scale=sigma))
    return np.outer(cdf_x, cdf_y)


def gof_chi2(samples: np.ndarray, mean, sigma: float, bins: int = 10, lo: float = -4.0, hi: float = 4.0, min_expected=5.0):
    """Chi-squared fit of 2-D samples to ``N(mean, sigma^2 I)`` on a ``bins x bins`` grid.

    Mass outside the grid forms one extra cell; cells expecting fewer than
    ``min_expected`` samples are pooled into it.
    """
    edges = np.linspace(lo, hi, bins + 1)
    observed, _, _ = np.histogram2d(samples[:, 0], samples[:, 1], bins=[edges, edges])
    probs = grid_cell_probs(mean, sigma, edges)
    n = len(samples)
    obs, exp = observed.ravel(), probs.ravel() * n
    outside_obs = n - obs.sum()
    outside_exp = n - exp.sum()
    small = exp < min_expected
    obs_cells = np.append(obs[~small], outside_obs + obs[small].sum())
    exp_cells = np.append(exp[~small], outside_exp + exp[small].sum())
    chi2, p = stats.chisquare(obs_cells, exp_cells)
    return float(chi2), len(obs_cells) - 1, float(p)


def rejection_fidelity(
    n: int = 100_000, spec: ScenarioSpec | None = None, seed: int = 7, alpha: float = 0.01, rate_tolerance: float = 0.02
) -> SamplerCheckResult:
    """Filter ``n`` volunteered-distribution draws towards the damaging one and test the output.

    The acceptance rate should be ``1/M`` within ``rate_tolerance`` (relative)
    and the accepted points should fit the damaging Gaussian.
    """
    spec = spec or ScenarioSpec(scenario=Scenario.FULLY_OVERLAPPING)
    M = envelope_constant(spec)
    # one batch of exactly n proposals; count is unreachable so every draw is used
    res = rejection_sample(
        lambda rng, k: sample_class(spec, 0, k, rng), density_ratio(spec), M, n + 1, seed, batch=n, max_draws=n
    )
    chi2, dof, p = gof_chi2(res.samples, spec.mean1, spec.sigma1)
    return SamplerCheckResult(res.draws, res.accepted, res.acceptance_rate, M, chi2, dof, p, alpha, rate_tolerance)


def overlap_decoy_config(k: int, seed: int, T: int = 50) -> GameConfig:
    """Fully overlapping stream, adaptive adversary, rejection-filtered decoys.

    The volunteer stream is sized so accept-reject filtering can meet ``K``
    every interval (about ``M * K`` proposals are needed).
    """
    return GameConfig(
        scenario=ScenarioSpec(scenario=Scenario.FULLY_OVERLAPPING),
        T=T,
        k=k,
        n_volunteered=1200,
        challenger_mode=ChallengerMode.REJECTION,
        seed=seed,
    )


@dataclass
class PrecisionBoundResult:
    k: int
    mean_precision: float
    bound: float
    exhausted_intervals: int

    @property
    def passed(self) -> bool:
        return self.mean_precision <= self.bound


def precision_bound(k: int, seeds=range(5), T: int = 50, slack: float = 0.10) -> PrecisionBoundResult:
    """Mean final adversary precision against rejection-sampled decoys."""
    precisions, exhausted = [], 0
    for s in seeds:
        trace = run_game(overlap_decoy_config(k, s, T))
        precisions.append(trace.final.precision)
        exhausted += sum(info.pool_exhausted for info in trace.info)
    return PrecisionBoundResult(k, float(np.mean(precisions)), 1.0 / (k + 1) + slack, exhausted)

