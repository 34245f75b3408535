"""Synthetic post streams for the three support regimes, and an accept-reject sampler.

Class 1 is always the damaging distribution. Class 0 feeds both the
non-damaging user deletions and the volunteered posts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .domain import ConfigError, IntervalLedger, Origin, Post, Scenario, ScenarioSpec, _counts
from .seeding import derive_rng

log = logging.getLogger(__name__)


class EnvelopeError(ValueError):
    """The constant ``M`` does not bound the density ratio."""


@dataclass(frozen=True)
class StreamPlan:
    n_damaging: int | tuple[int, ...]
    n_nondamaging: int | tuple[int, ...]
    n_volunteered: int | tuple[int, ...]
    T: int
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        for name in ("n_damaging", "n_nondamaging", "n_volunteered"):
            _counts(getattr(self, name), self.T, name)

    def counts(self, name):
        return _counts(getattr(self, name), self.T, name)


def _moon(cls: int, n: int, noise: float, rng: np.random.Generator) -> np.ndarray:
    angle = rng.uniform(0.0, np.pi, size=n)
    if cls == 0:
        pts = np.c_[np.cos(angle), np.sin(angle)]
    else:
        pts = np.c_[1.0 - np.cos(angle), 0.5 - np.sin(angle)]
    if noise > 0:
        pts = pts + rng.normal(scale=noise, size=pts.shape)
    return pts


def _split(n: int) -> tuple[int, int]:
    return n - n // 2, n // 2


def gen_two_moons(n: int, noise: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Interleaved half circles: class 0 on the unit upper arc, class 1 on the
    lower arc centred at (1, 0.5). Angles are uniform so repeated draws differ.

    Returns ``(X, y)`` with ``X`` of shape ``(n, 2)``.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = np.random.default_rng(seed)
    n0, n1 = _split(n)
    X = np.vstack([_moon(0, n0, noise, rng), _moon(1, n1, noise, rng)])
    y = np.r_[np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)]
    return X, y


def gen_gaussians(n: int, mean0, mean1, sigma: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two isotropic Gaussians sharing ``sigma``; both densities are positive everywhere."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    mean0 = np.asarray(mean0, dtype=float)
    mean1 = np.asarray(mean1, dtype=float)
    if mean0.shape != mean1.shape:
        raise ConfigError("means must share a dimension")
    rng = np.random.default_rng(seed)
    n0, n1 = _split(n)
    X = np.vstack(
        [
            mean0 + sigma * rng.standard_normal((n0, mean0.size)),
            mean1 + sigma * rng.standard_normal((n1, mean1.size)),
        ]
    )
    y = np.r_[np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)]
    return X, y


def _gauss_class(spec: ScenarioSpec, cls: int):
    if cls == 1:
        return np.asarray(spec.mean1, float), spec.sigma1
    return np.asarray(spec.mean0, float), spec.sigma0


def _mixture_class(spec: ScenarioSpec, cls: int):
    own = np.asarray(spec.mean_b if cls == 1 else spec.mean_a, float)
    return [(1.0 - spec.shared_weight, own), (spec.shared_weight, np.asarray(spec.mean_shared, float))]


def sample_class(spec: ScenarioSpec, cls: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` feature vectors from the class-``cls`` distribution of ``spec``."""
    if n == 0:
        return np.zeros((0, spec.d))
    if spec.scenario is Scenario.NON_OVERLAPPING:
        return _moon(cls, n, spec.noise, rng)
    if spec.scenario is Scenario.FULLY_OVERLAPPING:
        mean, sd = _gauss_class(spec, cls)
        return mean + sd * rng.standard_normal((n, spec.d))
    comps = _mixture_class(spec, cls)
    pick = rng.random(n) < comps[1][0]
    means = np.where(pick[:, None], comps[1][1], comps[0][1])
    return means + spec.sigma * rng.standard_normal((n, spec.d))


def _log_normal(X: np.ndarray, mean: np.ndarray, sd: float) -> np.ndarray:
    d = X.shape[1]
    sq = np.sum((X - mean) ** 2, axis=1)
    return -0.5 * sq / sd**2 - d * np.log(sd) - 0.5 * d * np.log(2 * np.pi)


def log_density(spec: ScenarioSpec, cls: int, X) -> np.ndarray:
    """Log density of class ``cls`` at each row of ``X`` (Gaussian scenarios only)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if spec.scenario is Scenario.NON_OVERLAPPING:
        raise ConfigError("two-moons classes live on curves and have no density")
    if spec.scenario is Scenario.FULLY_OVERLAPPING:
        mean, sd = _gauss_class(spec, cls)
        return _log_normal(X, mean, sd)
    terms = [np.log(w) + _log_normal(X, m, spec.sigma) for w, m in _mixture_class(spec, cls) if w > 0]
    return np.logaddexp.reduce(np.vstack(terms), axis=0)


def density_ratio(spec: ScenarioSpec) -> Callable[[np.ndarray], np.ndarray]:
    """``x -> p1(x) / p0(x)``, damaging over volunteered density."""

    def ratio(X):
        return np.exp(log_density(spec, 1, X) - log_density(spec, 0, X))

    return ratio


def envelope_constant(spec: ScenarioSpec) -> float:
    """Smallest ``M`` with ``p1(x) <= M p0(x)`` everywhere.

    Only finite for the fully overlapping regime with the volunteered
    distribution at least as wide as the damaging one.
    """
    if spec.scenario is not Scenario.FULLY_OVERLAPPING:
        raise EnvelopeError(f"density ratio is unbounded in the {spec.scenario.value} regime")
    m0, s0 = _gauss_class(spec, 0)
    m1, s1 = _gauss_class(spec, 1)
    if s0 == s1:
        if np.allclose(m0, m1):
            return 1.0
        raise EnvelopeError("equal-width Gaussians with different means have an unbounded ratio")
    if s0 < s1:
        raise EnvelopeError("volunteered distribution must be wider than the damaging one")
    # stationary point of log p1 - log p0
    x_star = (m1 / s1**2 - m0 / s0**2) / (1.0 / s1**2 - 1.0 / s0**2)
    return float(density_ratio(spec)(x_star[None, :])[0])


@dataclass
class RejectionResult:
    samples: np.ndarray
    draws: int

    @property
    def accepted(self) -> int:
        return len(self.samples)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.draws if self.draws else 0.0


def rejection_sample(
    proposal_draw: Callable[[np.random.Generator, int], np.ndarray],
    density_ratio: Callable[[np.ndarray], np.ndarray],
    M: float,
    count: int,
    seed,
    batch: int = 4096,
    max_draws: int | None = None,
) -> RejectionResult:
    """Accept-reject filtering of proposal draws towards a target distribution.

    Each candidate ``x`` is kept when ``u <= ratio(x) / M`` with ``u`` uniform.
    ``proposal_draw(rng, n)`` returns up to ``n`` candidates along axis 0; a
    short return means the proposal is exhausted and sampling stops early.
    ``seed`` may be an int or a ``numpy.random.Generator``.

    Raises:
        EnvelopeError: a drawn candidate has ``ratio(x) > M``.
    """
    if M <= 0:
        raise EnvelopeError("M must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    kept = []
    n_kept = 0
    draws = 0
    while n_kept < count:
        if max_draws is not None and draws >= max_draws:
            break
        cand = proposal_draw(rng, batch)
        if len(cand) == 0:
            break
        ratio = np.asarray(density_ratio(cand), dtype=float) / M
        if np.any(ratio > 1.0 + 1e-12):
            worst = float(ratio.max())
            raise EnvelopeError(f"ratio/M reached {worst:.4g} > 1; M={M:.6g} is not an envelope")
        u = rng.random(len(cand))
        hit = np.flatnonzero(u <= ratio)
        need = count - n_kept
        if len(hit) >= need:
            # count draws only up to the acceptance that completes the sample
            hit = hit[:need]
            draws += int(hit[-1]) + 1
        else:
            draws += len(cand)
        kept.append(cand[hit])
        n_kept += len(hit)
        if len(cand) < batch and n_kept < count:
            break
    samples = np.concatenate(kept) if kept else np.zeros((0,))
    if n_kept < count:
        log.info("rejection sampler exhausted its proposal: %d of %d accepted", n_kept, count)
    return RejectionResult(samples=samples, draws=draws)


def build_stream(spec: ScenarioSpec, plan: StreamPlan) -> list[IntervalLedger]:
    """User deletions and volunteered posts for intervals ``1..T``.

    Interval ``t`` draws from its own derived random stream, so the output for
    one interval does not depend on any other.
    """
    n_pos = plan.counts("n_damaging")
    n_neg = plan.counts("n_nondamaging")
    n_vol = plan.counts("n_volunteered")
    ledgers = []
    next_id = 0
    for t in range(1, plan.T + 1):
        rng = derive_rng(plan.seed, "users", t)
        groups = [
            (sample_class(spec, 1, n_pos[t - 1], rng), 1, Origin.USER_DAMAGING, t),
            (sample_class(spec, 0, n_neg[t - 1], rng), 0, Origin.USER_NONDAMAGING, t),
            (sample_class(spec, 0, n_vol[t - 1], rng), 0, Origin.VOLUNTEERED, None),
        ]
        made = []
        for X, label, origin, deleted_at in groups:
            posts = []
            for x in X:
                posts.append(Post(next_id, x, label, origin, t, deleted_at))
                next_id += 1
            made.append(posts)
        damaging, nondamaging, volunteered = made
        ledgers.append(
            IntervalLedger(
                t=t,
                deleted=damaging + nondamaging,
                damaging=damaging,
                volunteered_new=volunteered,
            )
        )
    return ledgers


STREAM_HEADER = "id\tinterval_created\tinterval_deleted\torigin\tlabel\tfeatures"


def format_post(post: Post) -> str:
    deleted = "-" if post.interval_deleted is None else str(post.interval_deleted)
    feats = "\t".join(repr(float(v)) for v in post.features)
    return f"{post.id}\t{post.interval_created}\t{deleted}\t{post.origin.value}\t{post.true_label}\t{feats}"


def parse_post(line: str) -> Post:
    parts = line.rstrip("\n").split("\t")
    if len(parts) < 6:
        raise ConfigError(f"malformed stream line: {line!r}")
    deleted = None if parts[2] == "-" else int(parts[2])
    return Post(
        id=int(parts[0]),
        features=np.array([float(v) for v in parts[5:]]),
        true_label=int(parts[4]),
        origin=Origin(parts[3]),
        interval_created=int(parts[1]),
        interval_deleted=deleted,
    )


def dump_stream(ledgers: list[IntervalLedger], path) -> None:
    """Write every post of the stream, in id order, as one tab-separated line.

    Columns: id, interval_created, interval_deleted ("-" if never deleted),
    origin, label, then one column per feature.
    """
    latest: dict[int, Post] = {}
    for ledger in ledgers:
        for post in ledger.volunteered_new + ledger.deleted:
            # a decoy's deleted copy replaces its earlier volunteered entry
            if post.id not in latest or post.interval_deleted is not None:
                latest[post.id] = post
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + STREAM_HEADER + "\n")
        for pid in sorted(latest):
            fh.write(format_post(latest[pid]) + "\n")


def load_stream(path) -> list[Post]:
    with open(path, encoding="utf-8") as fh:
        return [parse_post(line) for line in fh if line.strip() and not line.startswith("#")]
