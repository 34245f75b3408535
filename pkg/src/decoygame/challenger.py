"""Decoy selection: random, oracle top-K, the softmax-relaxed learned selector
(``D2``), and accept-reject filtering when the class densities are known."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import model
from .datagen import rejection_sample
from .domain import ChallengerMode, ConfigError, Post, TrainHyper, stack_features
from .model import EPS, ClassifierParams, Role

log = logging.getLogger(__name__)

ProbQuery = Callable[[np.ndarray], np.ndarray]


def decoy_costs(probs) -> np.ndarray:
    """Per-post adversary loss ``-log(1 - a(x))`` for a label-0 post."""
    probs = np.clip(np.asarray(probs, dtype=float), EPS, 1.0 - EPS)
    return -np.log1p(-probs)


def objective_V(w, probs, K: int | None = None) -> float:
    """Adversary NLL over the volunteered posts picked by the 0/1 vector ``w``."""
    w = np.asarray(w)
    probs = np.asarray(probs, dtype=float)
    if w.shape != probs.shape:
        raise ConfigError("selection vector and probabilities differ in length")
    if not np.all((w == 0) | (w == 1)):
        raise ConfigError("selection vector must be binary")
    if K is not None and int(w.sum()) != K:
        raise ConfigError(f"selection vector has {int(w.sum())} ones, expected K={K}")
    return float(np.sum(w * decoy_costs(probs)))


def brute_force_discrete_optimum(probs, K: int) -> tuple[np.ndarray, float]:
    """Exhaustive maximisation of ``objective_V`` over all K-hot vectors.

    Ties resolve to the lowest indices, as in the other selectors.
    """
    probs = np.asarray(probs, dtype=float)
    n = len(probs)
    if n > 20 or K > 5:
        raise ConfigError("brute force limited to N <= 20 and K <= 5")
    if not 0 <= K <= n:
        raise ConfigError("K must lie in [0, N]")
    costs = decoy_costs(probs)
    best_w, best_v = None, -np.inf
    for combo in itertools.combinations(range(n), K):
        w = np.zeros(n, dtype=np.int64)
        w[list(combo)] = 1
        v = float(np.sum(costs[list(combo)]))
        # combinations come in lexicographic index order, so strict > keeps the lowest indices
        if v > best_v:
            best_w, best_v = w, v
    return best_w, best_v


def _top_k(values: np.ndarray, ids: np.ndarray, K: int) -> np.ndarray:
    """Indices of the K largest values, ties broken by ascending id."""
    order = np.lexsort((ids, -values))
    return order[:K]


def _clamp(K: int, available: int, what: str) -> int:
    if K > available:
        log.info("%s pool exhausted: wanted %d decoys, %d available", what, K, available)
        return available
    return K


def select_random(pool: Sequence[Post], K: int, seed) -> list[Post]:
    K = _clamp(K, len(pool), "random")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(pool), size=K, replace=False)
    return [pool[i] for i in sorted(picked)]


def select_oracle(pool: Sequence[Post], K: int, prob_query: ProbQuery) -> list[Post]:
    """The K posts the adversary currently finds most damaging-looking."""
    K = _clamp(K, len(pool), "oracle")
    if K == 0:
        return []
    probs = np.asarray(prob_query(stack_features(pool)))
    ids = np.array([p.id for p in pool])
    return [pool[i] for i in _top_k(probs, ids, K)]


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - np.max(scores)
    e = np.exp(shifted)
    return e / e.sum()


def d2_loss_and_grad(phi: ClassifierParams, X, probs, need_grad: bool = True):
    """Relaxed objective ``sum_i softmax(g)_i * cost_i`` and its parameter gradient."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    costs = decoy_costs(probs)
    if len(costs) == 0:
        raise ConfigError("empty training pool")
    if len(costs) != len(X):
        raise ConfigError("pool features and probabilities differ in length")
    g, acts = model._forward(phi, X)
    alpha = softmax(g)
    value = float(alpha @ costs)
    if not need_grad:
        return value, None
    dg = alpha * (costs - value)
    return value, model._backward(phi, acts, dg)


def d2_loss(phi: ClassifierParams, X, probs) -> float:
    return d2_loss_and_grad(phi, X, probs, need_grad=False)[0]


def train_d2(phi: ClassifierParams, X, probs, hyper: TrainHyper, seed=None) -> ClassifierParams:
    """Full-batch gradient ascent on the relaxed objective.

    The softmax couples every post of the training pool, so each of the
    ``hyper.epochs`` steps uses the whole pool; ``batch_size`` is not used.
    """
    if phi.role is not Role.CHALLENGER:
        raise ConfigError("train_d2 needs challenger parameters")
    if hyper.learning_rate == 0:
        return phi.copy()
    weights = [w.copy() for w in phi.weights]
    biases = [b.copy() for b in phi.biases]
    current = ClassifierParams(tuple(weights), tuple(biases), phi.role)
    for _ in range(hyper.epochs):
        _, (gw, gb) = d2_loss_and_grad(current, X, probs)
        for i in range(len(weights)):
            weights[i] += hyper.learning_rate * gw[i]
            biases[i] += hyper.learning_rate * gb[i]
    if not current.is_finite():
        raise FloatingPointError("challenger training produced non-finite parameters")
    return current


@dataclass
class ChallengerState:
    """Decoy-selection state carried across intervals of one game."""

    mode: ChallengerMode
    pool: list[Post] = field(default_factory=list)
    phi: ClassifierParams | None = None
    query_budget: int = 0
    hyper: TrainHyper = field(default_factory=TrainHyper)
    queried_ids: set[int] = field(default_factory=set)
    used_ids: set[int] = field(default_factory=set)
    density_ratio: Callable | None = None
    envelope: float | None = None
    last_queried: list[Post] = field(default_factory=list)
    exhausted: bool = False

    def add_volunteers(self, posts: Sequence[Post]) -> None:
        for p in posts:
            if p.true_label != 0:
                raise ConfigError(f"volunteered post {p.id} is labeled damaging")
            if p.id in self.used_ids:
                raise ConfigError(f"post {p.id} was already used as a decoy")
        self.pool.extend(posts)

    def _take(self, chosen: Sequence[Post]) -> list[Post]:
        taken = {p.id for p in chosen}
        self.used_ids |= taken
        self.pool = [p for p in self.pool if p.id not in taken]
        return list(chosen)


def select_d2(state: ChallengerState, K: int, prob_query: ProbQuery, seed) -> list[Post]:
    """Learned selection through monitored, budgeted queries.

    A random train split of the pool is sent to the adversary. Decoys come
    only from pool posts that were never queried in any interval, so the
    adversary never sees a post it was asked about being deleted.
    """
    rng = np.random.default_rng(seed)
    n = len(state.pool)
    state.last_queried = []
    if n == 0 or K == 0:
        if K > 0:
            log.info("D2 pool empty; no decoys selected")
        return []
    n_train = min(state.query_budget, n // 2)
    order = rng.permutation(n)
    train_idx, test_idx = np.sort(order[:n_train]), np.sort(order[n_train:])
    train = [state.pool[i] for i in train_idx]
    burned = state.queried_ids | {p.id for p in train}
    test = [state.pool[i] for i in test_idx if state.pool[i].id not in burned]
    if train:
        X_train = stack_features(train)
        probs = np.asarray(prob_query(X_train))
        state.queried_ids |= {p.id for p in train}
        state.last_queried = train
        state.phi = train_d2(state.phi, X_train, probs, state.hyper, seed)
    K = _clamp(K, len(test), "D2 test split")
    scores = model.logits(state.phi, stack_features(test))
    ids = np.array([p.id for p in test])
    chosen = [test[i] for i in _top_k(scores, ids, K)]
    overlap = {p.id for p in chosen} & state.queried_ids
    if overlap:
        raise AssertionError(f"queried posts selected as decoys: {sorted(overlap)}")
    return chosen


def select_rejection(pool: Sequence[Post], K: int, ratio: Callable, M: float, seed) -> list[Post]:
    """Walk the pool in random order keeping each post with probability ratio(x)/M.

    The kept posts follow the damaging distribution when the pool follows
    the volunteered one.
    """
    if K == 0 or not pool:
        return []
    feats = stack_features(pool)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    cursor = [0]

    def next_indices(_rng, n):
        lo = cursor[0]
        cursor[0] = min(len(order), lo + n)
        return order[lo : cursor[0]]

    res = rejection_sample(next_indices, lambda idx: ratio(feats[idx]), M, K, rng, batch=256)
    if res.accepted < K:
        log.info("rejection pool exhausted: %d of %d decoys", res.accepted, K)
    return [pool[i] for i in sorted(int(j) for j in res.samples)]


def select(state: ChallengerState, K: int, prob_query: ProbQuery | None, seed) -> list[Post]:
    """Dispatch on ``state.mode`` and remove the chosen decoys from the pool."""
    state.last_queried = []
    state.exhausted = K > len(state.pool)
    if state.mode is ChallengerMode.NONE:
        return []
    if state.mode is ChallengerMode.RANDOM:
        chosen = select_random(state.pool, K, seed)
    elif state.mode is ChallengerMode.ORACLE:
        chosen = select_oracle(state.pool, K, prob_query)
    elif state.mode is ChallengerMode.D2:
        chosen = select_d2(state, K, prob_query, seed)
        state.exhausted = len(chosen) < K
    elif state.mode is ChallengerMode.REJECTION:
        chosen = select_rejection(state.pool, K, state.density_ratio, state.envelope, seed)
        state.exhausted = len(chosen) < K
    else:  # pragma: no cover
        raise ConfigError(f"unknown challenger mode {state.mode}")
    return state._take(chosen)
