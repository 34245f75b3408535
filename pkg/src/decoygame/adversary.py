"""The deletion-hunting adversary: budgeted sampling, noisy labels, training, classification."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import model
from .domain import AdversaryMode, Post, TrainHyper, stack_features, stack_labels
from .model import ClassifierParams

log = logging.getLogger(__name__)


@dataclass
class AdversaryState:
    """Everything the adversary carries from one interval to the next.

    ``budget_remaining`` is the label budget still available in the current
    interval (adaptive: refilled every interval; static: a one-off pool).
    """

    params: ClassifierParams
    mode: AdversaryMode
    sample_size: int
    budget_remaining: int
    recurring_budget: int = 0
    tau: int = 0
    hyper: TrainHyper = field(default_factory=TrainHyper)
    label_noise_eta: float = 0.0
    decision_threshold: float = 0.5
    prior_positive: float | None = None
    flag_rate: float | None = None
    warm_start: bool = True
    initial_params: ClassifierParams | None = None
    monitored: bool = False
    monitored_ids: set[int] = field(default_factory=set)
    intervals_trained: int = 0
    budget_spent: int = 0
    last_sample: list[Post] = field(default_factory=list)

    def __post_init__(self):
        if self.initial_params is None:
            self.initial_params = self.params.copy()

    @property
    def random_flag_rate(self) -> float:
        """Probability that a random adversary flags a post as damaging.

        Unless set explicitly this is the non-damaging share ``1 - prior``,
        which yields precision = prior and recall = 1 - prior on a stream
        with that prior.
        """
        if self.flag_rate is not None:
            return self.flag_rate
        prior = 0.5 if self.prior_positive is None else self.prior_positive
        return 1.0 - prior

    def can_train(self) -> bool:
        if self.mode is AdversaryMode.RANDOM:
            return self.prior_positive is None and self.budget_remaining > 0
        if self.mode is AdversaryMode.STATIC:
            return self.intervals_trained < self.tau and self.budget_remaining > 0
        return self.budget_remaining > 0


def sample_training_set(deleted: Sequence[Post], p: int, seed) -> list[Post]:
    """Uniform sample of ``min(p, len(deleted))`` posts without replacement."""
    n = min(max(p, 0), len(deleted))
    if n == 0:
        return []
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(deleted), size=n, replace=False))
    return [deleted[i] for i in idx]


def acquire_labels(posts: Sequence[Post], eta: float, seed) -> np.ndarray:
    """Crowd-sourced proxy labels: each true label flips independently with probability ``eta``."""
    truth = stack_labels(posts)
    if eta == 0 or len(truth) == 0:
        return truth
    rng = np.random.default_rng(seed)
    flips = rng.random(len(truth)) < eta
    return np.where(flips, 1 - truth, truth)


def adversary_step(state: AdversaryState, deleted: Sequence[Post], seed) -> list[Post]:
    """Spend this interval's label budget and retrain; returns the labeled sample.

    A random adversary only labels once, to estimate its prior when none was
    configured. The state is updated in place.
    """
    rng = np.random.default_rng(seed)
    state.last_sample = []
    if state.mode is AdversaryMode.ADAPTIVE:
        state.budget_remaining = state.recurring_budget
    if not state.can_train():
        return []
    p = min(state.sample_size, state.budget_remaining)
    sample = sample_training_set(deleted, p, rng)
    if not sample:
        return []
    labels = acquire_labels(sample, state.label_noise_eta, rng)
    state.budget_remaining -= len(sample)
    state.budget_spent += len(sample)
    state.last_sample = sample
    if state.mode is AdversaryMode.RANDOM:
        state.prior_positive = float(labels.mean())
        return sample
    start = state.params if state.warm_start else state.initial_params
    state.params = model.train(start, stack_features(sample), labels, state.hyper, rng.integers(2**31))
    state.intervals_trained += 1
    return sample


def probabilities(state: AdversaryState, X) -> np.ndarray:
    """The adversary's ``P(damaging)`` for each row of ``X`` (random mode: flag rate)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if state.mode is AdversaryMode.RANDOM:
        return np.full(len(X), state.random_flag_rate)
    return model.forward_prob(state.params, X)


def classify(state: AdversaryState, posts: Sequence[Post], seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Predicted labels and probabilities for ``posts``.

    Trained adversaries flag a post when its probability reaches the decision
    threshold (ties flag). Random adversaries flag independently at
    ``random_flag_rate`` using ``seed``. Posts the adversary saw being queried
    are labeled non-damaging when monitoring is on.
    """
    if not posts:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    probs = probabilities(state, stack_features(posts))
    if state.mode is AdversaryMode.RANDOM:
        rng = np.random.default_rng(seed)
        preds = (rng.random(len(posts)) < state.random_flag_rate).astype(np.int64)
    else:
        preds = (probs >= state.decision_threshold).astype(np.int64)
    if state.monitored and state.monitored_ids:
        seen = np.array([p.id in state.monitored_ids for p in posts])
        if seen.any():
            log.info("monitored countermeasure relabeled %d queried posts", int(seen.sum()))
            preds = np.where(seen, 0, preds)
    return preds, probs


def monitored_hits(state: AdversaryState, posts: Sequence[Post]) -> int:
    return sum(1 for p in posts if p.id in state.monitored_ids)
