"""Core value types shared across the game, plus adversary scoring metrics."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised for malformed configurations or inconsistent inputs."""


class Origin(str, enum.Enum):
    USER_DAMAGING = "UserDeletedDamaging"
    USER_NONDAMAGING = "UserDeletedNonDamaging"
    VOLUNTEERED = "Volunteered"
    DECOY = "Decoy"


class Scenario(str, enum.Enum):
    NON_OVERLAPPING = "NonOverlapping"
    FULLY_OVERLAPPING = "FullyOverlapping"
    PARTIAL_OVERLAP = "PartialOverlap"


class AdversaryMode(str, enum.Enum):
    RANDOM = "Random"
    STATIC = "Static"
    ADAPTIVE = "Adaptive"


class ChallengerMode(str, enum.Enum):
    NONE = "None"
    RANDOM = "Random"
    ORACLE = "Oracle"
    D2 = "D2"
    # accept-reject filtering of the pool against known densities
    REJECTION = "Rejection"


def parse_enum(kind, value):
    """Look up an enum member by value or name, case-insensitively."""
    if isinstance(value, kind):
        return value
    text = str(value).strip().lower()
    for member in kind:
        if text in (member.value.lower(), member.name.lower()):
            return member
    choices = ", ".join(m.value for m in kind)
    raise ConfigError(f"unknown {kind.__name__} {value!r}; expected one of {choices}")


@dataclass(frozen=True, eq=False)
class Post:
    """One item of the post stream.

    Identity is the integer ``id``; two posts with the same id compare equal
    and hash identically whatever their features or bookkeeping fields.
    """

    id: int
    features: np.ndarray
    true_label: int
    origin: Origin
    interval_created: int
    interval_deleted: int | None = None

    def __post_init__(self):
        if self.true_label not in (0, 1):
            raise ConfigError(f"post {self.id}: label must be 0 or 1")
        if self.origin in (Origin.VOLUNTEERED, Origin.DECOY) and self.true_label != 0:
            raise ConfigError(f"post {self.id}: {self.origin.value} posts are non-damaging")
        if self.origin is Origin.USER_DAMAGING and self.true_label != 1:
            raise ConfigError(f"post {self.id}: damaging deletion must carry label 1")
        if self.origin is Origin.USER_NONDAMAGING and self.true_label != 0:
            raise ConfigError(f"post {self.id}: non-damaging deletion must carry label 0")
        if self.interval_created < 1:
            raise ConfigError(f"post {self.id}: interval_created must be >= 1")
        if self.interval_deleted is not None and self.interval_deleted < self.interval_created:
            raise ConfigError(f"post {self.id}: deleted before it was created")

    def __eq__(self, other):
        if not isinstance(other, Post):
            return NotImplemented
        return self.id == other.id

    def __hash__(self):
        return hash(self.id)

    @property
    def dim(self) -> int:
        return int(self.features.shape[0])


def stack_features(posts: Sequence[Post]) -> np.ndarray:
    """Return an ``(n, d)`` array of the posts' features."""
    if not posts:
        return np.zeros((0, 0))
    return np.vstack([p.features for p in posts])


def stack_labels(posts: Sequence[Post]) -> np.ndarray:
    return np.array([p.true_label for p in posts], dtype=np.int64)


@dataclass(frozen=True)
class Metrics:
    true_positives: int
    false_positives: int
    false_negatives: int
    true_negatives: int
    precision: float
    recall: float
    f_score: float

    @property
    def total(self) -> int:
        return self.true_positives + self.false_positives + self.false_negatives + self.true_negatives

    @classmethod
    def empty(cls) -> "Metrics":
        return cls(0, 0, 0, 0, 0.0, 0.0, 0.0)


@dataclass
class IntervalLedger:
    """Per-interval sets of posts.

    ``deleted`` holds every deletion visible to the adversary in interval ``t``
    (user deletions plus decoys); the other sets are subsets or side sets.
    """

    t: int
    deleted: list[Post] = field(default_factory=list)
    damaging: list[Post] = field(default_factory=list)
    volunteered_new: list[Post] = field(default_factory=list)
    decoys_injected: list[Post] = field(default_factory=list)
    adversary_train_sample: list[Post] = field(default_factory=list)

    def check(self) -> None:
        deleted = set(self.deleted)
        for name in ("decoys_injected", "damaging", "adversary_train_sample"):
            if not set(getattr(self, name)) <= deleted:
                raise ConfigError(f"interval {self.t}: {name} is not a subset of deleted")
        if set(self.decoys_injected) & set(self.volunteered_new):
            raise ConfigError(f"interval {self.t}: decoy deleted in the interval it was volunteered")

    def test_posts(self) -> list[Post]:
        """Deleted posts of this interval that the adversary did not train on."""
        sampled = set(self.adversary_train_sample)
        return [p for p in self.deleted if p not in sampled]


def f_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall, 0 when both are 0."""
    total = precision + recall
    if total <= 0.0:
        return 0.0
    return 2.0 * precision * recall / total


def compute_metrics(predictions, labels) -> Metrics:
    """Confusion counts and derived scores with damaging (1) as the positive class."""
    preds = np.asarray(predictions).astype(np.int64).ravel()
    truth = np.asarray(labels).astype(np.int64).ravel()
    if preds.shape != truth.shape:
        raise ConfigError(f"length mismatch: {preds.size} predictions vs {truth.size} labels")
    if preds.size == 0:
        raise ConfigError("cannot score an empty prediction vector")
    tp = int(np.sum((preds == 1) & (truth == 1)))
    fp = int(np.sum((preds == 1) & (truth == 0)))
    fn = int(np.sum((preds == 0) & (truth == 1)))
    tn = int(np.sum((preds == 0) & (truth == 0)))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return Metrics(tp, fp, fn, tn, precision, recall, f_score(precision, recall))


def _counts(value, T: int, name: str) -> tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        seq = (int(value),) * T
    else:
        seq = tuple(int(v) for v in value)
        if len(seq) != T:
            raise ConfigError(f"{name}: expected {T} per-interval counts, got {len(seq)}")
    if any(v < 0 for v in seq):
        raise ConfigError(f"{name}: counts must be non-negative")
    return seq


@dataclass(frozen=True)
class TrainHyper:
    """Mini-batch gradient settings for one model."""

    learning_rate: float = 0.05
    epochs: int = 50
    batch_size: int = 32
    balance_batches: bool = False

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")


@dataclass(frozen=True)
class ScenarioSpec:
    """Class-conditional feature distributions for one support regime.

    Class 1 is the damaging distribution; class 0 generates non-damaging
    deletions and volunteered posts.
    """

    scenario: Scenario = Scenario.PARTIAL_OVERLAP
    d: int = 2
    # NonOverlapping
    noise: float = 0.05
    # FullyOverlapping: class 0 ~ N(mean0, sigma0^2 I), class 1 ~ N(mean1, sigma1^2 I)
    mean0: tuple[float, ...] = (0.0, 0.0)
    mean1: tuple[float, ...] = (0.5, 0.5)
    sigma0: float = 1.25
    sigma1: float = 1.0
    # PartialOverlap: each class mixes its own component with a shared one
    mean_a: tuple[float, ...] = (-2.0, 0.0)
    mean_b: tuple[float, ...] = (2.0, 0.0)
    mean_shared: tuple[float, ...] = (0.0, 2.0)
    sigma: float = 1.0
    shared_weight: float = 0.5

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("feature dimension must be >= 1")
        if self.scenario is Scenario.NON_OVERLAPPING and self.d != 2:
            raise ConfigError("two-moons scenario is two-dimensional")
        for name in ("mean0", "mean1", "mean_a", "mean_b", "mean_shared"):
            if len(getattr(self, name)) != self.d:
                raise ConfigError(f"{name} must have length d={self.d}")
        if min(self.sigma0, self.sigma1, self.sigma) <= 0 or self.noise < 0:
            raise ConfigError("scales must be positive")
        if not 0.0 <= self.shared_weight <= 1.0:
            raise ConfigError("shared_weight must lie in [0, 1]")


@dataclass(frozen=True)
class GameConfig:
    """Every parameter of one game run."""

    T: int = 10
    k: int = 2
    p: int = 100
    B_static: int = 100
    B_adapt: int = 100
    B_con: int = 100
    n_damaging: int | tuple[int, ...] = 84
    n_nondamaging: int | tuple[int, ...] = 116
    n_volunteered: int | tuple[int, ...] = 500
    label_noise_eta: float = 0.0
    adversary_mode: AdversaryMode = AdversaryMode.ADAPTIVE
    challenger_mode: ChallengerMode = ChallengerMode.NONE
    monitored_flag: bool = False
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    hidden: tuple[int, ...] = (16, 16)
    adversary_train: TrainHyper = field(default_factory=TrainHyper)
    challenger_train: TrainHyper = field(
        default_factory=lambda: TrainHyper(learning_rate=0.5, epochs=200, balance_batches=False)
    )
    warm_start: bool = True
    decision_threshold: float = 0.5
    random_prior: float | None = None
    seed: int = 0
    snapshots: bool = False

    def __post_init__(self):
        for name in ("T", "k", "p", "B_static", "B_adapt", "B_con"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if not 0.0 <= self.label_noise_eta <= 1.0:
            raise ConfigError("label_noise_eta must lie in [0, 1]")
        if not 0.0 < self.decision_threshold < 1.0:
            raise ConfigError("decision_threshold must lie in (0, 1)")
        if self.random_prior is not None and not 0.0 <= self.random_prior <= 1.0:
            raise ConfigError("random_prior must lie in [0, 1]")
        if self.adversary_mode is AdversaryMode.STATIC and self.p == 0:
            raise ConfigError("static adversary needs p > 0")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be positive")
        for name in ("n_damaging", "n_nondamaging", "n_volunteered"):
            _counts(getattr(self, name), self.T, name)

    @property
    def tau(self) -> int:
        """Number of intervals a static adversary can afford to train."""
        if self.p == 0:
            return 0
        return math.floor(self.B_static / self.p)

    def counts(self, name: str) -> tuple[int, ...]:
        return _counts(getattr(self, name), self.T, name)
