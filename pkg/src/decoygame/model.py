"""Small feedforward binary scorer written directly in numpy.

The same network type serves the adversary (probability output) and the
challenger (raw score output); ``role`` records which one a parameter set is.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .domain import ConfigError, TrainHyper

log = logging.getLogger(__name__)

EPS = 1e-7


class Role(str, enum.Enum):
    ADVERSARY = "AdversaryTheta"
    CHALLENGER = "ChallengerPhi"


@dataclass(frozen=True, eq=False)
class ClassifierParams:
    """Weights ``(in, out)`` and biases per layer; the last layer has one output."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    role: Role = Role.ADVERSARY

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def dim(self) -> int:
        return self.weights[0].shape[0]

    def copy(self, role: Role | None = None) -> "ClassifierParams":
        return ClassifierParams(
            tuple(w.copy() for w in self.weights),
            tuple(b.copy() for b in self.biases),
            self.role if role is None else role,
        )

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b.ravel()]
        return np.concatenate(parts)

    def with_flat(self, vec: np.ndarray) -> "ClassifierParams":
        weights, biases, i = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vec[i : i + w.size].reshape(w.shape).copy())
            i += w.size
            biases.append(vec[i : i + b.size].reshape(b.shape).copy())
            i += b.size
        return ClassifierParams(tuple(weights), tuple(biases), self.role)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.weights + self.biases)

    def same_as(self, other: "ClassifierParams") -> bool:
        return self.sizes == other.sizes and all(
            np.array_equal(a, b) for a, b in zip(self.weights + self.biases, other.weights + other.biases)
        )


def init_params(d: int, hidden=(16, 16), role: Role = Role.ADVERSARY, seed=0) -> ClassifierParams:
    rng = np.random.default_rng(seed)
    sizes = (d,) + tuple(hidden) + (1,)
    weights = tuple(
        rng.normal(scale=1.0 / np.sqrt(n_in), size=(n_in, n_out)) for n_in, n_out in zip(sizes[:-1], sizes[1:])
    )
    biases = tuple(np.zeros(n_out) for n_out in sizes[1:])
    return ClassifierParams(weights, biases, role)


def zero_params(d: int, hidden=(16, 16), role: Role = Role.ADVERSARY) -> ClassifierParams:
    sizes = (d,) + tuple(hidden) + (1,)
    weights = tuple(np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:]))
    biases = tuple(np.zeros(b) for b in sizes[1:])
    return ClassifierParams(weights, biases, role)


def _as_batch(params: ClassifierParams, x) -> tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.dim:
        raise ConfigError(f"feature dimension {X.shape[1]} does not match model input {params.dim}")
    return X, single


def _forward(params: ClassifierParams, X: np.ndarray):
    acts = [X]
    h = X
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        h = z if i == last else np.tanh(z)
        acts.append(h)
    return acts[-1][:, 0], acts


def _backward(params: ClassifierParams, acts, dlogit: np.ndarray):
    """Gradients of ``sum(dlogit * logit)`` w.r.t. every weight and bias."""
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    delta = dlogit[:, None]
    for i in range(len(params.weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            # acts[i] = tanh(z_{i-1})
            delta = (delta @ params.weights[i].T) * (1.0 - acts[i] ** 2)
    return grads_w, grads_b


def logits(params: ClassifierParams, x) -> np.ndarray:
    X, single = _as_batch(params, x)
    out, _ = _forward(params, X)
    return out[0] if single else out


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def forward_prob(params: ClassifierParams, x):
    """``P(damaging | x)`` under the adversary's model, for one vector or a batch."""
    if params.role is not Role.ADVERSARY:
        raise ConfigError("forward_prob needs adversary parameters")
    return sigmoid(logits(params, x))


def forward_score(params: ClassifierParams, x):
    """Unnormalised challenger score; larger means more likely to pass as damaging."""
    if params.role is not Role.CHALLENGER:
        raise ConfigError("forward_score needs challenger parameters")
    return logits(params, x)


def nll_loss(params: ClassifierParams, X, y) -> float:
    """Summed negative log-likelihood with probabilities clamped to ``[EPS, 1-EPS]``."""
    loss, _ = nll_and_grad(params, X, y, need_grad=False)
    return loss


def nll_and_grad(params: ClassifierParams, X, y, need_grad: bool = True):
    X, _ = _as_batch(params, X)
    y = np.asarray(y, dtype=float).ravel()
    if len(y) == 0:
        raise ConfigError("empty batch")
    if len(y) != len(X):
        raise ConfigError("features and labels differ in length")
    z, acts = _forward(params, X)
    prob = sigmoid(z)
    clipped = np.clip(prob, EPS, 1.0 - EPS)
    loss = float(np.sum(-y * np.log(clipped) - (1.0 - y) * np.log(1.0 - clipped)))
    if not need_grad:
        return loss, None
    inside = (prob > EPS) & (prob < 1.0 - EPS)
    dz = np.where(inside, prob - y, 0.0)
    gw, gb = _backward(params, acts, dz)
    return loss, (gw, gb)


def _flat_grad(gw, gb) -> np.ndarray:
    parts = []
    for w, b in zip(gw, gb):
        parts += [w.ravel(), b.ravel()]
    return np.concatenate(parts)


def _batches(y: np.ndarray, hyper: TrainHyper, rng: np.random.Generator):
    n = len(y)
    n_batches = max(1, int(np.ceil(n / hyper.batch_size)))
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if hyper.balance_batches and len(pos) and len(neg):
        half = max(1, hyper.batch_size // 2)
        for _ in range(n_batches):
            take_p = rng.choice(pos, size=half, replace=len(pos) < half)
            take_n = rng.choice(neg, size=half, replace=len(neg) < half)
            yield np.concatenate([take_p, take_n])
        return
    order = rng.permutation(n)
    for start in range(0, n, hyper.batch_size):
        yield order[start : start + hyper.batch_size]


def train(params: ClassifierParams, X, y, hyper: TrainHyper, seed) -> ClassifierParams:
    """Mini-batch gradient descent on the mean NLL of each batch.

    Returns new parameters; ``params`` is left untouched. With
    ``balance_batches`` every batch holds equally many positives and
    negatives, drawn with replacement from a minority class smaller than half
    a batch.
    """
    X, _ = _as_batch(params, X)
    y = np.asarray(y).astype(np.int64).ravel()
    if len(y) == 0:
        raise ConfigError("empty training batch")
    if hyper.learning_rate == 0:
        return params.copy()
    if hyper.balance_batches and len(np.unique(y)) < 2:
        log.warning("single-class training batch; falling back to unbalanced batches")
    rng = np.random.default_rng(seed)
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    current = ClassifierParams(tuple(weights), tuple(biases), params.role)
    lr = hyper.learning_rate
    for _ in range(hyper.epochs):
        for idx in _batches(y, hyper, rng):
            _, (gw, gb) = nll_and_grad(current, X[idx], y[idx])
            scale = lr / len(idx)
            for i in range(len(weights)):
                weights[i] -= scale * gw[i]
                biases[i] -= scale * gb[i]
    if not current.is_finite():
        raise FloatingPointError("training produced non-finite parameters")
    return ClassifierParams(tuple(weights), tuple(biases), params.role)


def grad_check(params: ClassifierParams, X, y, epsilon: float = 1e-5) -> float:
    """Largest coordinate-wise relative gap between backprop and central differences."""
    if not 1e-7 <= epsilon <= 1e-3:
        raise ConfigError("epsilon must lie in [1e-7, 1e-3]")
    _, (gw, gb) = nll_and_grad(params, X, y)
    analytic = _flat_grad(gw, gb)
    base = params.flat()
    numeric = np.empty_like(base)
    for i in range(base.size):
        bumped = base.copy()
        bumped[i] += epsilon
        up = nll_loss(params.with_flat(bumped), X, y)
        bumped[i] -= 2 * epsilon
        down = nll_loss(params.with_flat(bumped), X, y)
        numeric[i] = (up - down) / (2 * epsilon)
    rel = np.abs(analytic - numeric) / np.maximum(1e-12, np.abs(analytic) + np.abs(numeric))
    # coordinates where both gradients vanish carry no information
    rel[(np.abs(analytic) < 1e-10) & (np.abs(numeric) < 1e-10)] = 0.0
    return float(rel.max())


def save_params(params: ClassifierParams, path) -> None:
    """Plain-text snapshot: a header with role and layer sizes, then per layer
    the row-major weight matrix followed by its bias vector, one value per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"role {params.role.value}\n")
        fh.write("sizes " + " ".join(str(s) for s in params.sizes) + "\n")
        for w, b in zip(params.weights, params.biases):
            for v in np.concatenate([w.ravel(order="C"), b]):
                fh.write(repr(float(v)) + "\n")


def load_params(path) -> ClassifierParams:
    with open(path, encoding="utf-8") as fh:
        role = Role(fh.readline().split(maxsplit=1)[1].strip())
        sizes = [int(s) for s in fh.readline().split()[1:]]
        values = np.array([float(line) for line in fh if line.strip()])
    expected = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    if len(sizes) < 2 or len(values) != expected:
        raise ConfigError(f"{path}: expected {expected} values, found {len(values)}")
    weights, biases, i = [], [], 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(values[i : i + n_in * n_out].reshape(n_in, n_out))
        i += n_in * n_out
        biases.append(values[i : i + n_out].copy())
        i += n_out
    return ClassifierParams(tuple(weights), tuple(biases), role)
