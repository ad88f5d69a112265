"""Learning tasks, federated data generation, and local training.

Three task families cover the simulator's needs: a least-squares problem
with a closed-form optimum (exact curvature constants, suboptimality as
the error metric), multinomial logistic regression on Gaussian class
blobs (the workhorse for robustness experiments), and a one-hidden-layer
tanh network for a non-convex smoke case. Models are flat float64 vectors
so sketching and aggregation never care which task produced them; tasks
may pad with inert trailing coordinates to reach a requested dimension.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalDivergenceError
from .sketch import combine64

TASK_KINDS = ("quadratic", "logistic", "tiny-mlp")


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "logistic"
    features: int = 32
    classes: int = 10
    hidden: int = 16              # tiny-mlp only
    samples_per_client: int = 200
    test_samples: int = 2000
    concentration: float = 1.0    # label skew (classification) / optimum drift (quadratic); larger is more IID
    dim: int = 0                  # 0 = natural size; larger pads with inert coordinates
    separation: float = 5.0       # class-mean scale (classification)
    noise: float = 0.1            # target noise std (quadratic)

    def __post_init__(self) -> None:
        if self.kind not in TASK_KINDS:
            raise ConfigurationError(
                f"unknown task kind {self.kind!r}, expected one of {TASK_KINDS}"
            )
        if self.features < 1:
            raise ConfigurationError(f"features must be >= 1, got {self.features}")
        if self.kind != "quadratic" and self.classes < 2:
            raise ConfigurationError(f"classes must be >= 2, got {self.classes}")
        if self.kind == "tiny-mlp" and not 1 <= self.hidden <= 64:
            raise ConfigurationError(f"hidden must be in [1, 64], got {self.hidden}")
        if self.samples_per_client < 1:
            raise ConfigurationError("samples_per_client must be >= 1")
        if self.test_samples < 1:
            raise ConfigurationError("test_samples must be >= 1")
        if self.concentration <= 0:
            raise ConfigurationError(f"concentration must be > 0, got {self.concentration}")
        if self.dim < 0:
            raise ConfigurationError(f"dim must be >= 0, got {self.dim}")
        if self.noise < 0:
            raise ConfigurationError(f"noise must be >= 0, got {self.noise}")


@dataclass
class ClientData:
    """One node's shard. labels holds class ids for classification tasks
    and float regression targets for the quadratic task."""

    client_id: int
    features: np.ndarray
    labels: np.ndarray


@dataclass
class FederatedData:
    clients: list[ClientData]
    test_features: np.ndarray
    test_labels: np.ndarray
    spec: TaskSpec
    seed: int


def _natural_dim(spec: TaskSpec) -> int:
    if spec.kind == "quadratic":
        return spec.features
    if spec.kind == "logistic":
        return spec.classes * (spec.features + 1)
    return spec.hidden * (spec.features + 1) + spec.classes * (spec.hidden + 1)


def _resolve_dim(spec: TaskSpec) -> tuple[int, int]:
    natural = _natural_dim(spec)
    if spec.dim == 0:
        return natural, natural
    if spec.dim < natural:
        raise ConfigurationError(
            f"requested dim {spec.dim} is below the task's natural size {natural}"
        )
    return spec.dim, natural


class QuadraticTask:
    """Federated least squares: f_i(w) = ||A_i w - b_i||^2 / (2 m_i).

    Keeps references to every client shard so the global objective, its
    exact optimum, and the curvature extremes (mu, lipschitz) are available.
    The error metric is normalized suboptimality clamped to [0, 1]; the
    held-out set is ignored for that metric.
    """

    kind = "quadratic"
    metric_name = "suboptimality"

    def __init__(self, spec: TaskSpec, clients: list[ClientData]):
        if not clients:
            raise ConfigurationError("quadratic task needs at least one client shard")
        self.spec = spec
        self.dim, self.active_dim = _resolve_dim(spec)
        self._clients = clients
        p = spec.features
        hessian = np.zeros((p, p))
        rhs = np.zeros(p)
        for c in clients:
            m = len(c.labels)
            hessian += c.features.T @ c.features / m
            rhs += c.features.T @ c.labels / m
        hessian /= len(clients)
        rhs /= len(clients)
        self.hessian = hessian
        eigvals = np.linalg.eigvalsh(hessian)
        self.mu = float(eigvals[0])
        self.lipschitz = float(eigvals[-1])
        if self.mu <= 0:
            raise ConfigurationError(
                "client shards give a singular average Hessian; need samples >= features"
            )
        self.optimum = np.zeros(self.dim)
        self.optimum[:p] = np.linalg.solve(hessian, rhs)
        self.optimal_loss = self.global_loss(self.optimum)

    def init_model(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(self.dim)

    def loss(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        r = X @ w[: self.spec.features] - y
        return float(r @ r) / (2 * len(y))

    def grad(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        p = self.spec.features
        g = np.zeros(self.dim)
        g[:p] = X.T @ (X @ w[:p] - y) / len(y)
        return g

    def global_loss(self, w: np.ndarray) -> float:
        return float(
            np.mean([self.loss(w, c.features, c.labels) for c in self._clients])
        )

    def error_rate(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        gap = self.global_loss(w) - self.optimal_loss
        return float(min(1.0, max(0.0, gap / (1.0 + abs(self.optimal_loss)))))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _with_bias(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((len(X), 1))])


class LogisticTask:
    """Multinomial logistic regression; model is the flattened (classes,
    features+1) weight matrix plus any inert padding."""

    kind = "logistic"
    metric_name = "test_error_rate"

    def __init__(self, spec: TaskSpec):
        self.spec = spec
        self.dim, self.active_dim = _resolve_dim(spec)

    def _weights(self, w: np.ndarray) -> np.ndarray:
        s = self.spec
        return w[: self.active_dim].reshape(s.classes, s.features + 1)

    def init_model(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(self.dim)

    def loss(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        probs = _softmax(_with_bias(X) @ self._weights(w).T)
        picked = probs[np.arange(len(y)), y.astype(np.int64)]
        return float(-np.mean(np.log(np.maximum(picked, 1e-12))))

    def grad(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        Xb = _with_bias(X)
        probs = _softmax(Xb @ self._weights(w).T)
        probs[np.arange(len(y)), y.astype(np.int64)] -= 1.0
        g = np.zeros(self.dim)
        g[: self.active_dim] = (probs.T @ Xb / len(y)).ravel()
        return g

    def error_rate(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        pred = np.argmax(_with_bias(X) @ self._weights(w).T, axis=1)
        return float(np.mean(pred != y.astype(np.int64)))


class TinyMlpTask:
    """One tanh hidden layer, softmax output. Non-convex smoke-test task."""

    kind = "tiny-mlp"
    metric_name = "test_error_rate"

    def __init__(self, spec: TaskSpec):
        self.spec = spec
        self.dim, self.active_dim = _resolve_dim(spec)
        self._n1 = spec.hidden * (spec.features + 1)

    def _unpack(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = self.spec
        w1 = w[: self._n1].reshape(s.hidden, s.features + 1)
        w2 = w[self._n1 : self.active_dim].reshape(s.classes, s.hidden + 1)
        return w1, w2

    def init_model(self, rng: np.random.Generator) -> np.ndarray:
        s = self.spec
        w = np.zeros(self.dim)
        scale1 = 1.0 / np.sqrt(s.features + 1)
        scale2 = 1.0 / np.sqrt(s.hidden + 1)
        w[: self._n1] = rng.normal(0, scale1, self._n1)
        w[self._n1 : self.active_dim] = rng.normal(0, scale2, self.active_dim - self._n1)
        return w

    def _forward(self, w, X):
        w1, w2 = self._unpack(w)
        hidden = np.tanh(_with_bias(X) @ w1.T)
        logits = _with_bias(hidden) @ w2.T
        return hidden, logits

    def loss(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        _, logits = self._forward(w, X)
        probs = _softmax(logits)
        picked = probs[np.arange(len(y)), y.astype(np.int64)]
        return float(-np.mean(np.log(np.maximum(picked, 1e-12))))

    def grad(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        w1, w2 = self._unpack(w)
        Xb = _with_bias(X)
        hidden = np.tanh(Xb @ w1.T)
        hb = _with_bias(hidden)
        probs = _softmax(hb @ w2.T)
        probs[np.arange(len(y)), y.astype(np.int64)] -= 1.0
        probs /= len(y)
        g2 = probs.T @ hb
        back = (probs @ w2[:, :-1]) * (1 - hidden**2)
        g1 = back.T @ Xb
        g = np.zeros(self.dim)
        g[: self._n1] = g1.ravel()
        g[self._n1 : self.active_dim] = g2.ravel()
        return g

    def error_rate(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        _, logits = self._forward(w, X)
        return float(np.mean(np.argmax(logits, axis=1) != y.astype(np.int64)))


def generate_federated_data(spec: TaskSpec, n_clients: int, seed: int) -> FederatedData:
    """Deterministic per-client shards plus one shared held-out set.

    Classification: Gaussian class blobs with Dirichlet(concentration)
    label skew per client; the held-out set cycles through classes evenly.
    Quadratic: client optima drift from a shared one by
    concentration**-0.5, which is what makes shards heterogeneous.
    """
    if n_clients < 1:
        raise ConfigurationError(f"n_clients must be >= 1, got {n_clients}")
    m, p = spec.samples_per_client, spec.features
    if spec.kind == "quadratic":
        rng = np.random.Generator(np.random.PCG64(combine64(seed, 1)))
        w_true = rng.normal(size=p)
        drift = spec.concentration**-0.5
        clients = []
        for i in range(n_clients):
            crng = np.random.Generator(np.random.PCG64(combine64(seed, 2, i)))
            A = crng.normal(size=(m, p))
            w_i = w_true + drift * crng.normal(size=p)
            b = A @ w_i + spec.noise * crng.normal(size=m)
            clients.append(ClientData(client_id=i, features=A, labels=b))
        trng = np.random.Generator(np.random.PCG64(combine64(seed, 3)))
        X_t = trng.normal(size=(spec.test_samples, p))
        y_t = X_t @ w_true + spec.noise * trng.normal(size=spec.test_samples)
        return FederatedData(clients, X_t, y_t, spec, seed)

    C = spec.classes
    mrng = np.random.Generator(np.random.PCG64(combine64(seed, 1)))
    means = spec.separation * mrng.normal(size=(C, p)) / np.sqrt(p)
    lrng = np.random.Generator(np.random.PCG64(combine64(seed, 2)))
    proportions = lrng.dirichlet(np.full(C, spec.concentration), size=n_clients)
    clients = []
    for i in range(n_clients):
        crng = np.random.Generator(np.random.PCG64(combine64(seed, 3, i)))
        counts = crng.multinomial(m, proportions[i])
        labels = np.repeat(np.arange(C), counts)
        feats = means[labels] + crng.normal(size=(m, p))
        order = crng.permutation(m)
        clients.append(ClientData(client_id=i, features=feats[order], labels=labels[order]))
    trng = np.random.Generator(np.random.PCG64(combine64(seed, 4)))
    y_t = np.arange(spec.test_samples) % C
    X_t = means[y_t] + trng.normal(size=(spec.test_samples, p))
    return FederatedData(clients, X_t, y_t, spec, seed)


def make_task(spec: TaskSpec, data: FederatedData):
    if spec.kind == "quadratic":
        return QuadraticTask(spec, data.clients)
    if spec.kind == "logistic":
        return LogisticTask(spec)
    return TinyMlpTask(spec)


def local_update(
    task,
    model: np.ndarray,
    data: ClientData,
    lr: float,
    epochs: int,
    batch_size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Minibatch SGD from `model`, fresh shuffle each epoch. Never mutates
    the input. lr=0 is allowed and returns an identical copy."""
    if lr < 0:
        raise ConfigurationError(f"learning rate must be >= 0, got {lr}")
    if epochs < 1:
        raise ConfigurationError(f"epochs must be >= 1, got {epochs}")
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    w = np.array(model, dtype=np.float64, copy=True)
    m = len(data.labels)
    step = min(batch_size, m)
    for _ in range(epochs):
        order = rng.permutation(m)
        for start in range(0, m, step):
            idx = order[start : start + step]
            w -= lr * task.grad(w, data.features[idx], data.labels[idx])
    if not np.isfinite(w).all():
        raise NumericalDivergenceError(
            f"client {data.client_id} produced non-finite coordinates "
            f"(lr={lr}, epochs={epochs})"
        )
    return w


def test_error_rate(task, model: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        raise ConfigurationError("empty held-out set")
    return task.error_rate(model, X, y)
