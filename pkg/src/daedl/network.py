"""Dense evidential network, spectral normalization and the training loop."""
import copy
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .dirichlet import PARAMETERIZATIONS, batch_loss_and_grad
from .errors import DomainError, NumericalError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "identity")
OPTIMIZERS = ("adam", "sgd")


@dataclass
class DenseLayer:
    W: np.ndarray
    b: np.ndarray
    u: np.ndarray
    activation: str = "relu"
    residual: bool = False

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        if self.b.shape != (self.W.shape[0],) or self.u.shape != (self.W.shape[0],):
            raise DomainError("bias and power-iteration vector must match the output size")
        if self.residual and self.W.shape[0] != self.W.shape[1]:
            raise DomainError("a residual layer needs a square weight matrix")

    @classmethod
    def init(cls, n_in, n_out, rng, activation="relu", residual=False):
        limit = np.sqrt(6.0 / (n_in + n_out))
        W = rng.uniform(-limit, limit, size=(n_out, n_in))
        bound = 1.0 / np.sqrt(n_in)
        b = rng.uniform(-bound, bound, size=n_out)
        u = rng.normal(size=n_out)
        return cls(W, b, u / np.linalg.norm(u), activation, residual)

    @property
    def shape(self):
        return self.W.shape

    def preactivation(self, x):
        return x @ self.W.T + self.b

    def activate(self, x, pre):
        out = np.maximum(pre, 0.0) if self.activation == "relu" else pre
        return x + out if self.residual else out

    def apply(self, x):
        return self.activate(x, self.preactivation(x))


def spectral_normalize(layer, iterations=1):
    """Power-iterate on ``layer.W`` and divide it by the estimated spectral norm.

    Updates ``layer.u`` and ``layer.W`` in place and returns the estimate.
    A zero matrix is left untouched and 0.0 is returned.
    """
    if iterations < 1:
        raise DomainError("iterations must be positive")
    W = layer.W
    if not np.any(W):
        logger.warning("spectral normalization skipped for a zero weight matrix")
        return 0.0
    u = layer.u
    for _ in range(iterations):
        v = _right_vector(W, u)
        u = W @ v
        u /= np.linalg.norm(u)
    v = _right_vector(W, u)
    sigma = float(u @ W @ v)
    layer.u = u
    # in place: optimizer state holds references to W
    W /= sigma
    return sigma


def _right_vector(W, u):
    v = W.T @ u
    norm = np.linalg.norm(v)
    if norm == 0.0:
        # u is orthogonal to every column; restart from the largest column
        col = int(np.argmax(np.linalg.norm(W, axis=0)))
        u = W[:, col] / np.linalg.norm(W[:, col])
        v = W.T @ u
        norm = np.linalg.norm(v)
    return v / norm


@dataclass
class EvidentialNetwork:
    feature_layers: list
    head: DenseLayer
    spectral_norm_enabled: bool = True
    parameterization: str = "exp"

    def __post_init__(self):
        if self.parameterization not in PARAMETERIZATIONS:
            raise DomainError(f"unknown parameterization {self.parameterization!r}")
        if not self.feature_layers:
            raise DomainError("at least one feature layer is required")
        for prev, nxt in zip(self.feature_layers, self.feature_layers[1:] + [self.head]):
            if nxt.W.shape[1] != prev.W.shape[0]:
                raise DomainError("consecutive layer sizes do not match")
        if self.head.activation != "identity":
            raise DomainError("the classifier head must be linear")

    @classmethod
    def create(cls, input_dim, hidden, n_classes, seed=0, spectral_norm=True,
               parameterization="exp", residual=False):
        """Build an MLP feature extractor plus linear head.

        With ``residual=True`` the first layer is a linear projection to
        ``hidden[0]`` and every later square layer computes ``x + relu(Wx + b)``.
        """
        rng = np.random.default_rng(seed)
        sizes = [input_dim, *hidden]
        layers = []
        for i, (a, b) in enumerate(zip(sizes, sizes[1:])):
            if residual and i == 0:
                layers.append(DenseLayer.init(a, b, rng, activation="identity"))
            else:
                layers.append(DenseLayer.init(a, b, rng, residual=residual and a == b))
        head = DenseLayer.init(sizes[-1], n_classes, rng, activation="identity")
        net = cls(layers, head, spectral_norm, parameterization)
        if spectral_norm:
            net.normalize_features(iterations=50)
        return net

    @property
    def input_dim(self):
        return self.feature_layers[0].W.shape[1]

    @property
    def feature_dim(self):
        return self.head.W.shape[1]

    @property
    def n_classes(self):
        return self.head.W.shape[0]

    @property
    def layers(self):
        return [*self.feature_layers, self.head]

    def features(self, x):
        z = np.asarray(x, dtype=np.float64)
        if z.shape[-1] != self.input_dim:
            raise DomainError(f"input has dimension {z.shape[-1]}, network expects {self.input_dim}")
        for layer in self.feature_layers:
            z = layer.apply(z)
        return z

    def forward(self, x):
        """Return ``(features, logits)`` for one input vector or a batch."""
        z = self.features(x)
        return z, self.head.apply(z)

    def normalize_features(self, iterations=1):
        """One spectral-normalization round per feature layer; returns the estimates."""
        return [spectral_normalize(layer, iterations) for layer in self.feature_layers]

    def loss_and_grads(self, x, y, lam):
        """Mean EDL loss over a batch and the gradients for every (W, b)."""
        inputs, pres = [], []
        h = np.asarray(x, dtype=np.float64)
        with np.errstate(over="ignore", invalid="ignore"):
            for layer in self.layers:
                inputs.append(h)
                pres.append(layer.preactivation(h))
                h = layer.activate(h, pres[-1])
        if not np.all(np.isfinite(h)) and np.all(np.isfinite(x)):
            raise NumericalError("forward pass overflowed")
        losses, dlogits = batch_loss_and_grad(h, y, lam, 1.0, self.parameterization)
        delta = dlogits / len(losses)
        grads = []
        for layer, a_in, pre in zip(reversed(self.layers), reversed(inputs), reversed(pres)):
            dpre = delta * (pre > 0.0) if layer.activation == "relu" else delta
            grads.append((dpre.T @ a_in, dpre.sum(axis=0)))
            delta = dpre @ layer.W + (delta if layer.residual else 0.0)
        grads.reverse()
        return float(losses.mean()), grads

    def loss(self, x, y, lam):
        _, logits = self.forward(x)
        losses, _ = batch_loss_and_grad(logits, y, lam, 1.0, self.parameterization)
        return float(losses.mean())

    def parameters(self):
        return [p for layer in self.layers for p in (layer.W, layer.b)]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    lam: float = 5e-2
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 10
    lr_decay: float = 0.95
    seed: int = 0
    optimizer: str = "adam"
    sn_iterations: int = 1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise DomainError("learning_rate must be non-negative")
        if self.lam < 0:
            raise DomainError("lambda must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise DomainError("batch_size, max_epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise DomainError("patience cannot exceed max_epochs")
        if not 0.0 < self.lr_decay <= 1.0:
            raise DomainError("lr_decay must lie in (0, 1]")
        if self.optimizer not in OPTIMIZERS:
            raise DomainError(f"optimizer must be one of {OPTIMIZERS}")

    def to_dict(self):
        return asdict(self)


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params):
        pass

    def step(self, params, grads, lr):
        for p, g in zip(params, grads):
            p -= lr * g


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    learning_rate: float
    max_sigma: float = field(default=float("nan"))


def train(net, train_set, val_set, cfg, on_step=None):
    """Mini-batch training with early stopping on the validation loss.

    Returns ``(best_net, history)``; ``net`` itself is modified in place and
    ends at the last epoch run. ``on_step(net)`` is called after every
    parameter update (after spectral normalization), mainly for tests.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise DomainError("training and validation sets must be non-empty")
    if cfg.batch_size > len(train_set):
        raise DomainError("batch_size exceeds the training-set size")
    for ds in (train_set, val_set):
        if ds.y.min() < 0 or ds.y.max() >= net.n_classes:
            raise DomainError("labels outside [0, C)")

    rng = np.random.default_rng(cfg.seed)
    params = net.parameters()
    opt = Adam(params) if cfg.optimizer == "adam" else SGD(params)
    X, y = train_set.X, train_set.y
    n = len(X)

    history = []
    best, best_loss, stale = copy.deepcopy(net), np.inf, 0
    for epoch in range(cfg.max_epochs):
        lr = cfg.learning_rate * cfg.lr_decay ** epoch
        order = rng.permutation(n)
        total, count = 0.0, 0
        max_sigma = float("nan")
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = net.loss_and_grads(X[idx], y[idx], cfg.lam)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}, batch starting {start}")
            with np.errstate(over="ignore", invalid="ignore"):
                opt.step(params, [g for pair in grads for g in pair], lr)
                if net.spectral_norm_enabled:
                    net.normalize_features(cfg.sn_iterations)
            if not all(np.all(np.isfinite(p)) for p in params):
                raise NumericalError(f"parameters diverged at epoch {epoch}, batch starting {start}")
            if on_step is not None:
                on_step(net)
            total += loss * len(idx)
            count += len(idx)
        if net.spectral_norm_enabled:
            max_sigma = max(float(np.linalg.norm(layer.W, 2)) for layer in net.feature_layers)
        val_loss = net.loss(val_set.X, val_set.y, cfg.lam)
        if not np.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        history.append(EpochRecord(epoch, total / count, val_loss, lr, max_sigma))
        logger.debug("epoch %d train %.6f val %.6f", epoch, total / count, val_loss)
        if val_loss < best_loss:
            best, best_loss, stale = copy.deepcopy(net), val_loss, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    if best.spectral_norm_enabled:
        best.normalize_features(iterations=50)
    return best, history
