"""Regression MLP with hand-written backpropagation.

Architecture: ``input -> l1 -> l1/2 -> l1/2 -> l1/4 -> 1``.  Every hidden layer
is affine, then the activation, then (inverted) dropout; the output layer is
linear.  All arithmetic is float64 and every random draw comes from
generators seeded by ``MLPConfig.seed``, so training is bit-reproducible.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .doe import ACTIVATIONS, OPTIMIZERS
from .errors import ConfigurationError, IngestionError

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.01
ELU_ALPHA = 1.0

# derivative taken exactly at z == 0: the left-hand value at kinks
SUBGRADIENT_AT_ZERO = {"ReLU": 0.0, "LeakyReLU": LEAKY_SLOPE, "ELU": 1.0, "Swish": 0.5}

BASE_LEARNING_RATES = {
    "Adam": 0.001,
    "Adagrad": 0.01,
    "SGD": 0.01,
    "RMSprop": 0.01,
    "Adamax": 0.002,
    "NAdam": 0.002,
    "RAdam": 0.001,
}


def activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "ReLU":
        return np.maximum(z, 0.0)
    if kind == "LeakyReLU":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if kind == "ELU":
        return np.where(z > 0, z, ELU_ALPHA * np.expm1(np.minimum(z, 0.0)))
    if kind == "Swish":
        return z * expit(z)
    raise ConfigurationError(f"unknown activation {kind!r}")


def activate_grad(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "ReLU":
        return (z > 0).astype(float)
    if kind == "LeakyReLU":
        return np.where(z > 0, 1.0, LEAKY_SLOPE)
    if kind == "ELU":
        return np.where(z > 0, 1.0, ELU_ALPHA * np.exp(np.minimum(z, 0.0)))
    if kind == "Swish":
        s = expit(z)
        return s + z * s * (1.0 - s)
    raise ConfigurationError(f"unknown activation {kind!r}")


@dataclass(frozen=True)
class MLPConfig:
    l1: int = 32
    epochs: int = 16
    batch_size: int = 32
    dropout_p: float = 0.0
    activation: str = "ReLU"
    optimizer: str = "Adam"
    lr_multiplier: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if int(self.l1) != self.l1 or self.l1 < 4:
            raise ConfigurationError(f"l1 must be an integer >= 4, got {self.l1}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigurationError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if not self.lr_multiplier > 0:
            raise ConfigurationError("lr_multiplier must be positive")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def from_hyperparameters(cls, hp: dict, seed: int = 0) -> "MLPConfig":
        keys = {f for f in cls.__dataclass_fields__ if f != "seed"}
        return cls(seed=int(seed), **{k: v for k, v in hp.items() if k in keys})

    @property
    def learning_rate(self) -> float:
        return BASE_LEARNING_RATES[self.optimizer] * self.lr_multiplier

    def layer_sizes(self, input_dim: int) -> list[int]:
        return [input_dim, self.l1, self.l1 // 2, self.l1 // 2, self.l1 // 4, 1]


@dataclass
class MLPModel:
    weights: list  # W[k] has shape (fan_in, fan_out)
    biases: list
    activation: str
    dropout_p: float = 0.0
    training: bool = False

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def params(self) -> list:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def copy(self) -> "MLPModel":
        return MLPModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.activation, self.dropout_p, self.training)

    def eval(self) -> "MLPModel":
        self.training = False
        return self

    def __call__(self, x):
        return forward(self, x, mode="eval")


def build(config: MLPConfig, input_dim: int) -> MLPModel:
    """Initialize weights and biases uniformly in ``±sqrt(1 / fan_in)``."""
    if input_dim < 1:
        raise ConfigurationError("input_dim must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    sizes = config.layer_sizes(input_dim)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, fan_out))
    return MLPModel(weights, biases, config.activation, config.dropout_p)


def _check_input(model: MLPModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ConfigurationError(f"expected inputs of width {model.input_dim}, got shape {x.shape}")
    return x


def forward(model: MLPModel, x, mode: str = "eval", rng=None, cache: list | None = None):
    """Predictions of shape ``(n,)``.

    In ``"train"`` mode dropout masks are drawn from ``rng`` and kept units
    are scaled by ``1 / (1 - p)``.  If ``cache`` is a list it receives what
    :func:`backward` needs.
    """
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"mode must be 'train' or 'eval', got {mode!r}")
    a = _check_input(model, x)
    p = model.dropout_p
    drop = mode == "train" and p > 0
    if drop and rng is None:
        raise ConfigurationError("train-mode dropout needs a random generator")
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        if cache is not None:
            cache.append((a, z))
        if k == last:
            return z[:, 0]
        a = activate(model.activation, z)
        if drop:
            mask = (rng.random(a.shape) >= p) / (1.0 - p)
            a = a * mask
            if cache is not None:
                cache[-1] = (cache[-1][0], z, mask)


def backward(model: MLPModel, cache: list, dout) -> tuple[list, list, np.ndarray]:
    """Gradients of ``sum(dout * output)`` w.r.t. weights, biases and inputs."""
    g = np.asarray(dout, dtype=float).reshape(-1, 1)
    dWs, dbs = [None] * len(model.weights), [None] * len(model.weights)
    for k in range(len(model.weights) - 1, -1, -1):
        a_prev = cache[k][0]
        dWs[k] = a_prev.T @ g
        dbs[k] = g.sum(axis=0)
        g = g @ model.weights[k].T
        if k > 0:
            prev = cache[k - 1]
            if len(prev) == 3:
                g = g * prev[2]
            g = g * activate_grad(model.activation, prev[1])
    return dWs, dbs, g


def input_gradient(model: MLPModel, x) -> np.ndarray:
    """``d f / d x`` for every row of ``x`` (dropout off)."""
    cache: list = []
    forward(model, x, "eval", cache=cache)
    return backward(model, cache, np.ones(len(cache[0][0])))[2]


def mse(predictions, targets) -> float:
    predictions = np.asarray(predictions, dtype=float).ravel()
    targets = np.asarray(targets, dtype=float).ravel()
    if len(predictions) != len(targets) or len(targets) == 0:
        raise ConfigurationError(
            f"mse needs equal non-empty lengths, got {len(predictions)} and {len(targets)}")
    r = predictions - targets
    return float(np.mean(r * r))


def loss_and_grads(model: MLPModel, x, y, mode="train", rng=None):
    cache: list = []
    pred = forward(model, x, mode, rng=rng, cache=cache)
    r = pred - y
    loss = float(np.mean(r * r))
    dWs, dbs, _ = backward(model, cache, 2.0 * r / len(y))
    return loss, [g for wb in zip(dWs, dbs) for g in wb]


class Optimizer:
    """First-order update rules, hyper-constants as in common DL frameworks."""

    def __init__(self, name: str, lr: float, betas=(0.9, 0.999), eps=1e-8,
                 rms_alpha=0.99, adagrad_eps=1e-10, momentum_decay=0.004):
        if name not in OPTIMIZERS:
            raise ConfigurationError(f"unknown optimizer {name!r}")
        self.name, self.lr = name, lr
        self.b1, self.b2 = betas
        self.eps, self.rms_alpha, self.adagrad_eps = eps, rms_alpha, adagrad_eps
        self.momentum_decay = momentum_decay
        self.t = 0
        self.state: list[dict] = []
        self.mu_product = 1.0

    def step(self, params: list, grads: list):
        if not self.state:
            self.state = [dict(m=np.zeros_like(p), v=np.zeros_like(p)) for p in params]
        self.t += 1
        t, lr, b1, b2, eps = self.t, self.lr, self.b1, self.b2, self.eps
        name = self.name
        if name == "NAdam":
            mu = b1 * (1.0 - 0.5 * 0.96 ** (t * self.momentum_decay))
            mu_next = b1 * (1.0 - 0.5 * 0.96 ** ((t + 1) * self.momentum_decay))
            self.mu_product *= mu
        for p, g, st in zip(params, grads, self.state):
            m, v = st["m"], st["v"]
            if name == "SGD":
                p -= lr * g
            elif name == "Adagrad":
                v += g * g
                p -= lr * g / (np.sqrt(v) + self.adagrad_eps)
            elif name == "RMSprop":
                v *= self.rms_alpha
                v += (1.0 - self.rms_alpha) * g * g
                p -= lr * g / (np.sqrt(v) + eps)
            elif name == "Adamax":
                m *= b1
                m += (1.0 - b1) * g
                np.maximum(b2 * v, np.abs(g) + eps, out=v)
                p -= (lr / (1.0 - b1 ** t)) * m / v
            else:
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * g * g
                bc2 = 1.0 - b2 ** t
                if name == "Adam":
                    p -= lr * (m / (1.0 - b1 ** t)) / (np.sqrt(v / bc2) + eps)
                elif name == "NAdam":
                    denom = np.sqrt(v / bc2) + eps
                    p -= lr * (1.0 - mu) / (1.0 - self.mu_product) * g / denom
                    p -= lr * mu_next / (1.0 - self.mu_product * mu_next) * m / denom
                elif name == "RAdam":
                    m_hat = m / (1.0 - b1 ** t)
                    rho_inf = 2.0 / (1.0 - b2) - 1.0
                    rho_t = rho_inf - 2.0 * t * b2 ** t / bc2
                    if rho_t > 5.0:
                        rect = math.sqrt((rho_t - 4) * (rho_t - 2) * rho_inf
                                         / ((rho_inf - 4) * (rho_inf - 2) * rho_t))
                        p -= lr * m_hat * rect * math.sqrt(bc2) / (np.sqrt(v) + eps)
                    else:
                        p -= lr * m_hat


@dataclass
class TrainResult:
    model: MLPModel
    losses: list = field(default_factory=list)
    degenerate: bool = False


def train(model: MLPModel, x, y, config: MLPConfig) -> TrainResult:
    """Minibatch training on MSE; returns a trained copy and per-epoch losses.

    Rows are reshuffled every epoch and the last incomplete batch is kept.
    A non-finite loss or parameter aborts training with ``degenerate=True``.
    """
    x = _check_input(model, x)
    y = np.asarray(y, dtype=float).ravel()
    if len(x) != len(y) or len(y) == 0:
        raise ConfigurationError("training data must be non-empty with matching lengths")
    model = model.copy()
    model.dropout_p = config.dropout_p
    opt = Optimizer(config.optimizer, config.learning_rate)
    ss_shuffle, ss_drop = np.random.SeedSequence([config.seed, 1]).spawn(2)
    shuffle_rng = np.random.default_rng(ss_shuffle)
    drop_rng = np.random.default_rng(ss_drop)
    params = model.params
    losses = []
    n, bs = len(y), int(config.batch_size)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.epochs):
            perm = shuffle_rng.permutation(n)
            total = 0.0
            for start in range(0, n, bs):
                idx = perm[start:start + bs]
                loss, grads = loss_and_grads(model, x[idx], y[idx], "train", drop_rng)
                if not math.isfinite(loss):
                    logger.warning("training diverged (non-finite loss)")
                    return TrainResult(model.eval(), losses, degenerate=True)
                opt.step(params, grads)
                total += loss * len(idx)
            losses.append(total / n)
            if not all(np.all(np.isfinite(p)) for p in params):
                logger.warning("training diverged (non-finite parameters)")
                return TrainResult(model.eval(), losses, degenerate=True)
    return TrainResult(model.eval(), losses)


def predict(model: MLPModel, x) -> np.ndarray:
    return forward(model, x, "eval")


# -- serialization ---------------------------------------------------------

def save_model(model: MLPModel, path, fmt: str = "binary", metadata: dict | None = None):
    """Write layer-ordered parameters plus a JSON sidecar ``<path>.json``.

    The binary form is little-endian float64 ``W1, b1, ..., W5, b5`` with
    each ``W`` in row-major ``(fan_in, fan_out)`` order; the text form holds
    the same values one per line.
    """
    path = Path(path)
    flat = np.concatenate([p.ravel() for p in model.params])
    if fmt == "binary":
        path.write_bytes(flat.astype("<f8").tobytes())
    elif fmt == "text":
        path.write_text("".join(f"{v!r}\n" for v in flat.tolist()))
    else:
        raise ConfigurationError(f"unknown weight format {fmt!r}")
    meta = dict(format=fmt, layer_sizes=model.layer_sizes, activation=model.activation,
                dropout_p=model.dropout_p, **(metadata or {}))
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_model(path) -> tuple[MLPModel, dict]:
    path = Path(path)
    meta_path = Path(str(path) + ".json")
    if not path.is_file() or not meta_path.is_file():
        raise IngestionError(f"{path}: weight file or its .json sidecar is missing")
    meta = json.loads(meta_path.read_text())
    if meta.get("format") == "text":
        flat = np.array([float(v) for v in path.read_text().split()])
    else:
        flat = np.frombuffer(path.read_bytes(), dtype="<f8").astype(float)
    sizes = meta["layer_sizes"]
    need = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    if len(flat) != need:
        raise IngestionError(f"{path}: expected {need} values, found {len(flat)}")
    weights, biases, pos = [], [], 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[pos:pos + a * b].reshape(a, b).copy())
        pos += a * b
        biases.append(flat[pos:pos + b].copy())
        pos += b
    return MLPModel(weights, biases, meta["activation"], meta.get("dropout_p", 0.0)), meta


def config_dict(config: MLPConfig) -> dict:
    return asdict(config)
