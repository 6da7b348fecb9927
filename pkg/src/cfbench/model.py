"""Fixed black-box classifiers ``f: R^d -> (0, 1)``.

Two architectures: logistic regression and a ReLU multi-layer perceptron with
hidden sizes 18, 9 and 3. Both expose probabilities, labels, logits, and
analytic gradients of the probability and of the logit with respect to the
input. Training uses mini-batch RMSProp on binary cross entropy.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, log_expit

from .optim import RMSProp

logger = logging.getLogger(__name__)

WEIGHTS_FORMAT = "cfbench.weights"
WEIGHTS_VERSION = 1
MLP_HIDDEN = (18, 9, 3)
HIDDEN_BIAS_INIT = 0.1
INIT_REDRAWS = 10


class TrainingError(RuntimeError):
    pass


class WeightFileError(ValueError):
    pass


def check_threshold(theta: float) -> float:
    theta = float(theta)
    if not 0.0 < theta < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {theta}")
    return theta


class Classifier:
    """Common interface; subclasses implement ``logit`` and ``logit_gradient``.

    Every method accepts a single vector ``(d,)`` or a batch ``(n, d)`` and
    returns a scalar/vector or a batch accordingly.
    """

    arch = "base"

    def __init__(self, d: int):
        self.d = int(d)
        self.loss_history: list[float] = []

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d or x.ndim not in (1, 2):
            raise ValueError(f"expected input of dimension {self.d}, got shape {x.shape}")
        return x

    def logit(self, x):
        raise NotImplementedError

    def logit_gradient(self, x):
        raise NotImplementedError

    def predict_proba(self, x):
        out = expit(self.logit(x))
        return float(out) if np.ndim(out) == 0 else out

    def predict_label(self, x, theta: float = 0.5):
        """``1`` iff ``predict_proba(x) > theta`` (strict)."""
        p = np.asarray(self.predict_proba(x))
        lab = (p > theta).astype(np.int64)
        return int(lab) if lab.ndim == 0 else lab

    def input_gradient(self, x):
        """Gradient of the probability with respect to the input."""
        p = np.asarray(self.predict_proba(x))
        g = self.logit_gradient(x)
        return (p * (1.0 - p))[..., None] * g if g.ndim == 2 else p * (1.0 - p) * g

    def parameters(self) -> list[np.ndarray]:
        raise NotImplementedError

    def checksum(self) -> str:
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(np.ascontiguousarray(p, dtype=np.float64).tobytes())
        return h.hexdigest()

    def layer_dims(self) -> list[int]:
        raise NotImplementedError


class LinearModel(Classifier):
    """``f(x) = sigmoid(w . x + b)``."""

    arch = "linear"

    def __init__(self, weights, bias: float = 0.0):
        weights = np.array(weights, dtype=float).reshape(-1)
        super().__init__(weights.size)
        self.weights = weights
        self.bias = np.array([float(bias)])

    @property
    def coefficients(self) -> np.ndarray:
        return self.weights

    @property
    def intercept(self) -> float:
        return float(self.bias[0])

    def logit(self, x):
        x = self._check(x)
        out = x @ self.weights + self.bias[0]
        return float(out) if x.ndim == 1 else out

    def logit_gradient(self, x):
        x = self._check(x)
        return np.broadcast_to(self.weights, x.shape).copy()

    def parameters(self):
        return [self.weights, self.bias]

    def layer_dims(self):
        return [self.d, 1]

    def _forward_backward(self, xb, yb):
        z = xb @ self.weights + self.bias[0]
        loss = -np.mean(yb * log_expit(z) + (1 - yb) * log_expit(-z))
        dz = (expit(z) - yb) / len(yb)
        return loss, [xb.T @ dz, np.array([dz.sum()])]


class MlpModel(Classifier):
    """ReLU network ``d -> 18 -> 9 -> 3 -> 1`` with a sigmoid output unit.

    ``weights[i]`` has shape ``(fan_in, fan_out)``.
    """

    arch = "mlp"

    def __init__(self, weights, biases):
        weights = [np.array(w, dtype=float) for w in weights]
        biases = [np.array(b, dtype=float).reshape(-1) for b in biases]
        if len(weights) != len(MLP_HIDDEN) + 1 or len(biases) != len(weights):
            raise ValueError("MLP needs exactly three hidden layers plus an output layer")
        dims = [weights[0].shape[0]] + [w.shape[1] for w in weights]
        if tuple(dims[1:-1]) != MLP_HIDDEN or dims[-1] != 1:
            raise ValueError(f"MLP layer sizes must be d-18-9-3-1, got {dims}")
        for w, w_next in zip(weights[:-1], weights[1:]):
            if w.shape[1] != w_next.shape[0]:
                raise ValueError("inconsistent layer shapes")
        for w, b in zip(weights, biases):
            if b.shape != (w.shape[1],):
                raise ValueError("bias shape does not match layer")
        super().__init__(dims[0])
        self.weights = weights
        self.biases = biases

    @classmethod
    def initialize(cls, d: int, rng: np.random.Generator) -> "MlpModel":
        dims = [d, *MLP_HIDDEN, 1]
        ws = [_he_uniform(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]
        # small positive hidden biases keep the narrow 3-unit layer from starting dead
        bs = [np.full(b, HIDDEN_BIAS_INIT) for b in dims[1:-1]] + [np.zeros(1)]
        return cls(ws, bs)

    def _forward(self, x):
        pre = []
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = h @ w + b
            pre.append(a)
            h = np.maximum(a, 0.0)
        z = h @ self.weights[-1] + self.biases[-1]
        return z[..., 0], pre

    def logit(self, x):
        x = self._check(x)
        z, _ = self._forward(x)
        return float(z) if x.ndim == 1 else z

    def logit_gradient(self, x):
        x = self._check(x)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        _, pre = self._forward(xb)
        # subgradient 0 at ReLU kinks (a == 0)
        g = np.broadcast_to(self.weights[-1][:, 0], (xb.shape[0], self.weights[-1].shape[0]))
        for w, a in zip(self.weights[-2::-1], pre[::-1]):
            g = (g * (a > 0.0)) @ w.T
        return g[0] if single else g

    def parameters(self):
        return [*self.weights, *self.biases]

    def layer_dims(self):
        return [self.d, *MLP_HIDDEN, 1]

    def _forward_backward(self, xb, yb):
        acts = [xb]
        pre = []
        h = xb
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = h @ w + b
            pre.append(a)
            h = np.maximum(a, 0.0)
            acts.append(h)
        z = (h @ self.weights[-1] + self.biases[-1])[:, 0]
        loss = -np.mean(yb * log_expit(z) + (1 - yb) * log_expit(-z))
        dz = ((expit(z) - yb) / len(yb))[:, None]
        gw, gb = [], []
        g = dz
        for i in range(len(self.weights) - 1, -1, -1):
            gw.append(acts[i].T @ g)
            gb.append(g.sum(axis=0))
            if i > 0:
                g = (g @ self.weights[i].T) * (pre[i - 1] > 0.0)
        return loss, [*gw[::-1], *gb[::-1]]


def _he_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.002
    epochs: int = 10
    batch_size: int = 1024
    seed: int = 0
    decay: float = 0.9
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def train(arch: str, data, cfg: TrainConfig = TrainConfig()) -> Classifier:
    """Fit a classifier on an :class:`~cfbench.dataset.EncodedDataset` (or ``(X, y)``).

    The per-epoch mean training loss is kept in ``model.loss_history``.
    """
    if isinstance(data, tuple):
        X, y = (np.asarray(a, dtype=float) for a in data)
    else:
        X, y = data.matrix, data.target.astype(float)
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty data set")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    rng = np.random.default_rng(cfg.seed)
    d = X.shape[1]
    if arch == "linear":
        # output bias starts at the training log-odds
        base = float(np.clip(y.mean(), 1e-3, 1 - 1e-3))
        model = LinearModel(_he_uniform(rng, d, 1)[:, 0], np.log(base / (1 - base)))
    elif arch == "mlp":
        model = MlpModel.initialize(d, rng)
        # redraw while some hidden layer is silent on every training row
        probe = X[:4096]
        for _ in range(INIT_REDRAWS):
            if all((a > 0).any() for a in model._forward(probe)[1]):
                break
            model = MlpModel.initialize(d, rng)
    else:
        raise ValueError(f"unknown architecture {arch!r}")
    opt = RMSProp(model.parameters(), cfg.learning_rate, cfg.decay, cfg.eps)
    n = X.shape[0]
    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, grads = model._forward_backward(X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite in epoch {epoch}")
            opt.step(grads)
            total += loss * len(idx)
        history.append(total / n)
        logger.debug("%s epoch %d loss %.5f", arch, epoch, history[-1])
    model.loss_history = history
    return model


def accuracy(model: Classifier, X, y, theta: float = 0.5) -> float:
    return float(np.mean(model.predict_label(np.asarray(X), theta) == np.asarray(y)))


# --------------------------------------------------------------------------- persistence

def weights_document(model: Classifier, scaling=None) -> dict:
    if isinstance(model, LinearModel):
        weights = [model.weights[:, None].tolist()]
        biases = [model.bias.tolist()]
    else:
        weights = [w.tolist() for w in model.weights]
        biases = [b.tolist() for b in model.biases]
    doc = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "arch": model.arch,
        "layer_dims": model.layer_dims(),
        "weights": weights,
        "biases": biases,
        "scaling": None if scaling is None else [list(map(float, p)) for p in scaling],
    }
    return doc


def save_weights(model: Classifier, path, scaling=None) -> None:
    """Write the versioned JSON weight document (floats round-trip exactly)."""
    Path(path).write_text(json.dumps(weights_document(model, scaling), indent=1))


def read_weights_document(path, expected_arch: str | None = None) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise WeightFileError(f"{path}: malformed weight file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != WEIGHTS_FORMAT:
        raise WeightFileError(f"{path}: not a {WEIGHTS_FORMAT} document")
    if doc.get("version") != WEIGHTS_VERSION:
        raise WeightFileError(f"{path}: unsupported version {doc.get('version')}")
    for key in ("arch", "layer_dims", "weights", "biases"):
        if key not in doc:
            raise WeightFileError(f"{path}: missing field {key!r}")
    if expected_arch is not None and doc["arch"] != expected_arch:
        raise WeightFileError(f"{path}: architecture is {doc['arch']!r}, expected {expected_arch!r}")
    dims = doc["layer_dims"]
    if doc["arch"] not in ("linear", "mlp"):
        return doc
    shapes = [np.shape(w) for w in doc["weights"]]
    if shapes != [(a, b) for a, b in zip(dims[:-1], dims[1:])]:
        raise WeightFileError(f"{path}: weight shapes {shapes} do not match layer_dims {dims}")
    return doc


def load_weights(path, expected_arch: str | None = None) -> Classifier:
    doc = read_weights_document(path, expected_arch)
    try:
        if doc["arch"] == "linear":
            return LinearModel(np.array(doc["weights"][0])[:, 0], doc["biases"][0][0])
        if doc["arch"] == "mlp":
            return MlpModel(doc["weights"], doc["biases"])
    except ValueError as exc:
        raise WeightFileError(f"{path}: {exc}") from exc
    raise WeightFileError(f"{path}: unknown classifier architecture {doc['arch']!r}")
