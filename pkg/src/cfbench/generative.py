"""Variational autoencoder over min-max encoded rows.

Encoder ``x -> tanh -> (mu, log sigma^2)``, decoder ``z -> tanh -> sigmoid``,
each with one hidden layer of width ``max(8, 2d)``. The decoder output lies in
``(0, 1)`` for every ``z`` which matches the encoded feature range.
Reconstruction loss is Bernoulli cross entropy on binary columns and squared
error on continuous ones.

The latent-space recourse methods need ``d f(g(z)) / dz``; :meth:`Vae.decode_vjp`
gives the vector-Jacobian product of the decoder so gradients can be chained
through the classifier's input gradient.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .model import WEIGHTS_FORMAT, WEIGHTS_VERSION, TrainingError, WeightFileError, read_weights_document
from .optim import Adam

_PARAM_NAMES = ("enc_w", "enc_b", "mu_w", "mu_b", "lv_w", "lv_b", "dec_w", "dec_b", "out_w", "out_b")


def default_latent_dim(d: int) -> int:
    return max(2, math.ceil(d / 4))


def default_hidden(d: int) -> int:
    return max(8, 2 * d)


@dataclass(frozen=True)
class VaeTrainConfig:
    learning_rate: float = 0.005
    epochs: int = 30
    batch_size: int = 128
    seed: int = 0
    kl_weight: float = 0.01

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.kl_weight < 0:
            raise ValueError("kl_weight must be non-negative")


class Vae:
    arch = "vae"

    def __init__(self, params: dict, binary_mask):
        self.p = {k: np.array(params[k], dtype=float) for k in _PARAM_NAMES}
        self.binary_mask = np.array(binary_mask, dtype=bool)
        self.d = self.p["enc_w"].shape[0]
        self.hidden = self.p["enc_w"].shape[1]
        self.latent_dim = self.p["mu_w"].shape[1]
        if self.binary_mask.shape != (self.d,):
            raise ValueError("binary_mask must have one entry per input feature")
        self.loss_history: list[float] = []

    @classmethod
    def initialize(cls, d: int, k: int, binary_mask, rng, hidden: int | None = None) -> "Vae":
        h = hidden or default_hidden(d)

        def glorot(a, b):
            lim = np.sqrt(6.0 / (a + b))
            return rng.uniform(-lim, lim, size=(a, b))

        params = {
            "enc_w": glorot(d, h), "enc_b": np.zeros(h),
            "mu_w": glorot(h, k), "mu_b": np.zeros(k),
            "lv_w": glorot(h, k), "lv_b": np.zeros(k),
            "dec_w": glorot(k, h), "dec_b": np.zeros(h),
            "out_w": glorot(h, d), "out_b": np.zeros(d),
        }
        return cls(params, binary_mask)

    def parameters(self):
        return [self.p[k] for k in _PARAM_NAMES]

    # ------------------------------------------------------------------ inference

    def _check(self, x, n):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != n or x.ndim not in (1, 2):
            raise ValueError(f"expected dimension {n}, got shape {x.shape}")
        return x

    def encode(self, x):
        """Posterior mean ``mu(x)``; deterministic."""
        x = self._check(x, self.d)
        h = np.tanh(x @ self.p["enc_w"] + self.p["enc_b"])
        return h @ self.p["mu_w"] + self.p["mu_b"]

    def encode_full(self, x):
        x = self._check(x, self.d)
        h = np.tanh(x @ self.p["enc_w"] + self.p["enc_b"])
        return h @ self.p["mu_w"] + self.p["mu_b"], h @ self.p["lv_w"] + self.p["lv_b"]

    def decode(self, z):
        z = self._check(z, self.latent_dim)
        h = np.tanh(z @ self.p["dec_w"] + self.p["dec_b"])
        return expit(h @ self.p["out_w"] + self.p["out_b"])

    def decode_vjp(self, z, v):
        """``J_g(z)^T v`` for the decoder ``g``; returns ``(g(z), grad)``."""
        z = self._check(z, self.latent_dim)
        h = np.tanh(z @ self.p["dec_w"] + self.p["dec_b"])
        out = expit(h @ self.p["out_w"] + self.p["out_b"])
        g = (np.asarray(v) * out * (1.0 - out)) @ self.p["out_w"].T
        g = (g * (1.0 - h * h)) @ self.p["dec_w"].T
        return out, g

    def decode_jacobian(self, z):
        """Full ``(d, k)`` decoder Jacobian at a single latent point."""
        z = self._check(z, self.latent_dim)
        h = np.tanh(z @ self.p["dec_w"] + self.p["dec_b"])
        out = expit(h @ self.p["out_w"] + self.p["out_b"])
        return (out * (1 - out))[:, None] * (self.p["out_w"].T @ ((1 - h * h)[:, None] * self.p["dec_w"].T))

    def reconstruct(self, x):
        return self.decode(self.encode(x))

    def reconstruct_vjp(self, x, v):
        """``(g(mu(x)), J^T v)`` for the deterministic autoencoder map ``x -> g(mu(x))``."""
        x = self._check(x, self.d)
        he = np.tanh(x @ self.p["enc_w"] + self.p["enc_b"])
        z = he @ self.p["mu_w"] + self.p["mu_b"]
        out, gz = self.decode_vjp(z, v)
        g = (gz @ self.p["mu_w"].T) * (1.0 - he * he)
        return out, g @ self.p["enc_w"].T

    # ------------------------------------------------------------------ training

    def _loss_grads(self, xb, eps, kl_weight):
        p = self.p
        n = xb.shape[0]
        he = np.tanh(xb @ p["enc_w"] + p["enc_b"])
        mu = he @ p["mu_w"] + p["mu_b"]
        lv = np.clip(he @ p["lv_w"] + p["lv_b"], -20.0, 20.0)
        std = np.exp(0.5 * lv)
        z = mu + std * eps
        hd = np.tanh(z @ p["dec_w"] + p["dec_b"])
        out = expit(hd @ p["out_w"] + p["out_b"])

        bm = self.binary_mask
        o = np.clip(out, 1e-12, 1 - 1e-12)
        rec = np.where(bm, -(xb * np.log(o) + (1 - xb) * np.log(1 - o)), (out - xb) ** 2)
        kl = -0.5 * (1 + lv - mu * mu - np.exp(lv))
        loss = (rec.sum() + kl_weight * kl.sum()) / n

        # d loss / d output pre-activation
        da = np.where(bm, out - xb, 2.0 * (out - xb) * out * (1 - out)) / n
        g = {"out_w": hd.T @ da, "out_b": da.sum(0)}
        dhd = (da @ p["out_w"].T) * (1 - hd * hd)
        g["dec_w"] = z.T @ dhd
        g["dec_b"] = dhd.sum(0)
        dz = dhd @ p["dec_w"].T
        dmu = dz + kl_weight * mu / n
        dlv = dz * eps * 0.5 * std + kl_weight * 0.5 * (np.exp(lv) - 1) / n
        g["mu_w"] = he.T @ dmu
        g["mu_b"] = dmu.sum(0)
        g["lv_w"] = he.T @ dlv
        g["lv_b"] = dlv.sum(0)
        dhe = (dmu @ p["mu_w"].T + dlv @ p["lv_w"].T) * (1 - he * he)
        g["enc_w"] = xb.T @ dhe
        g["enc_b"] = dhe.sum(0)
        return loss, [g[k] for k in _PARAM_NAMES]

    def negative_elbo(self, x, seed: int = 0, kl_weight: float = 1.0) -> float:
        """Single-sample estimate of the mean negative ELBO on ``x``."""
        x = self._check(x, self.d)
        eps = np.random.default_rng(seed).standard_normal((x.shape[0], self.latent_dim))
        return self._loss_grads(x, eps, kl_weight)[0]

    # ------------------------------------------------------------------ persistence

    def to_document(self) -> dict:
        return {
            "format": WEIGHTS_FORMAT,
            "version": WEIGHTS_VERSION,
            "arch": self.arch,
            "layer_dims": [self.d, self.hidden, self.latent_dim],
            "weights": [],
            "biases": [],
            "params": {k: self.p[k].tolist() for k in _PARAM_NAMES},
            "binary_mask": self.binary_mask.tolist(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_document(), indent=1))

    @classmethod
    def load(cls, path) -> "Vae":
        doc = read_weights_document(path, expected_arch=cls.arch)
        try:
            return cls(doc["params"], doc["binary_mask"])
        except (KeyError, ValueError) as exc:
            raise WeightFileError(f"{path}: {exc}") from exc


def train_vae(data, k: int | None = None, cfg: VaeTrainConfig = VaeTrainConfig(), binary_mask=None) -> Vae:
    """Fit a VAE on an encoded data set (or a bare matrix plus ``binary_mask``).

    Per-epoch mean negative ELBO is stored in ``vae.loss_history``.
    """
    if hasattr(data, "matrix"):
        X = data.matrix
        binary_mask = data.binary_mask if binary_mask is None else binary_mask
    else:
        X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty 2-D matrix")
    d = X.shape[1]
    k = default_latent_dim(d) if k is None else int(k)
    if k < 1:
        raise ValueError("latent dimension must be >= 1")
    if binary_mask is None:
        binary_mask = np.zeros(d, dtype=bool)
    rng = np.random.default_rng(cfg.seed)
    vae = Vae.initialize(d, k, binary_mask, rng)
    # clip so rows outside the training range do not produce log(0)
    X = np.clip(X, 0.0, 1.0)
    opt = Adam(vae.parameters(), cfg.learning_rate)
    history = []
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            xb = X[perm[start:start + cfg.batch_size]]
            eps = rng.standard_normal((xb.shape[0], k))
            loss, grads = vae._loss_grads(xb, eps, cfg.kl_weight)
            if not np.isfinite(loss):
                raise TrainingError(f"VAE loss became non-finite in epoch {epoch}")
            opt.step(grads)
            total += loss * xb.shape[0]
        history.append(total / n)
    vae.loss_history = history
    return vae
