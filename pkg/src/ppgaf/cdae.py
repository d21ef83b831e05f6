"""Convolutional denoising autoencoder: build, pretrain, encode, denoise.

The encoder stacks three conv+maxpool blocks (kernels 10/8/5, pools 3/3/2)
down to a [44, C] latent; the decoder mirrors it with conv+upsample blocks
(kernels 5/8/10, factors 2/3/3) and a final flatten+dense back to 800
samples. Kernel and pool sizes follow from the published layer table's
shape and parameter-count arithmetic; with the "paper" profile the channel
widths are (64, 45, 50) and the parameter total is 40,645,748.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError, ShapeError, StateError

INPUT_LEN = 800
ENCODER_LEN = 6  # layers 0..5 are the conv/pool encoder

PROFILES = {
    "paper": (64, 45, 50),
    "mini": (16, 11, 12),
}


def _encoder_layers(channels):
    c1, c2, c3 = channels
    return [
        nn.Conv1D(c1, kernel=10, stride=1, padding="same", activation="relu"),
        nn.MaxPool1D(3),
        nn.Conv1D(c2, kernel=8, stride=1, padding="same", activation="relu"),
        nn.MaxPool1D(3),
        nn.Conv1D(c3, kernel=5, stride=1, padding="same", activation="relu"),
        nn.MaxPool1D(2),
    ]


def _decoder_layers(channels):
    c1, c2, c3 = channels
    return [
        nn.Conv1D(c3, kernel=5, stride=1, padding="same", activation="relu"),
        nn.UpSample1D(2),
        nn.Conv1D(c2, kernel=8, stride=1, padding="same", activation="relu"),
        nn.UpSample1D(3),
        nn.Conv1D(c1, kernel=10, stride=1, padding="same", activation="relu"),
        nn.UpSample1D(3),
        nn.Flatten(),
        nn.Dense(INPUT_LEN, activation=None),
    ]


class Cdae:
    """Denoising autoencoder over [800, 1] inputs."""

    kind = "cdae"

    def __init__(self, net: nn.Sequential, profile: str, seed: int):
        self.net = net
        self.profile = profile
        self.seed = seed
        self.history: list = []
        self.trained = False

    # inference ----------------------------------------------------------
    def _as_batch(self, windows: np.ndarray) -> np.ndarray:
        x = np.asarray(windows, dtype=self.net.dtype)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != INPUT_LEN:
            raise ShapeError(f"expected {INPUT_LEN}-sample windows, got {x.shape}")
        return x[:, :, None]

    def encode(self, window: np.ndarray) -> np.ndarray:
        """Latent [44, C] at the output of the third max-pool."""
        x = self._as_batch(window)
        for layer in self.net.layers[:ENCODER_LEN]:
            x = layer.forward(x, train=False)
        return x[0]

    def denoise(self, window: np.ndarray) -> np.ndarray:
        """Full forward reconstruction of one window."""
        x = self._as_batch(window)
        return self.net.forward(x, train=False)[0]

    def reconstruct_batch(self, windows: np.ndarray, chunk: int = 256) -> np.ndarray:
        x = self._as_batch(windows)
        outs = [self.net.forward(x[i : i + chunk], train=False) for i in range(0, x.shape[0], chunk)]
        return np.concatenate(outs, axis=0)

    # checkpoint plumbing --------------------------------------------------
    def state_tensors(self):
        return self.net.state_tensors()

    def arch(self):
        return {"layers": self.net.specs()}


def build_cdae(seed: int = 0, profile: str = "paper", init: str = "he") -> Cdae:
    """Assemble the autoencoder; `init='zeros'` skips weight draws."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    channels = PROFILES[profile]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101])) if init == "he" else None
    net = nn.Sequential(
        _encoder_layers(channels) + _decoder_layers(channels),
        input_shape=(INPUT_LEN, 1),
        rng=rng,
        dtype=nn.DEFAULT_DTYPE,
        name="cdae",
    )
    return Cdae(net, profile, seed)


def describe_cdae(profile: str = "paper"):
    """Layer table rows (kind, output shape, parameter count) without weights."""
    return build_cdae(seed=0, profile=profile, init="zeros").net.table()


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    lr_factor: float = 0.1
    lr_patience: int = 25
    lr_floor: float = 1e-6
    seed: int = 0

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")


class PlateauSchedule:
    """Multiply the rate by `factor` after `patience` epochs without a new
    best validation loss; the counter resets after each reduction."""

    def __init__(self, lr: float, factor: float = 0.1, patience: int = 25, floor: float = 1e-6):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.floor = floor
        self.best = np.inf
        self.wait = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best:
            self.best = val_loss
            self.wait = 0
        else:
            self.wait += 1
            if self.wait >= self.patience:
                self.lr = max(self.lr * self.factor, self.floor)
                self.wait = 0
        return self.lr


def pretrain(
    model: Cdae,
    train_pairs,
    val_pairs,
    config: PretrainConfig = PretrainConfig(),
) -> list:
    """Minimize reconstruction MSE on (noisy, clean) pairs.

    The learning rate is multiplied by `lr_factor` (floored at `lr_floor`)
    whenever the validation MSE fails to improve for `lr_patience` epochs.
    The weights with the best validation MSE are retained. Returns the
    per-epoch history and stores it on the model.
    """
    config.validate()
    noisy_tr, clean_tr = (np.asarray(a, dtype=model.net.dtype) for a in train_pairs)
    noisy_val, clean_val = (np.asarray(a, dtype=model.net.dtype) for a in val_pairs)
    if noisy_tr.shape[0] == 0 or noisy_val.shape[0] == 0:
        raise ConfigError("pretraining needs non-empty train and val sets")
    if noisy_tr.shape != clean_tr.shape:
        raise ShapeError("noisy/clean training shapes differ")

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 202]))
    optimizer = nn.Adam(model.net.trainables(), lr=config.lr)
    schedule = PlateauSchedule(config.lr, config.lr_factor, config.lr_patience, config.lr_floor)
    history = []
    best_val = np.inf
    best_state = None
    n = noisy_tr.shape[0]

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x = noisy_tr[idx][:, :, None]
            target = clean_tr[idx]
            model.net.zero_grads()
            pred = model.net.forward(x, train=True, rng=rng)
            loss, dpred = nn.mse_loss(pred, target)
            model.net.backward(dpred)
            nn.check_finite_grads(model.net.trainables())
            optimizer.step()
            total += loss * idx.size
        train_mse = total / n
        val_mse = _mse_eval(model, noisy_val, clean_val)
        optimizer.lr = schedule.step(val_mse)
        history.append(
            {"epoch": epoch, "train_mse": train_mse, "val_mse": val_mse, "lr": optimizer.lr}
        )
        if val_mse < best_val:
            best_val = val_mse
            best_state = [a.copy() for _, a in model.net.state_tensors()]

    if best_state is not None:
        for (_, a), saved in zip(model.net.state_tensors(), best_state):
            np.copyto(a, saved)
    model.history = history
    model.trained = True
    return history


def _mse_eval(model: Cdae, noisy: np.ndarray, clean: np.ndarray, chunk: int = 256) -> float:
    total = 0.0
    for i in range(0, noisy.shape[0], chunk):
        pred = model.net.forward(noisy[i : i + chunk][:, :, None], train=False)
        total += float(np.sum((pred - clean[i : i + chunk]) ** 2))
    return total / clean.size


def require_trained(model: Cdae):
    if not model.trained:
        raise StateError("autoencoder has not been trained")
