"""Multi-task rhythm + quality classifier with a transferable encoder.

The trunk reuses the autoencoder's three conv+maxpool blocks, then adds a
batch-normalized stack of three strided convolutions with LeakyReLU and
dropout (six shared hidden layers in total). Two heads branch off the
[5, C] shared feature map: a three-conv rhythm head ending in dense
175 -> 2 softmax, and a single-conv quality head ending in dense
175 -> 3 softmax.

All kernel sizes and strides are recovered from the published layer
table's shapes and parameter counts. One row of that table ("Conv1D
(None, 1, 25)" with 525 parameters) is arithmetically impossible for a
35-channel input — no kernel size k gives (k*35+1)*25 = 525 — so the
shape-consistent layer (kernel 2, stride 2, valid padding, 1775
parameters) is used instead. This is the single documented deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cdae as cdae_mod
from . import nn
from .errors import ConfigError, ShapeError, StateError
from .labels import QUALITY_ORDER, RHYTHM_ORDER

INPUT_LEN = 800

PROFILES = {
    # (encoder channels, shared channels, rhythm-head channels, qa conv, dense units)
    "paper": {
        "encoder": (64, 45, 50),
        "shared": (64, 35, 64),
        "rhythm_convs": (35, 25, 35),
        "qa_conv": 25,
        "dense": 175,
    },
    "mini": {
        "encoder": (16, 11, 12),
        "shared": (16, 8, 16),
        "rhythm_convs": (8, 6, 8),
        "qa_conv": 6,
        "dense": 43,
    },
}

DROPOUT_RATE = 0.2
LEAKY_SLOPE = 0.01


@dataclass
class Prediction:
    rhythm_probs: np.ndarray  # [P(sinus), P(AF)] per RHYTHM_ORDER
    qa_probs: np.ndarray  # [P(excellent), P(acceptable), P(poor)] per QUALITY_ORDER

    def validate(self):
        for probs, n in ((self.rhythm_probs, len(RHYTHM_ORDER)), (self.qa_probs, len(QUALITY_ORDER))):
            if probs.shape != (n,):
                raise ShapeError(f"probability vector has shape {probs.shape}, expected ({n},)")
            if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > 1e-6:
                raise ShapeError("probability vector is not normalized")


def _trunk_layers(profile_cfg):
    s1, s2, s3 = profile_cfg["shared"]
    layers = cdae_mod._encoder_layers(profile_cfg["encoder"])
    layers += [nn.BatchNorm()]
    for filters, stride in ((s1, 3), (s2, 3), (s3, 1)):
        layers += [
            nn.Conv1D(filters, kernel=4, stride=stride, padding="same", activation=None),
            nn.LeakyReLU(LEAKY_SLOPE),
            nn.BatchNorm(),
            nn.Dropout(DROPOUT_RATE),
        ]
    return layers


def _rhythm_layers(profile_cfg):
    r1, r2, r3 = profile_cfg["rhythm_convs"]
    return [
        nn.Conv1D(r1, kernel=5, stride=3, padding="same", activation="relu"),
        nn.BatchNorm(),
        nn.Dropout(DROPOUT_RATE),
        nn.Conv1D(r2, kernel=2, stride=2, padding="valid", activation="relu"),
        nn.BatchNorm(),
        nn.Dropout(DROPOUT_RATE),
        nn.Conv1D(r3, kernel=3, stride=1, padding="same", activation="relu"),
        nn.BatchNorm(),
        nn.Dropout(DROPOUT_RATE),
        nn.Flatten(),
        nn.Dense(profile_cfg["dense"], activation="relu"),
        nn.Dense(len(RHYTHM_ORDER), activation="softmax"),
    ]


def _qa_layers(profile_cfg):
    return [
        nn.Conv1D(profile_cfg["qa_conv"], kernel=4, stride=2, padding="same", activation="relu"),
        nn.BatchNorm(),
        nn.Dropout(DROPOUT_RATE),
        nn.Flatten(),
        nn.Dense(profile_cfg["dense"], activation="relu"),
        nn.Dense(len(QUALITY_ORDER), activation="softmax"),
    ]


class MultiTaskModel:
    """Shared trunk with rhythm and quality heads."""

    kind = "deepbeat"

    def __init__(self, trunk, rhythm, qa, profile: str, seed: int):
        self.trunk = trunk
        self.rhythm = rhythm
        self.qa = qa
        self.profile = profile
        self.seed = seed
        self.history: list = []
        self.trained = False

    @property
    def dtype(self):
        return self.trunk.dtype

    @property
    def encoder_convs(self):
        return [self.trunk.layers[i] for i in (0, 2, 4)]

    # forward/backward -----------------------------------------------------
    def forward(self, x, train=False, rng=None):
        h = self.trunk.forward(x, train=train, rng=rng)
        rp = self.rhythm.forward(h, train=train, rng=rng)
        qp = self.qa.forward(h, train=train, rng=rng)
        return rp, qp

    def backward(self, d_rhythm, d_qa):
        dh = self.rhythm.backward(d_rhythm) + self.qa.backward(d_qa)
        self.trunk.backward(dh)

    def trainables(self):
        return self.trunk.trainables() + self.rhythm.trainables() + self.qa.trainables()

    def state_tensors(self):
        return (
            self.trunk.state_tensors()
            + self.rhythm.state_tensors()
            + self.qa.state_tensors()
        )

    def zero_grads(self):
        self.trunk.zero_grads()
        self.rhythm.zero_grads()
        self.qa.zero_grads()

    def arch(self):
        return {
            "trunk": self.trunk.specs(),
            "rhythm": self.rhythm.specs(),
            "qa": self.qa.specs(),
        }

    def table(self):
        rows = self.trunk.table(with_input=True)
        rows += self.rhythm.table(with_input=False)
        rows += self.qa.table(with_input=False)
        return rows

    # inference --------------------------------------------------------
    def _as_batch(self, windows):
        x = np.asarray(windows, dtype=self.dtype)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != INPUT_LEN:
            raise ShapeError(f"expected {INPUT_LEN}-sample windows, got {x.shape}")
        return x[:, :, None]

    def predict_batch(self, windows, chunk: int = 256):
        x = self._as_batch(windows)
        rps, qps = [], []
        for i in range(0, x.shape[0], chunk):
            rp, qp = self.forward(x[i : i + chunk], train=False)
            rps.append(rp)
            qps.append(qp)
        return np.concatenate(rps, axis=0), np.concatenate(qps, axis=0)


def build_deepbeat(seed: int = 0, encoder_source=None, profile: str = "paper", init: str = "he") -> MultiTaskModel:
    """Assemble the multi-task model, optionally seeding the encoder convs
    from a pretrained autoencoder."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    cfg = PROFILES[profile]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 303])) if init == "he" else None
    trunk = nn.Sequential(_trunk_layers(cfg), (INPUT_LEN, 1), rng, name="trunk")
    rhythm = nn.Sequential(_rhythm_layers(cfg), trunk.output_shape, rng, name="rhythm")
    qa = nn.Sequential(_qa_layers(cfg), trunk.output_shape, rng, name="qa")
    model = MultiTaskModel(trunk, rhythm, qa, profile, seed)
    if encoder_source is not None:
        transfer_encoder(encoder_source, model)
    return model


def describe_deepbeat(profile: str = "paper"):
    """Layer table rows without allocating trained weights."""
    return build_deepbeat(seed=0, profile=profile, init="zeros").table()


def transfer_encoder(source: cdae_mod.Cdae, model: MultiTaskModel) -> MultiTaskModel:
    """Copy the autoencoder's encoder conv weights into the trunk.

    The copied layers stay trainable; fine-tuning continues to update them.
    """
    src_convs = [source.net.layers[i] for i in (0, 2, 4)]
    for src, dst in zip(src_convs, model.encoder_convs):
        if src.W.shape != dst.W.shape:
            raise ShapeError(
                f"encoder shapes incompatible: {src.W.shape} vs {dst.W.shape}"
            )
        np.copyto(dst.W, src.W)
        np.copyto(dst.b, src.b)
    return model


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    lambda_qa: float = 1.0
    seed: int = 0

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.lambda_qa < 0:
            raise ConfigError("lambda_qa must be >= 0")


def train_deepbeat(model: MultiTaskModel, data: dict, config: TrainConfig) -> list:
    """Minimize CE_rhythm + lambda_qa * CE_quality on labeled windows.

    `data` holds float arrays x_train [n,800], r_train [n,2], q_train
    [n,3] plus the matching x_val/r_val/q_val. The weights with the lowest
    total validation loss are retained.
    """
    config.validate()
    xt = np.asarray(data["x_train"], dtype=model.dtype)
    rt = np.asarray(data["r_train"], dtype=model.dtype)
    qt = np.asarray(data["q_train"], dtype=model.dtype)
    xv = np.asarray(data["x_val"], dtype=model.dtype)
    rv = np.asarray(data["r_val"], dtype=model.dtype)
    qv = np.asarray(data["q_val"], dtype=model.dtype)
    if xt.shape[0] == 0:
        raise ConfigError("empty training set")
    for name, arr, width in (("r_train", rt, 2), ("q_train", qt, 3)):
        if arr.shape != (xt.shape[0], width):
            raise ShapeError(f"{name} must be one-hot [n, {width}]")

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 404]))
    optimizer = nn.Adam(model.trainables(), lr=config.lr)
    history = []
    best_val = np.inf
    best_state = None
    n = xt.shape[0]

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        tr_r = tr_q = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x = xt[idx][:, :, None]
            model.zero_grads()
            rp, qp = model.forward(x, train=True, rng=rng)
            loss_r, d_r = nn.softmax_ce_loss(rp, rt[idx])
            loss_q, d_q = nn.softmax_ce_loss(qp, qt[idx])
            model.backward(d_r, config.lambda_qa * d_q)
            nn.check_finite_grads(model.trainables())
            optimizer.step()
            tr_r += loss_r * idx.size
            tr_q += loss_q * idx.size
        val_r, val_q = _ce_eval(model, xv, rv, qv)
        val_total = val_r + config.lambda_qa * val_q
        history.append(
            {
                "epoch": epoch,
                "train_rhythm_ce": tr_r / n,
                "train_qa_ce": tr_q / n,
                "train_total": (tr_r + config.lambda_qa * tr_q) / n,
                "val_rhythm_ce": val_r,
                "val_qa_ce": val_q,
                "val_total": val_total,
                "lr": optimizer.lr,
            }
        )
        if val_total < best_val:
            best_val = val_total
            best_state = [a.copy() for _, a in model.state_tensors()]

    if best_state is not None:
        for (_, a), saved in zip(model.state_tensors(), best_state):
            np.copyto(a, saved)
    model.history = history
    model.trained = True
    return history


def _ce_eval(model, x, r, q, chunk: int = 256):
    if x.shape[0] == 0:
        return 0.0, 0.0
    total_r = total_q = 0.0
    for i in range(0, x.shape[0], chunk):
        rp, qp = model.forward(x[i : i + chunk][:, :, None], train=False)
        lr_, _ = nn.softmax_ce_loss(rp, r[i : i + chunk])
        lq_, _ = nn.softmax_ce_loss(qp, q[i : i + chunk])
        total_r += lr_ * rp.shape[0]
        total_q += lq_ * qp.shape[0]
    return total_r / x.shape[0], total_q / x.shape[0]


def infer(model: MultiTaskModel, window: np.ndarray) -> Prediction:
    """Deterministic single-window prediction (dropout off, running stats)."""
    rp, qp = model.predict_batch(window)
    pred = Prediction(rhythm_probs=rp[0].astype(np.float64), qa_probs=qp[0].astype(np.float64))
    pred.validate()
    return pred


def require_trained(model: MultiTaskModel):
    if not model.trained:
        raise StateError("model has not been trained")
