"""Model interpretation: per-sample saliency maps and embedding export.

Saliency is gradient-weighted activation mapping: the class logit's
gradient at a late convolutional feature map is averaged per channel,
channels are recombined with those weights, rectified, and the result is
linearly upsampled to the 800-sample input grid and max-normalized. The
network has no global average pooling stage, so classic activation
mapping is inapplicable; the gradient-weighted form reduces to it when
such a stage exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError
from .labels import Rhythm
from .multitask import INPUT_LEN, MultiTaskModel, require_trained


@dataclass
class SaliencyMap:
    scores: np.ndarray  # 800 values in [0, 1], max 1 unless all-zero
    rhythm: Rhythm
    window_id: str = ""


def _forward_seq(layers, x):
    outs = []
    for layer in layers:
        x = layer.forward(x, train=False)
        outs.append(x)
    return outs


def _last_conv_index(layers):
    idx = [i for i, layer in enumerate(layers) if isinstance(layer, nn.Conv1D)]
    if not idx:
        raise ConfigError("no convolutional layer found")
    return idx[-1]


def saliency(
    model: MultiTaskModel,
    window: np.ndarray,
    target: Rhythm,
    source: str = "rhythm",
    window_id: str = "",
) -> SaliencyMap:
    """Saliency of `target`'s logit over one window.

    `source` selects the feature map: "rhythm" (default) uses the last
    conv of the rhythm head, "shared" the last conv of the trunk.
    """
    require_trained(model)
    if source not in ("rhythm", "shared"):
        raise ConfigError(f"source must be 'rhythm' or 'shared', got {source!r}")
    x = model._as_batch(window)
    trunk_outs = _forward_seq(model.trunk.layers, x)
    head_layers = model.rhythm.layers
    head_outs = _forward_seq(head_layers, trunk_outs[-1])

    dy = np.zeros_like(head_outs[-1])
    dy[0, target.index] = 1.0
    dy = head_layers[-1].backward(dy, pre_activation=True)  # logit, not softmax

    if source == "rhythm":
        conv_idx = _last_conv_index(head_layers)
        for layer in reversed(head_layers[conv_idx + 1 : -1]):
            dy = layer.backward(dy)
        activation = head_outs[conv_idx][0]
    else:
        for layer in reversed(head_layers[:-1]):
            dy = layer.backward(dy)
        conv_idx = _last_conv_index(model.trunk.layers)
        for layer in reversed(model.trunk.layers[conv_idx + 1 :]):
            dy = layer.backward(dy)
        activation = trunk_outs[conv_idx][0]

    grad = dy[0]
    weights = grad.mean(axis=0)  # one weight per channel
    cam = np.maximum(activation.astype(np.float64) @ weights.astype(np.float64), 0.0)
    scores = _upsample(cam, INPUT_LEN)
    peak = scores.max()
    if peak > 0:
        scores = scores / peak
    model.zero_grads()
    return SaliencyMap(scores=scores, rhythm=target, window_id=window_id)


def _upsample(values: np.ndarray, length: int) -> np.ndarray:
    if values.size == 1:
        return np.full(length, values[0], dtype=np.float64)
    positions = np.linspace(0.0, values.size - 1.0, length)
    return np.interp(positions, np.arange(values.size), values)


def export_embeddings(model: MultiTaskModel, windows: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Activations of the rhythm head's penultimate dense layer, row per window."""
    require_trained(model)
    x = model._as_batch(windows)
    head_layers = model.rhythm.layers
    dense_idx = next(i for i, layer in enumerate(head_layers) if isinstance(layer, nn.Dense))
    outs = []
    for i in range(0, x.shape[0], chunk):
        h = model.trunk.forward(x[i : i + chunk], train=False)
        for layer in head_layers[: dense_idx + 1]:
            h = layer.forward(h, train=False)
        outs.append(h)
    return np.concatenate(outs, axis=0)
