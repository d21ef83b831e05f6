"""Shared test helpers: finite-difference gradient checking."""

import numpy as np


def numeric_grad(f, x, eps=1e-6):
    """Central-difference gradient of scalar f() w.r.t. array x (in place)."""
    grad = np.zeros_like(x)
    flat_x = x.ravel()
    flat_g = grad.ravel()
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + eps
        fp = f()
        flat_x[i] = orig - eps
        fm = f()
        flat_x[i] = orig
        flat_g[i] = (fp - fm) / (2 * eps)
    return grad


def rel_error(analytic, numeric):
    scale = max(float(np.max(np.abs(numeric))), 1e-8)
    return float(np.max(np.abs(analytic - numeric))) / scale


def layer_grad_errors(layer, x, rng_factory=None, check_params=True):
    """Backprop-vs-finite-difference errors for one layer.

    Loss is sum(forward(x) * R) with R fixed. Returns a dict of relative
    errors for dx and each trainable parameter. `rng_factory` rebuilds the
    identical rng per forward call (needed for Dropout).
    """

    def fwd():
        rng = rng_factory() if rng_factory else None
        return layer.forward(x, train=True, rng=rng)

    ref = fwd()
    upstream = np.random.default_rng(12345).standard_normal(ref.shape)

    def loss():
        return float(np.sum(fwd() * upstream))

    loss()  # populate caches consistently with the analytic pass
    layer.zero_grads()
    dx = layer.backward(upstream.astype(x.dtype))
    analytic_params = [(name, g.copy()) for name, _, g in layer.trainables()]

    errors = {"dx": rel_error(dx, numeric_grad(loss, x))}
    if check_params:
        for (name, analytic), (_, p, _) in zip(analytic_params, layer.trainables()):
            errors[name] = rel_error(analytic, numeric_grad(loss, p))
    return errors
