import numpy as np
import pytest

from mhenet import models


ALL_SPECS = {
    "lstm": models.ModelSpec("lstm", 3, 4, 2),
    "gru": models.ModelSpec("gru", 3, 4, 2),
    "esn": models.ModelSpec("esn", 3, 5, 2, spectral_radius=0.9, leak_rate=0.8),
    "nnarx": models.ModelSpec("nnarx", 2, 0, 1, order=2, mlp_width=3),
    "linear": models.ModelSpec("linear", 2, 0, 2),
}


def random_params(spec, rng, scale=0.3):
    """Random trainable weights around the seeded init (reservoir kept)."""
    p = models.init_params(spec, int(rng.integers(1 << 31)), "uniform")
    vals = p.values.copy()
    mask = models.trainable_mask(spec)
    vals[mask] += rng.normal(scale=scale, size=int(mask.sum()))
    return p.replace_values(vals)


def fd_gradient(spec, params, x0, inputs, targets, h=1e-6):
    """Central finite differences of the window loss, trainable coords only."""
    vals = params.values
    g = np.zeros_like(vals)
    mask = models.trainable_mask(spec)
    for j in np.flatnonzero(mask):
        vp, vm = vals.copy(), vals.copy()
        vp[j] += h
        vm[j] -= h
        lp, _ = models.window_loss_and_gradient(spec, params.replace_values(vp), x0, inputs, targets)
        lm, _ = models.window_loss_and_gradient(spec, params.replace_values(vm), x0, inputs, targets)
        g[j] = (lp - lm) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
