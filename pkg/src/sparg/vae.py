"""Variational autoencoder over masked edge vectors (E -> 16 -> 16 -> d_z and back)."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .nn import ParamSet, dense, glorot

HIDDEN = (16, 16)
DEFAULT_LATENT = 8
LOGVAR_BIAS_INIT = -4.0


class VaeParams(ParamSet):
    """Encoder ``enc1, enc2``, heads ``mu, logvar``, decoder ``dec1, dec2, out``.

    Weights are ``(fan_in, fan_out)`` and act on row vectors.
    """

    def __init__(self, n_edges: int, latent_dim: int = DEFAULT_LATENT, seed: int = 0,
                 arrays: dict[str, np.ndarray] | None = None):
        self.n_edges = n_edges
        self.latent_dim = latent_dim
        h1, h2 = HIDDEN
        layout = {
            "enc1": (n_edges, h1), "enc2": (h1, h2),
            "mu": (h2, latent_dim), "logvar": (h2, latent_dim),
            "dec1": (latent_dim, h2), "dec2": (h2, h1), "out": (h1, n_edges),
        }
        if arrays is None:
            rng = np.random.default_rng(seed)
            arrays = {}
            for name, (fi, fo) in layout.items():
                arrays[f"{name}.w"] = glorot(rng, fi, fo)
                arrays[f"{name}.b"] = np.zeros(fo)
            # a unit-variance posterior at init swamps the code with noise and the
            # decoder learns to ignore z long before logvar can shrink
            arrays["logvar.b"] = np.full(latent_dim, LOGVAR_BIAS_INIT)
        for name, (fi, fo) in layout.items():
            if arrays[f"{name}.w"].shape != (fi, fo) or arrays[f"{name}.b"].shape != (fo,):
                raise ValueError(f"vae: parameter {name} has the wrong shape")
        super().__init__(arrays, "vae")

    def layer(self, name):
        return self[f"{name}.w"], self[f"{name}.b"]


def _as_tensor(x) -> ad.Tensor:
    return x if isinstance(x, ad.Tensor) else ad.Tensor(x)


def encode(params: VaeParams, xprime) -> tuple[ad.Tensor, ad.Tensor]:
    """Posterior mean and log-variance; ReLU hidden layers, linear heads."""
    x = _as_tensor(xprime)
    if x.shape[-1] != params.n_edges:
        raise ValueError(f"encode: expected {params.n_edges} edges, got {x.shape[-1]}")
    h = ad.relu(dense(x, *params.layer("enc1")))
    h = ad.relu(dense(h, *params.layer("enc2")))
    return dense(h, *params.layer("mu")), dense(h, *params.layer("logvar"))


def reparameterize(mu: ad.Tensor, logvar: ad.Tensor, epsilon) -> ad.Tensor:
    """``z = mu + exp(logvar / 2) * epsilon``."""
    eps = _as_tensor(epsilon)
    if not (mu.shape == logvar.shape == eps.shape):
        raise ValueError(
            f"reparameterize: shapes differ: mu {mu.shape}, logvar {logvar.shape}, epsilon {eps.shape}"
        )
    std = ad.exp(ad.scale(logvar, 0.5))
    return ad.add(mu, ad.hadamard(std, eps))


def decode(params: VaeParams, z) -> ad.Tensor:
    z = _as_tensor(z)
    if z.shape[-1] != params.latent_dim:
        raise ValueError(f"decode: expected latent size {params.latent_dim}, got {z.shape[-1]}")
    h = ad.relu(dense(z, *params.layer("dec1")))
    h = ad.relu(dense(h, *params.layer("dec2")))
    return dense(h, *params.layer("out"))


def _batch_mean(per_sample: ad.Tensor) -> ad.Tensor:
    return ad.mean(per_sample) if per_sample.value.ndim else per_sample


def mse_loss(xprime, xhat, weights=None) -> ad.Tensor:
    """Batch mean of the squared Euclidean reconstruction error.

    ``weights`` (per edge) turns it into a weighted residual; passing the mask
    values restricts the loss to kept edges.
    """
    xp, xh = _as_tensor(xprime), _as_tensor(xhat)
    if xp.shape != xh.shape:
        raise ValueError(f"mse_loss: shapes differ: {xp.shape} vs {xh.shape}")
    r = ad.sub(xp, xh)
    if weights is not None:
        r = ad.hadamard(r, _as_tensor(weights))
    return _batch_mean(ad.tsum(ad.square(r), axis=-1))


def kl_loss(mu, logvar) -> ad.Tensor:
    """Closed-form KL(N(mu, exp(logvar)) || N(0, I)), averaged over the batch."""
    mu, logvar = _as_tensor(mu), _as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise ValueError(f"kl_loss: shapes differ: {mu.shape} vs {logvar.shape}")
    inner = ad.sub(ad.sub(ad.add(logvar, ad.Tensor(1.0)), ad.square(mu)), ad.exp(logvar))
    return _batch_mean(ad.scale(ad.tsum(inner, axis=-1), -0.5))
