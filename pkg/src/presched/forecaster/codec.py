"""Gaussian-kernel embedding of sparse counts and its mixture-style inverse.

The embedding lifts every per-(sector, frame) feature vector ``x`` into a
smoother latent space,

    z = sum_j exp(-||x - c_j||^2 / (2 s_j^2)) w_j + b,

and the reverse map brings latent vectors back with input-conditioned mixing
weights, kernel locations, widths and output weights (all affine in ``z``).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from presched.numerics import autodiff as ad

MIN_WIDTH = 1e-3

EMBED_KEYS = ("centers", "log_widths", "embed_w", "embed_b")
REVERSE_KEYS = ("pi_w", "pi_b", "mu_w", "mu_b", "sig_w", "sig_b", "out_w", "out_b", "out_bias")


@dataclass
class RbfCodec:
    centers: np.ndarray  # (k, F)
    log_widths: np.ndarray  # (k,)
    embed_w: np.ndarray  # (k, D)
    embed_b: np.ndarray  # (D,)
    pi_w: np.ndarray  # (D, k)
    pi_b: np.ndarray  # (k,)
    mu_w: np.ndarray  # (k, D, D)
    mu_b: np.ndarray  # (k, D)
    sig_w: np.ndarray  # (D, k)
    sig_b: np.ndarray  # (k,)
    out_w: np.ndarray  # (k, D, F)
    out_b: np.ndarray  # (k, F)
    out_bias: np.ndarray  # (F,)

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return np.exp(self.log_widths)

    def params(self) -> dict[str, np.ndarray]:
        return asdict(self)

    def embed(self, x) -> np.ndarray:
        return rbf_embed(x, self.params()).value

    def reverse(self, z) -> np.ndarray:
        return reverse_map(z, self.params()).value


def init_codec(sample, k: int, embed_dim: int, rng: np.random.Generator) -> RbfCodec:
    """Centres spread over the observed value range, widths set to their spacing."""
    sample = np.asarray(sample, dtype=np.float64)
    n_features = sample.shape[-1]
    flat = sample.reshape(-1, n_features)
    hi = np.maximum(np.quantile(flat, 0.99, axis=0), 1.0)
    centers = np.linspace(0.0, 1.0, k)[:, None] * hi[None, :]
    spacing = float(hi.mean()) / max(k - 1, 1)
    log_widths = np.full(k, np.log(max(spacing, 0.25)))
    scale = 1.0 / np.sqrt(k)
    embed_w = rng.normal(0.0, scale, (k, embed_dim))
    embed_b = np.zeros(embed_dim)
    # kernel locations start at each centre's own embedding
    phi = np.exp(-((centers[:, None, :] - centers[None, :, :]) ** 2).sum(-1) / (2 * np.exp(log_widths) ** 2))
    mu_b = phi @ embed_w + embed_b
    return RbfCodec(
        centers=centers,
        log_widths=log_widths,
        embed_w=embed_w,
        embed_b=embed_b,
        pi_w=rng.normal(0.0, 0.1 / np.sqrt(embed_dim), (embed_dim, k)),
        pi_b=np.zeros(k),
        mu_w=np.zeros((k, embed_dim, embed_dim)),
        mu_b=mu_b,
        sig_w=np.zeros((embed_dim, k)),
        sig_b=np.full(k, np.log(np.expm1(1.0))),
        out_w=np.zeros((k, embed_dim, n_features)),
        out_b=centers.copy(),
        out_bias=np.zeros(n_features),
    )


def _check_finite(x: ad.Var) -> None:
    if not np.all(np.isfinite(x.value)):
        raise ValueError("invalid-input: non-finite values")


def rbf_embed(x, p: Mapping) -> ad.Var:
    """``(..., F) -> (..., D)`` Gaussian-kernel embedding."""
    x = ad.as_var(x)
    _check_finite(x)
    centers, log_w = ad.as_var(p["centers"]), ad.as_var(p["log_widths"])
    diff = ad.sub(ad.reshape(x, x.shape[:-1] + (1, x.shape[-1])), centers)  # (..., k, F)
    sq = ad.vsum(ad.square(diff), axis=-1)  # (..., k)
    inv_two_var = ad.mul(ad.exp(ad.mul(log_w, -2.0)), 0.5)  # 1 / (2 s^2)
    phi = ad.exp(ad.mul(ad.mul(sq, inv_two_var), -1.0))
    return ad.add(ad.matmul(phi, p["embed_w"]), p["embed_b"])


def kernel_activations(x, p: Mapping) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    sq = ((x[..., None, :] - np.asarray(p["centers"])) ** 2).sum(-1)
    return np.exp(-sq / (2.0 * np.exp(2.0 * np.asarray(p["log_widths"]))))


def mixing_weights(z, p: Mapping) -> ad.Var:
    return ad.softmax(ad.add(ad.matmul(ad.as_var(z), p["pi_w"]), p["pi_b"]), axis=-1)


def reverse_map(z, p: Mapping) -> ad.Var:
    """``(..., D) -> (..., F)`` input-conditioned Gaussian mixture readout."""
    z = ad.as_var(z)
    pi = mixing_weights(z, p)  # (..., k)
    mu = ad.add(ad.einsum(_ellipsis("xd,kde->xke", z.ndim), z, p["mu_w"]), p["mu_b"])  # (..., k, D)
    sigma = ad.add(ad.softplus(ad.add(ad.matmul(z, p["sig_w"]), p["sig_b"])), MIN_WIDTH)  # (..., k)
    zk = ad.reshape(z, z.shape[:-1] + (1, z.shape[-1]))
    sq = ad.vsum(ad.square(ad.sub(zk, mu)), axis=-1)
    kern = ad.exp(ad.mul(ad.div(sq, ad.mul(ad.square(sigma), 2.0)), -1.0))
    wout = ad.add(ad.einsum(_ellipsis("xd,kdf->xkf", z.ndim), z, p["out_w"]), p["out_b"])  # (..., k, F)
    gate = ad.mul(pi, kern)
    mixed = ad.vsum(ad.mul(ad.reshape(gate, gate.shape + (1,)), wout), axis=-2)
    return ad.add(mixed, p["out_bias"])


_LETTERS = "abcghijlmnopqrstuvwy"


def _ellipsis(spec: str, ndim: int) -> str:
    """Expand the leading ``x`` placeholder into ``ndim - 1`` explicit batch letters."""
    batch = _LETTERS[: ndim - 1]
    return spec.replace("x", batch)
