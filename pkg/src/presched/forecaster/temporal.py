"""Temporal feature extractors: multi-scale fusion and gated dilated convolution."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

import numpy as np

from presched.numerics import autodiff as ad
from presched.numerics.spectral import dominant_profile, haar_channel_operators


def as_batched(x) -> tuple[ad.Var, bool]:
    """Promote ``(nodes, time, channels)`` to ``(1, nodes, time, channels)``."""
    x = ad.as_var(x)
    if x.ndim == 3:
        return ad.reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise ValueError(f"expected (batch, nodes, time, channels), got shape {x.shape}")
    return x, False


def unbatch(x: ad.Var, squeezed: bool) -> ad.Var:
    return ad.reshape(x, x.shape[1:]) if squeezed else x


@lru_cache(maxsize=64)
def _haar_ops(length: int, levels: int) -> np.ndarray:
    return haar_channel_operators(length, levels)


@dataclass
class FoldInfo:
    """How each sector's window was folded before the 2-D convolution."""

    periods: list[int]
    fallback: list[bool]
    profiles: list = field(default_factory=list, repr=False)


def detect_periods(raw: np.ndarray, k_top: int) -> FoldInfo:
    """Dominant FFT period per sector of a ``(batch, nodes, time, features)`` window."""
    b, n, t, f = raw.shape
    per_node = np.transpose(raw, (1, 0, 3, 2)).reshape(n, b * f, t)
    periods, fallback, profiles = [], [], []
    for series in per_node:
        prof = dominant_profile(series, k_top)
        profiles.append(prof)
        if prof.empty:
            periods.append(t)
            fallback.append(True)
        else:
            periods.append(prof.periods()[0])
            fallback.append(False)
    return FoldInfo(periods, fallback, profiles)


def conv2d_same(x, w, b) -> ad.Var:
    """3x3-style 'same' convolution; ``x`` is (N, H, W, Cin), ``w`` (kh, kw, Cin, Cout)."""
    x = ad.as_var(x)
    w = ad.as_var(w)
    kh, kw, cin, cout = w.shape
    n, h, wd, _ = x.shape
    ph, pw = kh // 2, kw // 2
    xp = ad.pad(x, [(0, 0), (ph, kh - 1 - ph), (pw, kw - 1 - pw), (0, 0)])
    patches = ad.stack(
        [xp[:, dy : dy + h, dx : dx + wd, :] for dy in range(kh) for dx in range(kw)], axis=3
    )  # (N, H, W, kh*kw, Cin)
    out = ad.einsum("nhwkc,kco->nhwo", patches, ad.reshape(w, (kh * kw, cin, cout)))
    return ad.add(out, b)


def multiscale_channels(z: ad.Var, levels: int) -> ad.Var:
    """Stack the input with its Haar approximation/detail channels on the same time grid."""
    bsz, n, t, c = z.shape
    ops = _haar_ops(t, levels)
    dwt = ad.einsum("kij,bvjc->bvikc", ops, z)
    dwt = ad.reshape(dwt, (bsz, n, t, 2 * levels * c))
    return ad.concat([z, dwt], axis=-1)


def mstsf_forward(
    z,
    p: Mapping,
    raw=None,
    k_top: int = 3,
    levels: int = 2,
    residual: bool = True,
) -> tuple[ad.Var, FoldInfo]:
    """Fold each sector's window by its dominant period, mix scales with a 2-D conv.

    ``z`` holds the features being transformed and ``raw`` (same leading
    shape) the series used for period detection; it defaults to ``z``.
    Output keeps the temporal length of the input. Sectors with no periodic
    energy fall back to a single-row fold of the whole window.
    """
    z, squeezed = as_batched(z)
    raw_arr = z.value if raw is None else np.asarray(ad.as_var(raw).value)
    if raw_arr.ndim == 3:
        raw_arr = raw_arr[None]
    bsz, n, t, c = z.shape
    if t < 4:
        raise ValueError("mstsf needs at least 4 frames")
    info = detect_periods(raw_arr, k_top)
    stacked = multiscale_channels(z, levels)
    cin = stacked.shape[-1]

    groups: dict[int, list[int]] = {}
    for node, period in enumerate(info.periods):
        groups.setdefault(period, []).append(node)
    pieces, order = [], []
    for period, nodes in sorted(groups.items()):
        cycles = -(-t // period)
        sub = stacked[:, nodes] if len(nodes) < n else stacked
        g = len(nodes)
        sub = ad.pad(sub, [(0, 0), (0, 0), (0, cycles * period - t), (0, 0)])
        grid = ad.reshape(sub, (bsz * g, cycles, period, cin))
        conv = conv2d_same(grid, p["conv_w"], p["conv_b"])
        flat = ad.reshape(conv, (bsz, g, cycles * period, conv.shape[-1]))
        pieces.append(flat[:, :, :t, :])
        order.extend(nodes)
    merged = pieces[0] if len(pieces) == 1 else ad.concat(pieces, axis=1)
    if order != list(range(n)):
        merged = merged[:, np.argsort(order)]
    out = ad.add(merged, z) if residual else merged
    return unbatch(out, squeezed), info


def dilated_conv(x: ad.Var, w, b, dilation: int) -> ad.Var:
    """Valid causal conv along time; ``w`` is (taps, Cin, Cout)."""
    w = ad.as_var(w)
    taps = w.shape[0]
    t_out = x.shape[2] - dilation * (taps - 1)
    acc = None
    for k in range(taps):
        term = ad.einsum("bntc,co->bnto", x[:, :, k * dilation : k * dilation + t_out, :], w[k])
        acc = term if acc is None else ad.add(acc, term)
    return ad.add(acc, b)


def gtcn_forward(x, p: Mapping, dilation: int = 1) -> ad.Var:
    """Gated dilated convolution: ``tanh(TCN_1(x)) * sigmoid(TCN_2(x))``.

    The output has ``L - dilation * (taps - 1)`` frames.
    """
    x, squeezed = as_batched(x)
    taps = np.shape(ad.as_var(p["filt_w"]).value)[0]
    length = x.shape[2]
    if length <= dilation * (taps - 1):
        raise ValueError(
            f"invalid-input: {length} frames too short for kernel {taps} with dilation {dilation}"
        )
    filt = ad.tanh(dilated_conv(x, p["filt_w"], p["filt_b"], dilation))
    gate = ad.sigmoid(dilated_conv(x, p["gate_w"], p["gate_b"], dilation))
    return unbatch(ad.mul(filt, gate), squeezed)
