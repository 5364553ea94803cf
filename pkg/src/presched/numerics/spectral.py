"""FFT period detection and orthonormal Haar wavelet transforms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class SpectralProfile:
    """Dominant nonzero-frequency bins, strongest first.

    ``components`` holds ``(frequency_index, amplitude)`` pairs where the index
    counts cycles per analysis window.
    """

    length: int
    components: tuple[tuple[int, float], ...] = ()

    @property
    def empty(self) -> bool:
        return not self.components

    def periods(self) -> list[int]:
        return [max(1, self.length // f) for f, _ in self.components]


def amplitude_spectrum(series: np.ndarray) -> np.ndarray:
    """|rfft| along the last axis."""
    return np.abs(np.fft.rfft(np.asarray(series, dtype=np.float64), axis=-1))


def _topk_from_amplitudes(amp: np.ndarray, length: int, k_top: int, rtol: float) -> SpectralProfile:
    amp = np.asarray(amp, dtype=np.float64).copy()
    amp[0] = 0.0
    floor = rtol * max(1.0, float(amp.max(initial=0.0)))
    # stable sort keeps lower frequency first on equal amplitude
    order = np.argsort(-amp, kind="stable")
    comps = [(int(f), float(amp[f])) for f in order[:k_top] if f > 0 and amp[f] > floor]
    return SpectralProfile(length, tuple(comps))


def fft_topk(series, k_top: int, rtol: float = 1e-9) -> SpectralProfile:
    """Top ``k_top`` nonzero-frequency bins of ``series`` by DFT magnitude.

    The DC bin is never reported and bins with no energy (relative to
    ``rtol``) are dropped, so a constant series yields an empty profile.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("fft_topk needs a 1-D series with at least 2 samples")
    if k_top < 1:
        raise ValueError("k_top must be >= 1")
    return _topk_from_amplitudes(amplitude_spectrum(x), x.size, k_top, rtol)


def dominant_profile(batch: np.ndarray, k_top: int, rtol: float = 1e-9) -> SpectralProfile:
    """Like :func:`fft_topk` but averaging amplitudes over all leading axes."""
    x = np.asarray(batch, dtype=np.float64)
    amp = amplitude_spectrum(x.reshape(-1, x.shape[-1])).mean(axis=0)
    return _topk_from_amplitudes(amp, x.shape[-1], k_top, rtol)


@dataclass
class HaarDecomposition:
    """Per-level (approximation, detail) pairs, finest level first."""

    levels: list[tuple[np.ndarray, np.ndarray]]
    original_length: int
    padded: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def approximation(self) -> np.ndarray:
        return self.levels[-1][0]


def _padded_length(n: int, levels: int) -> int:
    block = 2**levels
    return -(-n // block) * block


def dwt_decompose(series, levels: int = 2) -> HaarDecomposition:
    """Multi-level orthonormal Haar DWT.

    Series whose length is not a multiple of ``2**levels`` are padded by
    repeating the last sample; the number of padded samples is recorded.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("dwt_decompose expects a 1-D series")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    n = x.size
    target = _padded_length(n, levels)
    if 2**levels > n:
        raise ValueError(f"{levels} levels do not fit a series of length {n}")
    padded = target - n
    if padded:
        x = np.concatenate([x, np.full(padded, x[-1])])
    out = []
    approx = x
    for _ in range(levels):
        a = (approx[0::2] + approx[1::2]) / SQRT2
        d = (approx[0::2] - approx[1::2]) / SQRT2
        out.append((a, d))
        approx = a
    return HaarDecomposition(out, n, padded)


def dwt_reconstruct(dec: HaarDecomposition) -> np.ndarray:
    """Inverse of :func:`dwt_decompose`, trimmed back to the original length."""
    approx = dec.levels[-1][0]
    for a, d in reversed(dec.levels):
        if approx.shape != d.shape:
            raise ValueError("inconsistent coefficient lengths")
        x = np.empty(2 * a.size)
        x[0::2] = (approx + d) / SQRT2
        x[1::2] = (approx - d) / SQRT2
        approx = x
    return approx[: dec.original_length]


def haar_channel_operators(length: int, levels: int) -> np.ndarray:
    """Linear maps taking a length-``length`` series to DWT channels on the same grid.

    Returns an array of shape ``(2 * levels, length, length)``; channel
    ``2*l`` is the level-``l+1`` approximation and ``2*l + 1`` its detail,
    each resampled back to ``length`` samples by nearest neighbour (every
    coefficient repeated ``2**(l+1)`` times). Padding by the last sample is
    folded into the operator.
    """
    eye = np.eye(length)
    ops = np.zeros((2 * levels, length, length))
    for j in range(length):
        dec = dwt_decompose(eye[j], levels)
        for lvl, (a, d) in enumerate(dec.levels):
            rep = 2 ** (lvl + 1)
            ops[2 * lvl, :, j] = np.repeat(a, rep)[:length]
            ops[2 * lvl + 1, :, j] = np.repeat(d, rep)[:length]
    return ops
