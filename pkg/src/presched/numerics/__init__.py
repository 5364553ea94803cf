from presched.numerics.gradcheck import GradientCheckError, finite_diff_grad, relative_error
from presched.numerics.linalg import PCABasis, fit_pca, pca_reduce
from presched.numerics.optim import AdamState, adam_step
from presched.numerics.spectral import (
    HaarDecomposition,
    SpectralProfile,
    dominant_profile,
    dwt_decompose,
    dwt_reconstruct,
    fft_topk,
    haar_channel_operators,
)

__all__ = [
    "AdamState",
    "GradientCheckError",
    "HaarDecomposition",
    "PCABasis",
    "SpectralProfile",
    "adam_step",
    "dominant_profile",
    "dwt_decompose",
    "dwt_reconstruct",
    "fft_topk",
    "finite_diff_grad",
    "fit_pca",
    "haar_channel_operators",
    "pca_reduce",
    "relative_error",
]
