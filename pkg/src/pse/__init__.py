"""Proximally sensitive error (PSE) and its applications.

PSE measures image differences through Gaussian-smoothed residuals, so
spatially clustered errors weigh more than scattered ones. On top of the
metric this package provides PCA-reconstruction anomaly scoring and a
small fully connected autoencoder that can pre-train with PSE as its
reconstruction loss.
"""

from pse.kernel import GaussianKernel, gaussian_kernel
from pse.metrics import max_score, mse, pse, pse_gradient, pse_heatmap

__all__ = [
    "GaussianKernel",
    "gaussian_kernel",
    "mse",
    "pse",
    "pse_heatmap",
    "pse_gradient",
    "max_score",
]
