"""Image error metrics: MSE and the proximally sensitive error (PSE).

PSE is the mean of squared Gaussian-smoothed residuals. Smoothing makes
spatially clustered differences count more than scattered ones; with
sigma=0 the kernel is a delta and PSE reduces to MSE exactly.
"""

from __future__ import annotations

import numpy as np

from pse.images import residual
from pse.kernel import gaussian_kernel, convolve_separable


def mse(y_hat: np.ndarray, y: np.ndarray) -> float:
    """Mean of squared pixel residuals between two same-shape images."""
    r = residual(y_hat, y)
    return float(np.mean(np.square(r)))


def pse_heatmap(y_hat: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    """Per-pixel squared smoothed residual.

    The mean of the heatmap is the scalar PSE; its max is the anomaly
    score used by the detection pipeline.
    """
    r = residual(y_hat, y)
    smoothed = convolve_separable(r, gaussian_kernel(sigma))
    return np.square(smoothed)


def pse(y_hat: np.ndarray, y: np.ndarray, sigma: float) -> float:
    """Proximally sensitive error: mean of the squared smoothed residuals."""
    return float(np.mean(pse_heatmap(y_hat, y, sigma)))


def pse_gradient(y_hat: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    """Gradient of pse(y_hat, y, sigma) with respect to each y_hat pixel.

    Smoothing with a symmetric kernel under zero padding is self-adjoint,
    so the gradient is (2/MN) * k * (R * k): the smoothed residual
    smoothed once more. With sigma=0 this is the MSE gradient (2/MN) * R.
    """
    r = residual(y_hat, y)
    k = gaussian_kernel(sigma)
    smoothed = convolve_separable(r, k)
    back = convolve_separable(smoothed, k)
    return (2.0 / r.size) * back


def max_score(heatmap: np.ndarray) -> float:
    """Maximum heatmap value; the anomaly score of an image."""
    heatmap = np.asarray(heatmap)
    if heatmap.size == 0:
        raise ValueError("empty heatmap")
    return float(heatmap.max())
