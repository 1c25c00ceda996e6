"""Shared oracles for the test suite.

These recompute library quantities from their definitions with plain
Python loops so agreement is meaningful. Keep them slow and obvious.
"""

import math

import numpy as np


def oracle_gaussian_weights(sigma):
    """Sampled-and-renormalized Gaussian taps straight from the formula."""
    if sigma == 0:
        return [1.0]
    radius = math.ceil(2 * sigma)
    raw = [math.exp(-(x * x) / (2.0 * sigma * sigma)) for x in range(-radius, radius + 1)]
    total = sum(raw)
    return [w / total for w in raw]


def oracle_convolve2d(arr, weights_1d):
    """Direct zero-padded 2D convolution with the separable kernel's outer
    product, as nested Python loops."""
    arr = np.asarray(arr, dtype=float)
    n = len(weights_1d)
    radius = n // 2
    height, width = arr.shape
    out = np.zeros_like(arr)
    for i in range(height):
        for j in range(width):
            acc = 0.0
            for di in range(-radius, radius + 1):
                for dj in range(-radius, radius + 1):
                    ii, jj = i + di, j + dj
                    if 0 <= ii < height and 0 <= jj < width:
                        acc += arr[ii, jj] * weights_1d[di + radius] * weights_1d[dj + radius]
            out[i, j] = acc
    return out


def oracle_pse(y_hat, y, sigma):
    """Mean of squared smoothed residuals, via the loop oracle."""
    residual = np.asarray(y_hat, dtype=float) - np.asarray(y, dtype=float)
    smoothed = oracle_convolve2d(residual, oracle_gaussian_weights(sigma))
    return float(np.mean(smoothed * smoothed))


def oracle_average_precision(scores, labels):
    """Mean precision at each positive's rank; ties rank negatives first."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], labels[i]))
    seen_pos = 0
    precisions = []
    for rank, i in enumerate(order, start=1):
        if labels[i] == 1:
            seen_pos += 1
            precisions.append(seen_pos / rank)
    return sum(precisions) / len(precisions)


def rel_err(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)
