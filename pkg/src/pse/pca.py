"""PCA model for image reconstruction, fitted on non-anomalous images.

The model keeps the pixel mean and the leading right singular vectors of
the centered, flattened training matrix. Reconstruction with few
components reproduces what the training set can explain and leaves
anything else (an anomaly) in the residual.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_MAGIC = b"PSEPCAMODEL\x00"
_VERSION = 1

# singular values at or below this fraction of the largest are noise of
# an exactly-degenerate training set, not usable directions
_RANK_RTOL = 1e-12


@dataclass(frozen=True)
class PCAModel:
    height: int
    width: int
    mean: np.ndarray            # (dim,)
    components: np.ndarray      # (r, dim), orthonormal rows
    singular_values: np.ndarray  # (r,), nonincreasing

    @property
    def dim(self) -> int:
        return self.height * self.width

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def pca_fit(images, max_components: int) -> PCAModel:
    """Fit a PCA model to a list of same-shape images.

    Images are flattened row-major and mean-centered; components are the
    right singular vectors of the centered matrix, truncated to
    min(max_components, n - 1, dim) and stripped of numerically zero
    directions. The sign of each component is fixed so its
    largest-magnitude entry is nonnegative, making fits reproducible.
    """
    if len(images) < 2:
        raise ValueError(f"need at least 2 images to fit, got {len(images)}")
    if max_components < 1:
        raise ValueError(f"max_components must be >= 1, got {max_components}")
    shape = np.asarray(images[0]).shape
    for idx, img in enumerate(images):
        if np.asarray(img).shape != shape:
            raise ValueError(
                f"image {idx} has shape {np.asarray(img).shape}, expected {shape}"
            )
    h, w = shape
    x = np.stack([np.asarray(img, dtype=np.float64).ravel() for img in images])
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    r = min(max_components, len(images) - 1, h * w)
    s, vt = s[:r], vt[:r]
    if r > 0:
        usable = int(np.sum(s > _RANK_RTOL * max(s[0], 1.0)))
        s, vt = s[:usable], vt[:usable]
    components = vt.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PCAModel(
        height=h, width=w, mean=mean, components=components, singular_values=s
    )


def pca_reconstruct(model: PCAModel, img: np.ndarray, c: int) -> np.ndarray:
    """Project an image onto the top c components and reconstruct.

    Returns mean + sum_{j<=c} <x - mean, v_j> v_j reshaped to the image
    shape. The result is intentionally not clamped to [0, 1]; residuals
    and scores use the raw reconstruction, clamping happens only on
    export for viewing.
    """
    if not 0 <= c <= model.n_components:
        raise ValueError(
            f"component count {c} out of range [0, {model.n_components}]"
        )
    x = np.asarray(img, dtype=np.float64).ravel()
    if x.size != model.dim:
        raise ValueError(f"image has {x.size} pixels, model expects {model.dim}")
    basis = model.components[:c]
    recon = model.mean + basis.T @ (basis @ (x - model.mean))
    return recon.reshape(model.height, model.width)


def save_model(path, model: PCAModel) -> None:
    """Serialize a model to its binary format (little-endian float64)."""
    r = model.n_components
    parts = [
        _MAGIC,
        struct.pack("<I", _VERSION),
        struct.pack("<III", model.height, model.width, r),
        np.ascontiguousarray(model.mean, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.singular_values, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.components, dtype="<f8").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def load_model(path) -> PCAModel:
    """Load a model written by :func:`save_model`; round-trip is bit-exact."""
    data = Path(path).read_bytes()
    if len(data) < 28 or data[:12] != _MAGIC:
        raise ValueError(f"not a PCA model file: {path}")
    (version,) = struct.unpack_from("<I", data, 12)
    if version != _VERSION:
        raise ValueError(f"unsupported model version {version}: {path}")
    h, w, r = struct.unpack_from("<III", data, 16)
    dim = h * w
    need = 28 + 8 * (dim + r + r * dim)
    if len(data) < need:
        raise ValueError(f"truncated model file: {path}")
    mean = np.frombuffer(data, dtype="<f8", count=dim, offset=28).copy()
    off = 28 + 8 * dim
    singular = np.frombuffer(data, dtype="<f8", count=r, offset=off).copy()
    off += 8 * r
    components = (
        np.frombuffer(data, dtype="<f8", count=r * dim, offset=off)
        .reshape(r, dim)
        .copy()
    )
    return PCAModel(
        height=h, width=w, mean=mean, components=components, singular_values=singular
    )
