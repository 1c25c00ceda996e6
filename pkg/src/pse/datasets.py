"""Synthetic data generators plus loaders for IDX files and manifests.

All generators are pure functions of (parameters, seed) so generated
corpora are reproducible byte for byte.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pse.images import load_image, save_image

_IDX_MAGIC_IMAGES = 0x00000803
_IDX_MAGIC_LABELS = 0x00000801


@dataclass(frozen=True)
class Manifest:
    entries: tuple  # of (Path, int label)
    root: Path

    def __len__(self) -> int:
        return len(self.entries)

    def paths(self):
        return [p for p, _ in self.entries]

    def labels(self) -> np.ndarray:
        return np.array([lab for _, lab in self.entries], dtype=int)


def gen_equal_mse_pair(
    size: int, patch: int, magnitude: float, seed: int, sigma_max: float = 2.0
):
    """Two corruptions of one flat image with identical residual multisets.

    The block variant raises a contiguous patch x patch square by
    `magnitude`; the scatter variant raises patch^2 isolated pixels by the
    same amount, spaced so their smoothed footprints cannot overlap for
    any sigma <= sigma_max. MSE is then equal by construction while the
    smoothed-residual metric tells the two apart.

    The base is flat so the equality survives an 8-bit file round trip:
    every perturbed pixel quantizes identically in both variants.

    Returns (base, block variant, scatter variant).
    """
    if size < 1 or patch < 1:
        raise ValueError(f"size and patch must be >= 1, got {size}, {patch}")
    if patch > size:
        raise ValueError(f"patch {patch} does not fit in image of size {size}")
    spacing = 2 * int(np.ceil(2.0 * sigma_max)) + 1
    span = (patch - 1) * spacing + 1
    if span > size:
        raise ValueError(
            f"cannot scatter {patch}x{patch} pixels with spacing {spacing} "
            f"in a {size}x{size} image (needs {span} pixels per side)"
        )
    rng = np.random.default_rng(seed)
    base = np.full((size, size), 0.4)

    by = int(rng.integers(0, size - patch + 1))
    bx = int(rng.integers(0, size - patch + 1))
    block = base.copy()
    block[by : by + patch, bx : bx + patch] += magnitude

    oy = int(rng.integers(0, size - span + 1))
    ox = int(rng.integers(0, size - span + 1))
    scatter = base.copy()
    idx_y = oy + spacing * np.arange(patch)
    idx_x = ox + spacing * np.arange(patch)
    scatter[np.ix_(idx_y, idx_x)] += magnitude
    return base, block, scatter


def _benchmark_base(size: int) -> np.ndarray:
    # fixed smooth pattern in [0.2, 0.7]; patches of |shift| <= 0.4 with the
    # sign chosen against the local level never need clipping
    t = np.linspace(0.0, 1.0, size)
    yy, xx = np.meshgrid(t, t, indexing="ij")
    return 0.3 + 0.15 * (xx + yy) + 0.1 * np.sin(2 * np.pi * xx) * np.sin(2 * np.pi * yy)


def _speckle(img: np.ndarray, rng, p: float) -> np.ndarray:
    # draws happen for every pixel so the stream layout is independent of p
    mask = rng.random(img.shape) < p
    values = rng.integers(0, 2, size=img.shape).astype(np.float64)
    return np.where(mask, values, img)


def gen_anomaly_benchmark(
    n_normal: int,
    n_anomalous: int,
    size: int,
    seed: int,
    out_dir,
    noise_amplitude: float = 0.02,
    patch_min: int = 8,
    patch_max: int = 16,
    shift_min: float = 0.3,
    shift_max: float = 0.4,
    sp_noise: float = 0.0,
) -> Manifest:
    """Write a labeled benchmark of PGM images plus manifest.csv.

    Normals are one fixed smooth pattern plus per-image uniform noise;
    anomalies additionally get a square patch at a random position whose
    intensity shift is at least `shift_min`, pushed toward whichever
    extreme the local background is farther from. `sp_noise` optionally
    speckles every image with salt-and-pepper pixels, which is the hard
    mode: isolated full-range spikes that a plain squared-residual score
    mistakes for anomalies.
    """
    if n_normal < 0 or n_anomalous < 0 or n_normal + n_anomalous < 1:
        raise ValueError("need at least one image")
    if not 0 <= sp_noise <= 1:
        raise ValueError(f"sp_noise must be in [0, 1], got {sp_noise}")
    if patch_min > patch_max or patch_max > size:
        raise ValueError(f"bad patch range [{patch_min}, {patch_max}] for size {size}")
    if not 0 < shift_min <= shift_max <= 0.4:
        raise ValueError(f"bad shift range [{shift_min}, {shift_max}]")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = _benchmark_base(size)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n_normal):
        img = base + rng.uniform(-noise_amplitude, noise_amplitude, size=base.shape)
        if sp_noise > 0:
            img = _speckle(img, rng, sp_noise)
        name = f"normal_{i:03d}.pgm"
        save_image(out / name, img)
        entries.append((out / name, 0))
    for i in range(n_anomalous):
        img = base + rng.uniform(-noise_amplitude, noise_amplitude, size=base.shape)
        side = int(rng.integers(patch_min, patch_max + 1))
        py = int(rng.integers(0, size - side + 1))
        px = int(rng.integers(0, size - side + 1))
        shift = float(rng.uniform(shift_min, shift_max))
        region = img[py : py + side, px : px + side]
        sign = 1.0 if float(region.mean()) <= 0.5 else -1.0
        region += sign * shift
        if sp_noise > 0:
            img = _speckle(img, rng, sp_noise)
        name = f"anomaly_{i:03d}.pgm"
        save_image(out / name, img)
        entries.append((out / name, 1))
    manifest_path = out / "manifest.csv"
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label"])
        for path, label in entries:
            writer.writerow([path.name, label])
    return Manifest(entries=tuple(entries), root=out)


def gen_class_dataset(n: int, seed: int, size: int = 16, n_classes: int = 10,
                      noise_p: float = 0.08):
    """Position-coded glyph classification set for pre-training runs.

    Each class is a 4x4 bright glyph anchored at one of `n_classes` grid
    sites, jittered by one pixel and speckled with salt-and-pepper noise.
    Labels cycle round-robin so classes are balanced. Returns (images as
    an (n, size, size) stack, labels).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n_classes < 1 or n_classes > 10:
        raise ValueError(f"n_classes must be in [1, 10], got {n_classes}")
    if size < 8:
        raise ValueError(f"size must be >= 8, got {size}")
    glyph = 4
    anchors_y = (2, size - 7)
    anchors_x = tuple(int(round(i * (size - glyph) / 4)) for i in range(5))
    anchors = [(y, x) for y in anchors_y for x in anchors_x][:n_classes]
    rng = np.random.default_rng(seed)
    images = np.full((n, size, size), 0.15)
    labels = np.arange(n) % n_classes
    for i in range(n):
        ay, ax = anchors[labels[i]]
        jy = int(np.clip(ay + rng.integers(-1, 2), 0, size - glyph))
        jx = int(np.clip(ax + rng.integers(-1, 2), 0, size - glyph))
        images[i, jy : jy + glyph, jx : jx + glyph] = 0.85
        images[i] = _speckle(images[i], rng, noise_p)
    return images, labels


def mnistx_transform(img: np.ndarray, noise_p: float, seed: int) -> np.ndarray:
    """Zero-pad a square image to triple size and add salt-and-pepper noise.

    Each output pixel is independently replaced by 0 or 1 (equal odds)
    with probability noise_p.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"expected a square image, got shape {img.shape}")
    if not 0 <= noise_p <= 1:
        raise ValueError(f"noise_p must be in [0, 1], got {noise_p}")
    side = img.shape[0]
    out = np.zeros((3 * side, 3 * side))
    out[side : 2 * side, side : 2 * side] = img
    rng = np.random.default_rng(seed)
    return _speckle(out, rng, noise_p)


def read_idx(path):
    """Decode an IDX file: images scaled to [0,1], or integer labels."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise ValueError(f"bad magic in {path}: file too short")
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic == _IDX_MAGIC_IMAGES:
        if len(data) < 16:
            raise ValueError(f"truncated IDX header in {path}")
        n, rows, cols = struct.unpack_from(">III", data, 4)
        count = n * rows * cols
        if count > len(data) - 16:
            raise ValueError(
                f"truncated IDX payload in {path}: header promises {count} pixels"
            )
        pixels = np.frombuffer(data, dtype=np.uint8, count=count, offset=16)
        stack = pixels.reshape(n, rows, cols).astype(np.float64) / 255.0
        return [stack[i] for i in range(n)]
    if magic == _IDX_MAGIC_LABELS:
        if len(data) < 8:
            raise ValueError(f"truncated IDX header in {path}")
        (n,) = struct.unpack_from(">I", data, 4)
        if n > len(data) - 8:
            raise ValueError(f"truncated IDX payload in {path}: header promises {n} labels")
        return [int(b) for b in data[8 : 8 + n]]
    raise ValueError(f"bad magic 0x{magic:08x} in {path}")


def load_manifest(path) -> Manifest:
    """Read a `path,label` CSV; entries resolve relative to the CSV's directory."""
    csv_path = Path(path)
    if not csv_path.exists():
        raise FileNotFoundError(f"file missing: {csv_path}")
    root = csv_path.parent
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["path", "label"]:
            raise ValueError(f"manifest {csv_path} must start with header 'path,label'")
        entries = []
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"malformed manifest row in {csv_path}: {row!r}")
            entry_path = root / row[0]
            if not entry_path.exists():
                raise FileNotFoundError(f"manifest entry missing on disk: {entry_path}")
            try:
                label = int(row[1])
            except ValueError:
                raise ValueError(
                    f"non-integer label {row[1]!r} in {csv_path} for {row[0]}"
                ) from None
            if label < 0:
                raise ValueError(f"negative label {label} in {csv_path} for {row[0]}")
            entries.append((entry_path, label))
    return Manifest(entries=tuple(entries), root=root)


def load_manifest_images(manifest: Manifest):
    """Load every manifest entry; returns (list of images, labels array)."""
    images = [load_image(p) for p, _ in manifest.entries]
    return images, manifest.labels()
