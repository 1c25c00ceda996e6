"""Grayscale image IO, preprocessing, and residual maps.

Images are 2D float64 arrays in row-major (H, W) layout with values in
[0, 1]. Residual maps share the layout but live in [-1, 1].
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def to_grayscale(r, g, b):
    """Luminance conversion with the standard 0.299/0.587/0.114 weights.

    Accepts scalars or arrays; broadcasting follows numpy rules.
    """
    wr, wg, wb = GRAY_WEIGHTS
    return wr * r + wg * g + wb * b


def load_image(path) -> np.ndarray:
    """Load an 8-bit grayscale or RGB PNG, or a binary PGM (P5).

    Pixel values are scaled by 1/255; RGB inputs are converted through
    :func:`to_grayscale`. Returns an (H, W) float64 array in [0, 1].
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file missing: {path}")
    data = path.read_bytes()
    if data.startswith(b"P5"):
        return _decode_pgm(data, path)
    if data.startswith(_PNG_SIGNATURE):
        return _decode_png(path)
    raise ValueError(f"unsupported format: {path} (expected PNG or binary PGM)")


def save_image(path, img: np.ndarray) -> None:
    """Write an image as PGM P5 or PNG, chosen by file extension.

    Values are clipped to [0, 1] and quantized as round(255 * v). PGM
    round-trips bit-exactly through :func:`load_image`.
    """
    path = Path(path)
    quant = _quantize(img)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        h, w = quant.shape
        header = f"P5\n{w} {h}\n255\n".encode("ascii")
        path.write_bytes(header + quant.tobytes())
    elif suffix == ".png":
        from PIL import Image as PILImage

        PILImage.fromarray(quant, mode="L").save(path)
    else:
        raise ValueError(f"unsupported output extension: {path}")


def resize_bilinear(img: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resize on a corner-aligned sample grid.

    Output corners sample input corners exactly; a same-size resize is
    the identity. Values stay in [0, 1].
    """
    if new_w < 1 or new_h < 1:
        raise ValueError(f"target size must be >= 1, got {new_w}x{new_h}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    xs = np.linspace(0.0, w - 1, new_w)
    ys = np.linspace(0.0, h - 1, new_h)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = (ys - y0)[:, None]
    top = (1.0 - fx) * img[np.ix_(y0, x0)] + fx * img[np.ix_(y0, x1)]
    bot = (1.0 - fx) * img[np.ix_(y1, x0)] + fx * img[np.ix_(y1, x1)]
    out = (1.0 - fy) * top + fy * bot
    return np.clip(out, 0.0, 1.0)


def residual(y_hat: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Elementwise difference y_hat - y between two same-shape images."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ValueError(f"shape mismatch: {y_hat.shape} vs {y.shape}")
    return y_hat - y


def save_heatmap_png(path, heatmap: np.ndarray) -> float:
    """Export a heatmap as an 8-bit PNG scaled by 1/max.

    Returns the scale factor (the max value used as divisor, 1.0 for an
    all-zero map) so callers can record it alongside the image.
    """
    heatmap = np.asarray(heatmap, dtype=np.float64)
    scale = float(heatmap.max()) if heatmap.size and heatmap.max() > 0 else 1.0
    save_image(path, heatmap / scale)
    return scale


def _quantize(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def _decode_pgm(data: bytes, path) -> np.ndarray:
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if pos == start:
            raise ValueError(f"truncated PGM header: {path}")
        try:
            fields.append(int(data[start:pos]))
        except ValueError:
            raise ValueError(f"bad PGM header field {data[start:pos]!r}: {path}") from None
    w, h, maxval = fields
    if w < 1 or h < 1:
        raise ValueError(f"bad PGM dimensions {w}x{h}: {path}")
    if maxval != 255:
        raise ValueError(f"unsupported PGM bit depth (maxval {maxval}): {path}")
    # exactly one whitespace byte separates the header from the payload
    start = pos + 1
    if len(data) - start < w * h:
        raise ValueError(f"truncated PGM payload: {path}")
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=start)
    return raw.reshape(h, w).astype(np.float64) / 255.0


def _decode_png(path) -> np.ndarray:
    from PIL import Image as PILImage

    try:
        with PILImage.open(path) as im:
            mode = im.mode
            if mode == "L":
                arr = np.asarray(im, dtype=np.float64)
            elif mode == "RGB":
                rgb = np.asarray(im, dtype=np.float64)
                arr = to_grayscale(rgb[..., 0], rgb[..., 1], rgb[..., 2])
            else:
                raise ValueError(
                    f"unsupported PNG mode {mode!r} (need 8-bit L or RGB): {path}"
                )
            return arr / 255.0
    except (OSError, SyntaxError) as exc:
        raise ValueError(f"unreadable PNG {path}: {exc}") from exc
