"""Fully connected autoencoder trained with MSE or PSE reconstruction loss.

One ReLU bottleneck layer, one sigmoid output layer, plain minibatch
gradient descent. After pre-training the decoder is discarded and a
softmax head is fine-tuned on the bottleneck features. Everything is
numpy and deterministic per seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from pse.kernel import gaussian_kernel, smooth_stack

LOSS_KINDS = ("mse", "pse")

_MAGIC = b"PSENNCKPT\x00\x00\x00"
_VERSION = 1
_KIND_AUTOENCODER = 0
_KIND_CLASSIFIER = 1


@dataclass
class MLPAutoencoder:
    w1: np.ndarray  # (d, h)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h, d)
    b2: np.ndarray  # (d,)

    @property
    def d(self) -> int:
        return self.w1.shape[0]

    @property
    def h(self) -> int:
        return self.w1.shape[1]


@dataclass
class Encoder:
    w1: np.ndarray
    b1: np.ndarray


@dataclass
class ClassifierHead:
    wc: np.ndarray  # (h, K)
    bc: np.ndarray  # (K,)

    @property
    def n_classes(self) -> int:
        return self.wc.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "pse"
    sigma: float = 0.5
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.1
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.loss_kind == "pse" and not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        return self


def _glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def ae_init(d: int, h: int, seed: int) -> MLPAutoencoder:
    """Fan-balanced uniform init, zero biases, deterministic per seed."""
    if d < 1 or h < 1:
        raise ValueError(f"dimensions must be >= 1, got d={d}, h={h}")
    rng = np.random.default_rng(seed)
    return MLPAutoencoder(
        w1=_glorot(rng, d, h),
        b1=np.zeros(h),
        w2=_glorot(rng, h, d),
        b2=np.zeros(d),
    )


def head_init(h: int, n_classes: int, seed: int) -> ClassifierHead:
    """Classifier head init with the same scheme as the autoencoder."""
    if h < 1 or n_classes < 1:
        raise ValueError(f"dimensions must be >= 1, got h={h}, K={n_classes}")
    rng = np.random.default_rng(seed)
    return ClassifierHead(wc=_glorot(rng, h, n_classes), bc=np.zeros(n_classes))


def _as_stack(images) -> np.ndarray:
    stack = np.stack([np.asarray(im, dtype=np.float64) for im in images]) \
        if not isinstance(images, np.ndarray) else np.asarray(images, dtype=np.float64)
    if stack.ndim == 2:  # already (n, d)
        return stack
    if stack.ndim == 3:
        return stack
    raise ValueError(f"expected (n, H, W) or (n, d) data, got shape {stack.shape}")


def ae_forward(model: MLPAutoencoder, batch):
    """Forward pass: z = relu(x W1 + b1), x_hat = sigmoid(z W2 + b2).

    Returns (bottleneck activations, reconstructions); reconstructions
    keep the shape of the input batch.
    """
    stack = _as_stack(batch)
    x = stack.reshape(stack.shape[0], -1)
    if x.shape[1] != model.d:
        raise ValueError(f"batch has {x.shape[1]} pixels per image, model expects {model.d}")
    z = np.maximum(x @ model.w1 + model.b1, 0.0)
    x_hat = _sigmoid(z @ model.w2 + model.b2)
    return z, x_hat.reshape(stack.shape)


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def reconstruction_loss_and_grads(model: MLPAutoencoder, images, loss_kind: str, sigma: float):
    """Loss (mean per-image reconstruction error over the batch) and its
    gradients with respect to every parameter.

    The MSE loss is the sigma=0 case of the PSE loss, so both kinds run
    through one code path and their sigma=0 trajectories are identical
    bit for bit.
    """
    stack = _as_stack(images)
    if stack.ndim != 3:
        raise ValueError("reconstruction loss needs (n, H, W) images")
    n = stack.shape[0]
    x = stack.reshape(n, -1)
    kern = gaussian_kernel(sigma if loss_kind == "pse" else 0.0)

    a1 = x @ model.w1 + model.b1
    z = np.maximum(a1, 0.0)
    a2 = z @ model.w2 + model.b2
    x_hat = _sigmoid(a2)

    residuals = (x_hat - x).reshape(stack.shape)
    smoothed = smooth_stack(residuals, kern)
    loss = float(np.mean(np.square(smoothed)))
    # adjoint of the smoothing under zero padding is the same smoothing
    d_xhat = smooth_stack(smoothed, kern).reshape(n, -1) * (2.0 / smoothed[0].size / n)

    d_a2 = d_xhat * x_hat * (1.0 - x_hat)
    d_w2 = z.T @ d_a2
    d_b2 = d_a2.sum(axis=0)
    d_z = d_a2 @ model.w2.T
    d_a1 = d_z * (a1 > 0.0)
    d_w1 = x.T @ d_a1
    d_b1 = d_a1.sum(axis=0)
    grads = {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2}
    return loss, grads


def ae_train(model: MLPAutoencoder, images, cfg: TrainConfig):
    """Minibatch gradient descent on the reconstruction loss.

    Shuffling is driven by cfg.seed; the history holds one mean training
    loss per epoch. The input model is left untouched.
    """
    cfg.validate()
    stack = _as_stack(images)
    if stack.ndim != 3 or stack.shape[0] == 0:
        raise ValueError("training needs a non-empty (n, H, W) image set")
    n = stack.shape[0]
    m = replace(
        model,
        w1=model.w1.copy(), b1=model.b1.copy(),
        w2=model.w2.copy(), b2=model.b2.copy(),
    )
    rng = np.random.default_rng(cfg.seed)
    history = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = stack[perm[start : start + cfg.batch_size]]
            loss, grads = reconstruction_loss_and_grads(m, batch, cfg.loss_kind, cfg.sigma)
            epoch_loss += loss * batch.shape[0]
            m.w1 -= cfg.learning_rate * grads["w1"]
            m.b1 -= cfg.learning_rate * grads["b1"]
            m.w2 -= cfg.learning_rate * grads["w2"]
            m.b2 -= cfg.learning_rate * grads["b2"]
        history.append(epoch_loss / n)
    return m, history


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def classify_logits(encoder, head: ClassifierHead, images) -> np.ndarray:
    stack = _as_stack(images)
    x = stack.reshape(stack.shape[0], -1)
    z = np.maximum(x @ encoder.w1 + encoder.b1, 0.0)
    return z @ head.wc + head.bc


def finetune_classify(
    model: MLPAutoencoder,
    head: ClassifierHead,
    labeled,
    epochs: int,
    lr: float,
    seed: int,
    batch_size: int = 32,
    freeze_encoder: bool = False,
):
    """Cross-entropy training of encoder + softmax head on labeled data.

    The decoder is not touched. Returns (model with trained encoder,
    trained head, history) where history rows are (mean loss, train
    accuracy) per epoch.
    """
    images = [img for img, _ in labeled]
    labels = np.array([int(lab) for _, lab in labeled])
    if labels.size == 0:
        raise ValueError("empty labeled set")
    if labels.min() < 0 or labels.max() >= head.n_classes:
        raise ValueError(
            f"labels must lie in [0, {head.n_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    stack = _as_stack(images)
    x_all = stack.reshape(stack.shape[0], -1)
    n = x_all.shape[0]
    m = replace(
        model,
        w1=model.w1.copy(), b1=model.b1.copy(),
        w2=model.w2.copy(), b2=model.b2.copy(),
    )
    hd = ClassifierHead(wc=head.wc.copy(), bc=head.bc.copy())
    rng = np.random.default_rng(seed)
    history = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            x, y = x_all[idx], labels[idx]
            b = x.shape[0]
            a1 = x @ m.w1 + m.b1
            z = np.maximum(a1, 0.0)
            probs = softmax(z @ hd.wc + hd.bc)
            epoch_loss += -float(np.sum(np.log(probs[np.arange(b), y])))
            d_logits = probs
            d_logits[np.arange(b), y] -= 1.0
            d_logits /= b
            d_wc = z.T @ d_logits
            d_bc = d_logits.sum(axis=0)
            if not freeze_encoder:
                d_a1 = (d_logits @ hd.wc.T) * (a1 > 0.0)
                m.w1 -= lr * (x.T @ d_a1)
                m.b1 -= lr * d_a1.sum(axis=0)
            hd.wc -= lr * d_wc
            hd.bc -= lr * d_bc
        preds = np.argmax(classify_logits(m, hd, stack), axis=1)
        history.append((epoch_loss / n, float(np.mean(preds == labels))))
    return m, hd, history


def eval_accuracy(encoder, head: ClassifierHead, test) -> float:
    """Fraction of argmax-correct predictions; argmax ties go to the
    lowest class index."""
    if not test:
        raise ValueError("empty test set")
    images = [img for img, _ in test]
    labels = np.array([int(lab) for _, lab in test])
    preds = np.argmax(classify_logits(encoder, head, _as_stack(images)), axis=1)
    return float(np.mean(preds == labels))


def save_autoencoder(path, model: MLPAutoencoder) -> None:
    parts = [
        _MAGIC,
        struct.pack("<I", _VERSION),
        struct.pack("<III", _KIND_AUTOENCODER, model.d, model.h),
        np.ascontiguousarray(model.w1, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.b1, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.w2, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.b2, dtype="<f8").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def save_classifier(path, model, head: ClassifierHead) -> None:
    """Persist encoder + head; the decoder is discarded here."""
    d, h = model.w1.shape
    parts = [
        _MAGIC,
        struct.pack("<I", _VERSION),
        struct.pack("<IIII", _KIND_CLASSIFIER, d, h, head.n_classes),
        np.ascontiguousarray(model.w1, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.b1, dtype="<f8").tobytes(),
        np.ascontiguousarray(head.wc, dtype="<f8").tobytes(),
        np.ascontiguousarray(head.bc, dtype="<f8").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def _read_array(data, offset, count, shape):
    end = offset + 8 * count
    if end > len(data):
        raise ValueError("truncated checkpoint")
    arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).copy()
    return arr.reshape(shape), end


def load_autoencoder(path) -> MLPAutoencoder:
    data = Path(path).read_bytes()
    kind, dims, offset = _parse_ckpt_header(data, path, n_dims=2)
    if kind != _KIND_AUTOENCODER:
        raise ValueError(f"not an autoencoder checkpoint: {path}")
    d, h = dims
    w1, offset = _read_array(data, offset, d * h, (d, h))
    b1, offset = _read_array(data, offset, h, (h,))
    w2, offset = _read_array(data, offset, h * d, (h, d))
    b2, _ = _read_array(data, offset, d, (d,))
    return MLPAutoencoder(w1=w1, b1=b1, w2=w2, b2=b2)


def load_classifier(path) -> tuple[Encoder, ClassifierHead]:
    data = Path(path).read_bytes()
    kind, dims, offset = _parse_ckpt_header(data, path, n_dims=3)
    if kind != _KIND_CLASSIFIER:
        raise ValueError(f"not a classifier checkpoint: {path}")
    d, h, n_classes = dims
    w1, offset = _read_array(data, offset, d * h, (d, h))
    b1, offset = _read_array(data, offset, h, (h,))
    wc, offset = _read_array(data, offset, h * n_classes, (h, n_classes))
    bc, _ = _read_array(data, offset, n_classes, (n_classes,))
    return Encoder(w1=w1, b1=b1), ClassifierHead(wc=wc, bc=bc)


def checkpoint_kind(path) -> str:
    data = Path(path).read_bytes()
    if len(data) < 20 or data[:12] != _MAGIC:
        raise ValueError(f"not a checkpoint file: {path}")
    (kind,) = struct.unpack_from("<I", data, 16)
    return {_KIND_AUTOENCODER: "autoencoder", _KIND_CLASSIFIER: "classifier"}.get(
        kind, "unknown"
    )


def _parse_ckpt_header(data, path, n_dims):
    header = 16 + 4 + 4 * n_dims
    if len(data) < header or data[:12] != _MAGIC:
        raise ValueError(f"not a checkpoint file: {path}")
    (version,) = struct.unpack_from("<I", data, 12)
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}: {path}")
    (kind,) = struct.unpack_from("<I", data, 16)
    dims = struct.unpack_from("<" + "I" * n_dims, data, 20)
    return kind, dims, header
