"""Few-shot anomaly scoring on PCA reconstructions.

An image is reconstructed from a model fitted on normal examples; the
PSE heatmap between image and reconstruction highlights what the model
could not explain, and the heatmap maximum is the anomaly score. The
sigma and component-count hyperparameters are picked by grid search on
a handful of labeled samples, ranked by average precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from pse.metrics import max_score, pse_heatmap
from pse.pca import PCAModel, pca_fit, pca_reconstruct

DEFAULT_SIGMA_GRID = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)
DEFAULT_COMP_GRID = (0, 1, 2, 4, 8, 16, 32, 64)

SCORE_KINDS = ("max", "mean")


@dataclass(frozen=True)
class HyperParams:
    sigma: float
    n_components: int


@dataclass(frozen=True)
class ScoredSample:
    id: str
    score: float
    label: int
    heatmap: np.ndarray | None = None


def anomaly_score(
    model: PCAModel,
    img: np.ndarray,
    hp: HyperParams,
    score_kind: str = "max",
) -> tuple[float, np.ndarray]:
    """Score one image; returns (score, heatmap).

    The default score is the heatmap maximum. With sigma=0 that is the
    max squared residual, the MSE-variant baseline; score_kind="mean"
    switches to the scalar image-level error instead.
    """
    if score_kind not in SCORE_KINDS:
        raise ValueError(f"score_kind must be one of {SCORE_KINDS}, got {score_kind!r}")
    recon = pca_reconstruct(model, img, hp.n_components)
    heatmap = pse_heatmap(img, recon, hp.sigma)
    if score_kind == "max":
        score = max_score(heatmap)
    else:
        score = float(np.mean(heatmap))
    return score, heatmap


def average_precision(samples: Sequence[ScoredSample]) -> float:
    """AP = mean over positives of precision at that positive's rank.

    Samples are ranked by descending score; ties are broken
    pessimistically, negatives ahead of positives.
    """
    if not samples:
        raise ValueError("no samples")
    n_pos = sum(1 for s in samples if s.label == 1)
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive sample")
    ranked = sorted(samples, key=lambda s: (-s.score, s.label))
    total, seen_pos = 0.0, 0
    for rank, sample in enumerate(ranked, start=1):
        if sample.label == 1:
            seen_pos += 1
            total += seen_pos / rank
    return total / n_pos


def grid_search(
    normals_train: Sequence[np.ndarray],
    few_shot: Sequence[tuple[np.ndarray, int]],
    sigma_grid: Sequence[float] = DEFAULT_SIGMA_GRID,
    comp_grid: Sequence[int] = DEFAULT_COMP_GRID,
    score_kind: str = "max",
) -> tuple[HyperParams, float, PCAModel]:
    """Pick (sigma, n_components) maximizing AP on the few-shot set.

    PCA is fitted once at max(comp_grid) and truncated per cell; grid
    cells beyond the model's rank are clamped to it. Ties go to the
    smaller sigma, then the smaller component count. Returns the winning
    hyperparameters, their AP, and the fitted model.
    """
    labels = [label for _, label in few_shot]
    if not sigma_grid or not comp_grid:
        raise ValueError("hyperparameter grids must be non-empty")
    if 1 not in labels or 0 not in labels:
        raise ValueError("few-shot set needs at least one normal and one anomaly")
    model = pca_fit(list(normals_train), max_components=max(max(comp_grid), 1))
    best_hp, best_ap = None, -1.0
    for sigma in sorted(set(float(s) for s in sigma_grid)):
        for c in sorted(set(int(c) for c in comp_grid)):
            hp = HyperParams(sigma=sigma, n_components=min(c, model.n_components))
            scored = [
                ScoredSample(
                    id=str(i),
                    score=anomaly_score(model, img, hp, score_kind)[0],
                    label=label,
                )
                for i, (img, label) in enumerate(few_shot)
            ]
            ap = average_precision(scored)
            if ap > best_ap:
                best_hp, best_ap = hp, ap
    return best_hp, best_ap, model


def evaluate(
    model: PCAModel,
    hp: HyperParams,
    test: Sequence[tuple[np.ndarray, int]],
    ids: Sequence[str] | None = None,
    score_kind: str = "max",
    keep_heatmaps: bool = False,
) -> tuple[float, list[ScoredSample]]:
    """Score every test sample and compute AP over the resulting ranking."""
    if not test:
        raise ValueError("empty test set")
    if ids is None:
        ids = [str(i) for i in range(len(test))]
    samples = []
    for sample_id, (img, label) in zip(ids, test):
        score, heatmap = anomaly_score(model, img, hp, score_kind)
        samples.append(
            ScoredSample(
                id=sample_id,
                score=score,
                label=int(label),
                heatmap=heatmap if keep_heatmaps else None,
            )
        )
    return average_precision(samples), samples
