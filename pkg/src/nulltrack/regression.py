"""Box regression from score-modulated features, GIoU, and loss metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nulltrack.boxes import BoxLTRB, intersection_area, iou
from nulltrack.errors import ValidationError
from nulltrack.predictor import LabelMap
from nulltrack.editing import ScoreMap
from nulltrack.tensorio import FeatureMap


@dataclass(frozen=True)
class RegDecParams:
    """Four per-pixel linear maps (4 x C) plus biases, before the exponential."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != 4:
            raise ValidationError("regression weights must have shape 4 x C")
        if b.shape != (4,):
            raise ValidationError("regression bias must have length 4")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("regression params must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class RegressionMaps:
    """Per-location distances to the left/top/right/bottom box edges."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.float64)
        if d.ndim != 3 or d.shape[0] != 4:
            raise ValidationError("regression maps must have shape [4,H,W]")
        if d.min() < 0:
            raise ValidationError("edge distances must be nonnegative")
        object.__setattr__(self, "d", d)


@dataclass(frozen=True)
class LossConfig:
    """Scalar weights of the classification and GIoU terms."""

    lambda_cls: float = 100.0
    lambda_giou: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lambda_cls) and math.isfinite(self.lambda_giou)):
            raise ValidationError("loss weights must be finite")
        if self.lambda_cls < 0 or self.lambda_giou < 0:
            raise ValidationError("loss weights must be nonnegative")


def init_regdec_params(c: int, seed: int) -> RegDecParams:
    rng = np.random.default_rng(seed)
    std = 1.0 / math.sqrt(c)
    return RegDecParams(rng.normal(0.0, std, size=(4, c)), rng.normal(0.0, std, size=4))


def constant_extent_params(c: int, box: BoxLTRB) -> RegDecParams:
    """Zero-weight decoder whose biases reproduce the given box extents.

    With zero weights the exponential yields constant edge distances equal to
    the box half-extents, so the decoded box is a fixed-size box centered on
    the score argmax.
    """
    half_w = 0.5 * box.width
    half_h = 0.5 * box.height
    bias = np.log([half_w, half_h, half_w, half_h])
    return RegDecParams(np.zeros((4, c)), bias)


def regress_box(p: ScoreMap, z_cur: FeatureMap, params: RegDecParams) -> tuple[RegressionMaps, BoxLTRB]:
    """Decode edge distances from p-modulated features and read out the box.

    Features are modulated channel-wise by the score map, mapped through four
    per-pixel linear heads and an exponential, and the box is assembled at the
    score argmax as (w0 - d_l, h0 - d_t, w0 + d_r, h0 + d_b).
    """
    if p.values.shape != (z_cur.height, z_cur.width):
        raise ValidationError(
            f"score map {p.values.shape} does not match features "
            f"{(z_cur.height, z_cur.width)}"
        )
    if params.weights.shape[1] != z_cur.channels:
        raise ValidationError(
            f"regression weights expect C={params.weights.shape[1]}, "
            f"features have C={z_cur.channels}"
        )
    modulated = p.values[None, :, :] * z_cur.array.astype(np.float64)
    pre = np.tensordot(params.weights, modulated, axes=([1], [0]))
    pre += params.bias[:, None, None]
    d = np.exp(pre)
    h0, w0 = p.argmax_rc
    box = BoxLTRB(
        left=w0 - d[0, h0, w0],
        top=h0 - d[1, h0, w0],
        right=w0 + d[2, h0, w0],
        bottom=h0 + d[3, h0, w0],
        scale="feature",
    )
    return RegressionMaps(d=d), box


def giou(a: BoxLTRB, b: BoxLTRB) -> float:
    """Generalized IoU: IoU minus the empty fraction of the enclosing hull."""
    if a.area <= 0 or b.area <= 0:
        raise ValidationError("GIoU requires boxes with positive area")
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    hull_w = max(a.right, b.right) - min(a.left, b.left)
    hull_h = max(a.bottom, b.bottom) - min(a.top, b.top)
    hull = hull_w * hull_h
    return inter / union - (hull - union) / hull


def hinge_cls_loss(pred: ScoreMap, target: LabelMap, threshold: float = 0.25) -> float:
    """Compound hinge metric: squared error on foreground cells (label above
    the threshold), squared hinge max(0, pred)^2 on background cells; mean
    over all cells."""
    if pred.values.shape != target.values.shape:
        raise ValidationError(
            f"score map {pred.values.shape} does not match label {target.values.shape}"
        )
    fg = target.values > threshold
    err = np.where(
        fg,
        (pred.values - target.values) ** 2,
        np.maximum(pred.values, 0.0) ** 2,
    )
    return float(err.mean())


def total_loss(cls_term: float, giou_term: float, cfg: LossConfig) -> float:
    """Weighted sum of the classification and GIoU terms (evaluation only)."""
    if not (math.isfinite(cls_term) and math.isfinite(giou_term)):
        raise ValidationError("loss terms must be finite")
    return cfg.lambda_cls * cls_term + cfg.lambda_giou * giou_term


__all__ = [
    "BoxLTRB", "LossConfig", "RegDecParams", "RegressionMaps",
    "constant_extent_params", "giou", "hinge_cls_loss", "init_regdec_params",
    "iou", "regress_box", "total_loss",
]
