"""Study metrics: mean IoU, SUC AUC, attribute partitions, paired sign tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nulltrack.errors import ValidationError
from nulltrack.scenes import SequenceSpec, clean_frames, distractor_near_frames, occluded_frames
from nulltrack.tracker import TrackRun

# IoU thresholds for the success-rate AUC: 0.05 .. 0.95 in steps of 0.05.
SUC_THRESHOLDS = np.arange(1, 20) * 0.05

ATTRIBUTES = ("all", "occlusion", "distractor", "clean")


def suc_auc(ious: np.ndarray) -> float:
    """Mean over thresholds of the fraction of frames with IoU >= threshold."""
    ious = np.asarray(ious, dtype=np.float64)
    if ious.size == 0:
        return math.nan
    rates = [(ious >= thr).mean() for thr in SUC_THRESHOLDS]
    return float(np.mean(rates))


@dataclass(frozen=True)
class Metrics:
    mean_iou: float
    suc_auc: float
    attr_mean_iou: dict
    argmax_rate: float
    n_frames: int
    attr_n: dict


def attribute_masks(spec: SequenceSpec) -> dict:
    return {
        "all": np.ones(spec.frames, dtype=bool),
        "occlusion": occluded_frames(spec),
        "distractor": distractor_near_frames(spec),
        "clean": clean_frames(spec),
    }


def evaluate(runs: list[TrackRun], specs: list[SequenceSpec]) -> Metrics:
    """Pooled metrics over aligned (run, spec) pairs."""
    if len(runs) != len(specs):
        raise ValidationError(f"{len(runs)} runs but {len(specs)} specs")
    for run, spec in zip(runs, specs):
        if len(run) != spec.frames:
            raise ValidationError("run length does not match its spec")
    all_ious = np.concatenate([run.ious() for run in runs]) if runs else np.array([])
    all_agree = np.concatenate([run.agree_flags() for run in runs]) if runs else np.array([])
    attr_ious = {name: [] for name in ATTRIBUTES}
    for run, spec in zip(runs, specs):
        masks = attribute_masks(spec)
        ious = run.ious()
        for name in ATTRIBUTES:
            attr_ious[name].append(ious[masks[name]])
    attr_mean = {}
    attr_n = {}
    for name in ATTRIBUTES:
        pooled = np.concatenate(attr_ious[name]) if attr_ious[name] else np.array([])
        attr_n[name] = int(pooled.size)
        attr_mean[name] = float(pooled.mean()) if pooled.size else math.nan
    return Metrics(
        mean_iou=float(all_ious.mean()) if all_ious.size else math.nan,
        suc_auc=suc_auc(all_ious),
        attr_mean_iou=attr_mean,
        argmax_rate=float(all_agree.mean()) if all_agree.size else math.nan,
        n_frames=int(all_ious.size),
        attr_n=attr_n,
    )


def attribute_mean_per_run(run: TrackRun, spec: SequenceSpec, attribute: str) -> float:
    """Mean IoU of one run restricted to an attribute partition (nan if empty)."""
    mask = attribute_masks(spec)[attribute]
    vals = run.ious()[mask]
    return float(vals.mean()) if vals.size else math.nan


def sign_test_greater(a, b) -> float:
    """One-sided paired sign test p-value for the hypothesis a > b.

    Ties (and pairs with a nan) are dropped; under the null each remaining
    pair is a fair coin, so the p-value is the exact upper binomial tail of
    the observed win count. Returns 1.0 when no informative pairs remain.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError("sign test requires paired samples of equal length")
    keep = ~(np.isnan(a) | np.isnan(b))
    wins = int(np.sum(a[keep] > b[keep]))
    losses = int(np.sum(a[keep] < b[keep]))
    n = wins + losses
    if n == 0:
        return 1.0
    tail = sum(math.comb(n, k) for k in range(wins, n + 1))
    return tail / 2.0**n
