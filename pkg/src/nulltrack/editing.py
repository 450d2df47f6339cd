"""Per-frame weight editing: projector construction, combination, scoring.

Editing rewrites the localization weights as

    p = (W_sem + P delta) * z_cur

where P is the null-space projector of the (whitened, ridge-regularized)
semantic feature correlation. With P = 0 scoring degenerates to the semantic
weights alone; with P = I it is the naive fused update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nulltrack.errors import ValidationError
from nulltrack.linalg import (
    Projector,
    ThresholdPolicy,
    default_ridge,
    nullspace_projector,
    project,
    regularized_correlation,
    whiten_matrix,
)
from nulltrack.predictor import WeightVector
from nulltrack.tensorio import FeatureMap, write_named_tensors


@dataclass(frozen=True)
class ScoreMap:
    """H x W classification response with its argmax location.

    Ties break to the lowest row-major index so evaluation is deterministic.
    """

    values: np.ndarray
    argmax_rc: tuple[int, int]
    argmax_value: float

    @classmethod
    def from_array(cls, values: np.ndarray) -> "ScoreMap":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError("score map must be two-dimensional")
        flat = int(np.argmax(values))
        rc = (flat // values.shape[1], flat % values.shape[1])
        return cls(values=values, argmax_rc=rc, argmax_value=float(values[rc]))


@dataclass(frozen=True)
class EditContext:
    """The full per-frame edit state: weights, perturbation and projector."""

    w_sem: WeightVector
    delta: WeightVector
    projector: Projector
    source: str
    ridge: float

    def __post_init__(self):
        c = self.projector.dim
        if len(self.w_sem) != c or len(self.delta) != c:
            raise ValidationError("weight vectors and projector disagree on C")

    def projected_delta(self) -> WeightVector:
        return WeightVector(project(self.projector, self.delta.w), role="projected")

    def combined_weights(self) -> WeightVector:
        return WeightVector(self.w_sem.w + self.projected_delta().w, role="combined")


def localize(weights, z: FeatureMap) -> ScoreMap:
    """Channel-wise inner product of the weights at every location."""
    w = weights.w if isinstance(weights, WeightVector) else np.asarray(weights, dtype=np.float64)
    if w.shape != (z.channels,):
        raise ValidationError(
            f"weights have shape {w.shape}, features have C={z.channels}"
        )
    scores = np.tensordot(w, z.array.astype(np.float64), axes=([0], [0]))
    return ScoreMap.from_array(scores)


def build_edit_context(
    sem_feats: list[FeatureMap],
    w_sem: WeightVector,
    delta: WeightVector,
    ridge: float | None = None,
    policy: ThresholdPolicy = ThresholdPolicy(),
) -> EditContext:
    """Build the projector from semantic feature maps and store the edit state.

    The maps' spatial columns are concatenated into one C x N batch, whitened
    jointly, and turned into the regularized correlation matrix. ``ridge=None``
    selects the default proportional to average channel energy.
    """
    if not sem_feats:
        raise ValidationError("need at least one semantic feature map")
    c = sem_feats[0].channels
    for fm in sem_feats:
        if fm.channels != c:
            raise ValidationError("semantic maps must share the channel count")
    raw = np.concatenate([fm.columns() for fm in sem_feats], axis=1)
    zm = whiten_matrix(raw)
    if ridge is None:
        ridge = default_ridge(zm)
    m = regularized_correlation(zm, ridge)
    proj = nullspace_projector(m, policy)
    return EditContext(
        w_sem=w_sem, delta=delta, projector=proj,
        source=f"{len(sem_feats)} semantic maps", ridge=float(ridge),
    )


def edit_and_localize(ctx: EditContext, z_cur: FeatureMap) -> ScoreMap:
    """Score the current features with the edited weights W_sem + P delta."""
    return localize(ctx.combined_weights(), z_cur)


def dump_context(ctx: EditContext, directory) -> None:
    """Write W_sem, delta and the projector as GTED files for debugging."""
    write_named_tensors(
        directory,
        {"w_sem": ctx.w_sem.w, "delta": ctx.delta.w, "projector": ctx.projector.p},
    )
