"""The online tracking loop with reference updates and per-mode editing.

Three modes share one loop:

- ``semantic_only``: no geometric pathway; weights are the semantic
  prediction and scoring runs on semantic features.
- ``naive_fusion``: the geometric perturbation is added unprojected
  (projector forced to the identity) and scoring runs on fused features.
- ``nullspace_edit``: the perturbation is projected into the null space of
  the semantic feature correlation before combination.

Two reference slots are kept: slot A stays pinned to frame 0 (ground-truth
box), slot B follows the most recent frame whose score peak cleared the
confidence gate relative to the frame-0 peak.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from nulltrack.boxes import BoxLTRB, iou
from nulltrack.editing import EditContext, ScoreMap, build_edit_context, edit_and_localize, localize
from nulltrack.errors import ValidationError
from nulltrack.fusion import AlignParams, GateParams, align, fuse, gate_mask, init_fusion_params
from nulltrack.linalg import Projector, ThresholdPolicy
from nulltrack.predictor import (
    LabelMap,
    PredictorParams,
    WeightVector,
    default_label_sigma,
    encode_reference,
    init_embedding,
    init_predictor_params,
    make_label_map,
    predict_weights,
)
from nulltrack.regression import RegDecParams, constant_extent_params, regress_box
from nulltrack.scenes import Scene
from nulltrack.tensorio import FeatureMap

MODES = ("semantic_only", "naive_fusion", "nullspace_edit")

STAGES = ("fuse", "predict", "edit", "localize", "regress")

LABEL_SIGMA_FLOOR = 0.25


@dataclass(frozen=True)
class TrackerConfig:
    """Everything the loop needs besides the scene itself.

    With ``complementary_geo_head`` the geometry head is additionally
    orthogonalized, at run start, against the target's frame-0 semantic
    signature, so the perturbation weights carry geometric and residual
    evidence rather than duplicating the semantic template.
    """

    align_params: AlignParams
    gate_params: GateParams
    predictor_params: PredictorParams
    e_fg: np.ndarray
    regdec_params: RegDecParams | None = None
    policy: ThresholdPolicy = ThresholdPolicy()
    ridge: float | None = None
    projector_source: str = "refs_and_current"
    refresh_stride: int = 1
    ref_update_theta: float = 0.5
    label_sigma_factor: float = 0.25
    force_projector: str = "none"
    complementary_geo_head: bool = False
    collect_timings: bool = False

    def __post_init__(self):
        if self.projector_source not in ("refs_and_current", "refs_only"):
            raise ValidationError(f"unknown projector source {self.projector_source!r}")
        if self.force_projector not in ("none", "identity", "zero"):
            raise ValidationError(f"unknown projector override {self.force_projector!r}")
        if self.refresh_stride < 1:
            raise ValidationError("refresh stride must be >= 1")
        if self.label_sigma_factor <= 0:
            raise ValidationError("label sigma factor must be positive")


GEO_HEAD_GAIN = 1.2


def matched_filter_params(c: int, e_fg: np.ndarray) -> PredictorParams:
    """Analytically constructed predictor that extracts label-located features.

    The encoder is a passthrough (zero maps leave the residual stream
    untouched); the decoder attends with the raw embedding against identity
    key/value maps, so attention concentrates on cells where the label
    injection made tokens align with the embedding. The heads project the
    embedding direction back out, leaving an approximate matched filter for
    the target's feature signature; the geometry head is additionally scaled
    down so the perturbation acts as a lightweight complement rather than an
    equal partner. Untrained but functional, which is what the synthetic
    studies need.
    """
    zeros = np.zeros((c, c))
    eye = np.eye(c)
    unit = np.asarray(e_fg, dtype=np.float64)
    unit = unit / np.linalg.norm(unit)
    head = eye - np.outer(unit, unit)
    return PredictorParams(
        enc_q=zeros, enc_k=zeros, enc_v=zeros, enc_o=zeros,
        dec_q=eye, dec_k=eye, dec_v=eye, dec_o=eye,
        head_sem_w=head, head_sem_b=np.zeros(c),
        head_geo_w=GEO_HEAD_GAIN * head, head_geo_b=np.zeros(c),
    )


def default_tracker_config(
    c_sem: int,
    c_geo: int,
    grid_hw: tuple[int, int],
    seed: int = 0,
    predictor: str = "analytic",
    embedding_gain: float | None = None,
    **overrides,
) -> TrackerConfig:
    """Seeded fusion params plus an analytic (or seeded) predictor."""
    align_p, gate_p = init_fusion_params(c_sem, c_geo, grid_hw, seed)
    e_fg = init_embedding(c_sem, seed + 1, gain=embedding_gain)
    if predictor == "analytic":
        pred = matched_filter_params(c_sem, e_fg)
        overrides.setdefault("complementary_geo_head", True)
    elif predictor == "seeded":
        pred = init_predictor_params(c_sem, seed + 2)
    else:
        raise ValidationError(f"unknown predictor init {predictor!r}")
    return TrackerConfig(
        align_params=align_p, gate_params=gate_p, predictor_params=pred, e_fg=e_fg,
        **overrides,
    )


@dataclass(frozen=True)
class FrameRecord:
    frame: int
    box: BoxLTRB
    iou: float
    argmax_agree: bool
    peak: float
    retained_rank: int
    timings_ms: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TrackRun:
    mode: str
    records: tuple[FrameRecord, ...]
    frame0_peak: float

    def __len__(self) -> int:
        return len(self.records)

    def ious(self) -> np.ndarray:
        return np.array([r.iou for r in self.records])

    def boxes(self) -> list[BoxLTRB]:
        return [r.box for r in self.records]

    def agree_flags(self) -> np.ndarray:
        return np.array([r.argmax_agree for r in self.records])


@dataclass
class _RefSlot:
    sem: FeatureMap
    fused: FeatureMap | None
    label: LabelMap
    enc_sem: FeatureMap | None = None
    enc_fused: FeatureMap | None = None


class _StageClock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.times = {}

    def run(self, stage, fn):
        if not self.enabled:
            return fn()
        t0 = time.perf_counter()
        out = fn()
        self.times[stage] = (time.perf_counter() - t0) * 1e3
        return out


def _label_for_box(box: BoxLTRB, grid_hw, factor: float) -> LabelMap:
    """Label map for a (possibly drifted) box; the center is clamped into the
    grid and sigma is floored so degenerate predictions stay usable."""
    h, w = grid_hw
    row_c, col_c = box.center
    eps = 1e-6
    row_c = min(max(row_c, 0.0), h - eps)
    col_c = min(max(col_c, 0.0), w - eps)
    half_h = 0.5 * box.height
    half_w = 0.5 * box.width
    clamped = BoxLTRB(col_c - half_w, row_c - half_h, col_c + half_w, row_c + half_h)
    sigma = max(default_label_sigma(clamped, factor), LABEL_SIGMA_FLOOR)
    return make_label_map(clamped, (h, w), sigma)


def _fuse_frame(v_s: FeatureMap, v_g: FeatureMap, cfg: TrackerConfig) -> FeatureMap:
    aligned = align(v_g, cfg.align_params)
    mask = gate_mask(v_s, aligned, cfg.gate_params)
    return fuse(v_s, aligned, mask)


def _identity_context(w_sem: WeightVector, delta: WeightVector, c: int) -> EditContext:
    return EditContext(
        w_sem=w_sem, delta=delta,
        projector=Projector(p=np.eye(c), retained_rank=c),
        source="forced-identity", ridge=0.0,
    )


def _zero_context(w_sem: WeightVector, delta: WeightVector, c: int) -> EditContext:
    return EditContext(
        w_sem=w_sem, delta=delta,
        projector=Projector(p=np.zeros((c, c)), retained_rank=0),
        source="forced-zero", ridge=0.0,
    )


def run_tracker(scene: Scene, mode: str, cfg: TrackerConfig) -> TrackRun:
    """Track the scene's target in the given mode; deterministic per inputs."""
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    if len(scene) == 0:
        raise ValidationError("cannot track an empty sequence")
    spec = scene.spec
    grid_hw = spec.grid
    c = spec.c_sem
    needs_fusion = mode != "semantic_only"

    regdec = cfg.regdec_params
    if regdec is None:
        regdec = constant_extent_params(c, scene.frames[0].gt_box)

    params = cfg.predictor_params
    if cfg.complementary_geo_head:
        first = scene.frames[0]
        r0, c0 = (int(round(v)) for v in first.gt_box.center)
        r0 = min(max(r0, 0), first.v_s.height - 1)
        c0 = min(max(c0, 0), first.v_s.width - 1)
        signature = first.v_s.array[:, r0, c0].astype(np.float64)
        norm = np.linalg.norm(signature)
        if norm > 0:
            unit = signature / norm
            params = replace(
                params,
                head_geo_w=params.head_geo_w @ (np.eye(c) - np.outer(unit, unit)),
            )
    cfg = replace(cfg, predictor_params=params)

    def make_slot(frame, box) -> _RefSlot:
        label = _label_for_box(box, grid_hw, cfg.label_sigma_factor)
        fused = _fuse_frame(frame.v_s, frame.v_g, cfg) if needs_fusion else None
        slot = _RefSlot(sem=frame.v_s, fused=fused, label=label)
        slot.enc_sem = encode_reference(slot.sem, label, cfg.e_fg)
        if needs_fusion:
            slot.enc_fused = encode_reference(slot.fused, label, cfg.e_fg)
        return slot

    slot_a = make_slot(scene.frames[0], scene.frames[0].gt_box)
    slot_b = slot_a

    frame0_peak = None
    last_projector: Projector | None = None
    last_ridge = 0.0
    records = []

    for t, frame in enumerate(scene.frames):
        clock = _StageClock(cfg.collect_timings)
        z_cur = clock.run(
            "fuse",
            (lambda: _fuse_frame(frame.v_s, frame.v_g, cfg)) if needs_fusion else (lambda: frame.v_s),
        )

        def predict_stage():
            w_sem = predict_weights(
                [slot_a.enc_sem, slot_b.enc_sem], frame.v_s, cfg.e_fg,
                cfg.predictor_params, head="semantic",
            )
            if needs_fusion:
                delta = predict_weights(
                    [slot_a.enc_fused, slot_b.enc_fused], z_cur, cfg.e_fg,
                    cfg.predictor_params, head="geometry",
                )
            else:
                delta = WeightVector(np.zeros(c), role="perturbation")
            return w_sem, delta

        w_sem, delta = clock.run("predict", predict_stage)

        def edit_stage():
            nonlocal last_projector, last_ridge
            if mode == "semantic_only":
                return _zero_context(w_sem, delta, c)
            if mode == "naive_fusion" or cfg.force_projector == "identity":
                return _identity_context(w_sem, delta, c)
            if cfg.force_projector == "zero":
                return _zero_context(w_sem, delta, c)
            if last_projector is None or t % cfg.refresh_stride == 0:
                sources = [slot_a.sem, slot_b.sem]
                if cfg.projector_source == "refs_and_current":
                    sources.append(frame.v_s)
                ctx = build_edit_context(sources, w_sem, delta, ridge=cfg.ridge, policy=cfg.policy)
                last_projector = ctx.projector
                last_ridge = ctx.ridge
                return ctx
            return EditContext(
                w_sem=w_sem, delta=delta, projector=last_projector,
                source="cached", ridge=last_ridge,
            )

        ctx = clock.run("edit", edit_stage)

        def localize_stage():
            score = edit_and_localize(ctx, z_cur)
            if mode == "semantic_only":
                base = score
                agree = True
            else:
                base = localize(w_sem, z_cur)
                agree = score.argmax_rc == base.argmax_rc
            return score, base, agree

        score, base, agree = clock.run("localize", localize_stage)
        _, box = clock.run("regress", lambda: regress_box(score, z_cur, regdec))

        frame_iou = iou(box, frame.gt_box)
        peak = score.argmax_value
        # The reference-update gate runs on the semantic-baseline peak: it
        # collapses when the target's semantics are occluded, so slot B never
        # captures a reference whose semantic content is gone, while the
        # edited peak (which geometry can hold up) decides localization.
        sem_peak = base.argmax_value
        if t == 0:
            frame0_peak = peak
            frame0_sem_peak = sem_peak
        records.append(
            FrameRecord(
                frame=t, box=box, iou=frame_iou, argmax_agree=bool(agree),
                peak=peak, retained_rank=ctx.projector.retained_rank,
                timings_ms=dict(clock.times),
            )
        )

        if t > 0 and not math.isinf(cfg.ref_update_theta):
            if sem_peak >= cfg.ref_update_theta * frame0_sem_peak:
                slot_b = make_slot(frame, box)

    return TrackRun(mode=mode, records=tuple(records), frame0_peak=frame0_peak)
