"""Seeded synthetic scene generation.

A scene places a target with fixed seeded semantic and geometric signature
vectors as Gaussian blobs along its trajectory. Distractors emit blended
signatures (alpha controls semantic similarity, beta geometric similarity).
Occlusion events zero a seeded channel subset of the semantic features inside
a region while leaving geometry intact, mirroring the premise that geometric
evidence survives partial occlusion. Seeded Gaussian noise is added
everywhere; occlusion zeroing is applied last so occluded channels are
exactly zero inside the region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from nulltrack.boxes import BoxLTRB
from nulltrack.errors import ValidationError
from nulltrack.tensorio import FeatureMap


@dataclass(frozen=True)
class DistractorSpec:
    """Per-frame boxes plus similarity mix factors and blob amplitude.

    Amplitudes may be per-frame (tuples as long as the trajectory) to model
    distance dimming: a distractor far from the camera or target emits weaker
    features than one at close range. Semantic and geometric amplitudes are
    separate because appearance salience and geometric extent need not move
    together (a close pass can look bright while its 3D footprint stays
    comparable to the target's).
    """

    boxes: tuple[BoxLTRB, ...]
    alpha: float
    beta: float
    amplitudes: tuple[float, ...] | float = 1.0
    geo_amplitudes: tuple[float, ...] | float | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must be in [0,1], got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValidationError(f"beta must be in [0,1], got {self.beta}")

        def as_schedule(amps, name):
            if amps is None:
                return None
            if isinstance(amps, (int, float)):
                amps = (float(amps),) * len(self.boxes)
            else:
                amps = tuple(float(a) for a in amps)
            if len(amps) != len(self.boxes):
                raise ValidationError(f"{name} schedule length must match the trajectory")
            if any(a < 0 for a in amps):
                raise ValidationError(f"{name} must be nonnegative")
            return amps

        sem_amps = as_schedule(self.amplitudes, "distractor amplitudes")
        geo_amps = as_schedule(self.geo_amplitudes, "distractor geometric amplitudes")
        object.__setattr__(self, "amplitudes", sem_amps)
        object.__setattr__(self, "geo_amplitudes", geo_amps if geo_amps is not None else sem_amps)


@dataclass(frozen=True)
class OcclusionEvent:
    """Zero a fraction rho of semantic channels inside ``region`` over
    frames start..end (inclusive)."""

    start: int
    end: int
    region: BoxLTRB
    rho: float

    def __post_init__(self):
        if self.start > self.end:
            raise ValidationError("occlusion span must have start <= end")
        if not 0.0 <= self.rho <= 1.0:
            raise ValidationError(f"rho must be in [0,1], got {self.rho}")

    def covers(self, t: int) -> bool:
        return self.start <= t <= self.end


@dataclass(frozen=True)
class SequenceSpec:
    """Complete seeded description of a synthetic sequence."""

    frames: int
    grid: tuple[int, int]
    c_sem: int
    c_geo: int
    target_boxes: tuple[BoxLTRB, ...]
    distractors: tuple[DistractorSpec, ...] = ()
    occlusions: tuple[OcclusionEvent, ...] = ()
    noise_std: float = 0.0
    seed: int = 0
    near_radius: float = 4.0
    geo_gain: float = 1.0

    def __post_init__(self):
        h, w = self.grid
        if self.frames < 1:
            raise ValidationError("sequence needs at least one frame")
        if self.c_sem < 1 or self.c_geo < 1:
            raise ValidationError("channel counts must be positive")
        if len(self.target_boxes) != self.frames:
            raise ValidationError("target trajectory length must equal frame count")
        for box in self.target_boxes:
            _check_in_grid(box, h, w, "target")
        for d in self.distractors:
            if len(d.boxes) != self.frames:
                raise ValidationError("distractor trajectory length must equal frame count")
            for box in d.boxes:
                _check_in_grid(box, h, w, "distractor")
        for occ in self.occlusions:
            if occ.end >= self.frames:
                raise ValidationError("occlusion span exceeds sequence length")
        if self.noise_std < 0:
            raise ValidationError("noise std must be nonnegative")
        if self.near_radius <= 0:
            raise ValidationError("near radius must be positive")
        if self.geo_gain < 0:
            raise ValidationError("geometric gain must be nonnegative")


@dataclass(frozen=True)
class Frame:
    v_s: FeatureMap
    v_g: FeatureMap
    gt_box: BoxLTRB


@dataclass(frozen=True)
class Scene:
    spec: SequenceSpec
    frames: tuple[Frame, ...]

    def __len__(self) -> int:
        return len(self.frames)


def _check_in_grid(box: BoxLTRB, h: int, w: int, what: str) -> None:
    if box.left < 0 or box.top < 0 or box.right > w or box.bottom > h:
        raise ValidationError(f"{what} box {box} leaves the {h}x{w} grid")


def _blob(center_rc, sigma, h, w) -> np.ndarray:
    rows = np.arange(h, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    d2 = (rows[:, None] - center_rc[0]) ** 2 + (cols[None, :] - center_rc[1]) ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma))


def _blob_for_box(box: BoxLTRB, h: int, w: int) -> np.ndarray:
    sigma = max(0.25 * min(box.width, box.height), 1e-6)
    return _blob(box.center, sigma, h, w)


def _region_mask(region: BoxLTRB, h: int, w: int) -> np.ndarray:
    rows = np.arange(h)
    cols = np.arange(w)
    in_rows = (rows >= region.top) & (rows < region.bottom)
    in_cols = (cols >= region.left) & (cols < region.right)
    return in_rows[:, None] & in_cols[None, :]


def _signature(rng, c: int) -> np.ndarray:
    """Signed channel signature with magnitudes bounded away from zero, so no
    channel is noise-dominated after whitening."""
    return rng.choice((-1.0, 1.0), size=c) * rng.uniform(0.6, 1.4, size=c)


def gen_scene(spec: SequenceSpec) -> Scene:
    """Render the per-frame semantic/geometric feature maps; deterministic per seed."""
    h, w = spec.grid
    root = np.random.SeedSequence(spec.seed)
    sig_rng = np.random.default_rng(root.spawn(1)[0])
    noise_rng = np.random.default_rng(root.spawn(2)[1])

    s_t = _signature(sig_rng, spec.c_sem)
    g_t = spec.geo_gain * _signature(sig_rng, spec.c_geo)
    distractor_sigs = []
    for d in spec.distractors:
        s_d = _signature(sig_rng, spec.c_sem)
        g_d = spec.geo_gain * _signature(sig_rng, spec.c_geo)
        distractor_sigs.append(
            (d.alpha * s_t + (1 - d.alpha) * s_d, d.beta * g_t + (1 - d.beta) * g_d)
        )
    occ_channels = []
    occ_masks = []
    for occ in spec.occlusions:
        k = math.ceil(occ.rho * spec.c_sem)
        occ_channels.append(sig_rng.choice(spec.c_sem, size=k, replace=False) if k else np.array([], dtype=int))
        occ_masks.append(_region_mask(occ.region, h, w))

    frames = []
    for t in range(spec.frames):
        gt = spec.target_boxes[t]
        sem = np.zeros((spec.c_sem, h, w))
        geo = np.zeros((spec.c_geo, h, w))
        blob = _blob_for_box(gt, h, w)
        sem += s_t[:, None, None] * blob
        geo += g_t[:, None, None] * blob
        for d, (sig_s, sig_g) in zip(spec.distractors, distractor_sigs):
            dblob = _blob_for_box(d.boxes[t], h, w)
            sem += sig_s[:, None, None] * (d.amplitudes[t] * dblob)
            geo += sig_g[:, None, None] * (d.geo_amplitudes[t] * dblob)
        if spec.noise_std > 0:
            sem += noise_rng.normal(0.0, spec.noise_std, size=sem.shape)
            geo += noise_rng.normal(0.0, spec.noise_std, size=geo.shape)
        for occ, channels, mask in zip(spec.occlusions, occ_channels, occ_masks):
            if occ.covers(t) and len(channels):
                for ch in channels:
                    sem[ch, mask] = 0.0
        frames.append(
            Frame(
                v_s=FeatureMap.from_array(sem, "semantic"),
                v_g=FeatureMap.from_array(geo, "geometric"),
                gt_box=gt,
            )
        )
    return Scene(spec=spec, frames=tuple(frames))


def occluded_frames(spec: SequenceSpec) -> np.ndarray:
    """Boolean mask of frames covered by any occlusion event."""
    mask = np.zeros(spec.frames, dtype=bool)
    for occ in spec.occlusions:
        mask[occ.start : occ.end + 1] = True
    return mask


def distractor_near_frames(spec: SequenceSpec) -> np.ndarray:
    """Frames where some distractor center is within ``near_radius`` of the target."""
    mask = np.zeros(spec.frames, dtype=bool)
    for t in range(spec.frames):
        tc = spec.target_boxes[t].center
        for d in spec.distractors:
            dc = d.boxes[t].center
            if math.hypot(tc[0] - dc[0], tc[1] - dc[1]) <= spec.near_radius:
                mask[t] = True
                break
    return mask


def clean_frames(spec: SequenceSpec) -> np.ndarray:
    return ~(occluded_frames(spec) | distractor_near_frames(spec))


@dataclass(frozen=True)
class SceneRecipe:
    """Procedural family of scenes; a concrete SequenceSpec is drawn per seed.

    The target follows a smooth bounded Lissajous path. Distractors orbit the
    target with periodic close passes (their distance oscillates between
    ``pass_dist`` and ``far_dist``), which concentrates the
    distractor-proximity attribute on the passes. One occlusion event covers
    the target's swept region over the configured span.
    """

    frames: int = 60
    height: int = 18
    width: int = 18
    c_sem: int = 16
    c_geo: int = 16
    box_size: float = 4.5
    noise_std: float = 0.02
    n_distractors: int = 2
    distractor_alpha: float = 0.2
    distractor_beta: float = 1.0
    distractor_amplitude: float = 1.2
    distractor_geo_amplitude: float = 1.6
    pass_dist: float = 2.2
    far_dist: float = 8.0
    pass_width: float = 5.0
    passes_per_distractor: int = 2
    occlusion: bool = True
    occlusion_start: int = 24
    occlusion_end: int = 34
    occlusion_rho: float = 0.95
    near_radius: float = 4.0
    geo_gain: float = 2.0

    def __post_init__(self):
        if self.frames < 1:
            raise ValidationError("recipe needs frames >= 1")
        if min(self.height, self.width) < 4:
            raise ValidationError("grid must be at least 4x4")
        if not 0 < self.box_size <= min(self.height, self.width):
            raise ValidationError("box size must fit the grid")
        if self.occlusion and not (0 <= self.occlusion_start <= self.occlusion_end < self.frames):
            raise ValidationError("occlusion span must lie within the sequence")


def _clamped_box(center_r, center_c, size, h, w) -> BoxLTRB:
    half = 0.5 * size
    center_r = min(max(center_r, half), h - half)
    center_c = min(max(center_c, half), w - half)
    return BoxLTRB(center_c - half, center_r - half, center_c + half, center_r + half)


def build_sequence_spec(recipe: SceneRecipe, seed: int) -> SequenceSpec:
    """Draw one concrete seeded sequence from the recipe."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA11CE)))
    h, w = recipe.height, recipe.width
    half = 0.5 * recipe.box_size
    t_axis = np.arange(recipe.frames, dtype=np.float64)

    amp_r = (h / 2 - half - 1.0) * rng.uniform(0.45, 0.8)
    amp_c = (w / 2 - half - 1.0) * rng.uniform(0.45, 0.8)
    freq_r = rng.uniform(0.5, 1.5)
    freq_c = rng.uniform(0.5, 1.5)
    phase_r = rng.uniform(0, 2 * np.pi)
    phase_c = rng.uniform(0, 2 * np.pi)
    rows = h / 2 + amp_r * np.sin(2 * np.pi * freq_r * t_axis / recipe.frames + phase_r)
    cols = w / 2 + amp_c * np.sin(2 * np.pi * freq_c * t_axis / recipe.frames + phase_c)
    target = tuple(_clamped_box(r, c, recipe.box_size, h, w) for r, c in zip(rows, cols))

    # Close passes are scheduled outside the occlusion window (with margin)
    # and away from the opening frames that seed the pinned reference, so the
    # occlusion and distractor attribute partitions probe different failure
    # modes rather than compounding in the same frames.
    margin = 6
    allowed = [
        t for t in range(12, recipe.frames - margin)
        if not (
            recipe.occlusion
            and recipe.occlusion_start - margin <= t <= recipe.occlusion_end + margin
        )
    ]
    if not allowed:
        allowed = list(range(recipe.frames))

    distractors = []
    for _ in range(recipe.n_distractors):
        theta0 = rng.uniform(0, 2 * np.pi)
        omega = rng.uniform(0.3, 0.8) * 2 * np.pi / recipe.frames
        n_pass = min(recipe.passes_per_distractor, len(allowed))
        pass_times = rng.choice(allowed, size=n_pass, replace=False)
        bump = np.zeros_like(t_axis)
        for t_k in pass_times:
            bump += np.exp(-((t_axis - t_k) ** 2) / (2.0 * recipe.pass_width**2))
        bump = np.minimum(bump, 1.0)
        dist = recipe.far_dist - (recipe.far_dist - recipe.pass_dist) * bump
        theta = theta0 + omega * t_axis
        boxes = []
        for t in range(recipe.frames):
            dr = dist[t] * np.sin(theta[t])
            dc = dist[t] * np.cos(theta[t])
            # Prefer the offset direction that stays inside the grid; plain
            # clamping can otherwise pin a "far" distractor onto the target
            # when both sit near a border.
            half = 0.5 * recipe.box_size
            r_plus, c_plus = rows[t] + dr, cols[t] + dc
            fits_plus = (half <= r_plus <= h - half) and (half <= c_plus <= w - half)
            if fits_plus:
                r_d, c_d = r_plus, c_plus
            else:
                r_d, c_d = rows[t] - dr, cols[t] - dc
            boxes.append(_clamped_box(r_d, c_d, recipe.box_size, h, w))
        # Distance dimming: a distractor at far range emits proportionally
        # weaker features than at its closest pass. At the pass the object
        # comes closer to the camera than the target, so its geometric
        # footprint grows past the target's while its appearance salience
        # rises only mildly; far away both signals fade together.
        dimming = [min(1.0, recipe.pass_dist / dist[t]) for t in range(recipe.frames)]
        amplitudes = tuple(float(recipe.distractor_amplitude * dim) for dim in dimming)
        geo_amplitudes = tuple(
            float(recipe.distractor_geo_amplitude * dim) for dim in dimming
        )
        distractors.append(
            DistractorSpec(
                boxes=tuple(boxes),
                alpha=recipe.distractor_alpha,
                beta=recipe.distractor_beta,
                amplitudes=amplitudes,
                geo_amplitudes=geo_amplitudes,
            )
        )

    occlusions = ()
    if recipe.occlusion:
        span = range(recipe.occlusion_start, recipe.occlusion_end + 1)
        left = min(target[t].left for t in span) - 1.0
        top = min(target[t].top for t in span) - 1.0
        right = max(target[t].right for t in span) + 1.0
        bottom = max(target[t].bottom for t in span) + 1.0
        region = BoxLTRB(max(left, 0.0), max(top, 0.0), min(right, w), min(bottom, h))
        occlusions = (
            OcclusionEvent(
                start=recipe.occlusion_start,
                end=recipe.occlusion_end,
                region=region,
                rho=recipe.occlusion_rho,
            ),
        )

    return SequenceSpec(
        frames=recipe.frames,
        grid=(h, w),
        c_sem=recipe.c_sem,
        c_geo=recipe.c_geo,
        target_boxes=target,
        distractors=tuple(distractors),
        occlusions=occlusions,
        noise_std=recipe.noise_std,
        seed=seed,
        near_radius=recipe.near_radius,
        geo_gain=recipe.geo_gain,
    )
