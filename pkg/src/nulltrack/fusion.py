"""Align geometric features to the semantic grid and fuse through a gate.

The alignment network is realized at desk scale as a bilinear resample plus a
per-pixel (1x1) linear channel map; the gate is a 1x1 map over the channel
concatenation of both modalities followed by a sigmoid. Fusion is

    F = v_s + m (.) Align(v_g)

with (.) the elementwise product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nulltrack.errors import ValidationError
from nulltrack.tensorio import FeatureMap, Tensor, read_named_tensor, write_named_tensors


@dataclass(frozen=True)
class AlignParams:
    """Per-pixel linear map (C x C') with bias, applied after resampling to
    ``target_hw``."""

    projection: np.ndarray
    bias: np.ndarray
    target_hw: tuple[int, int]

    def __post_init__(self):
        proj = np.asarray(self.projection, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64)
        if proj.ndim != 2:
            raise ValidationError("align projection must be a C x C' matrix")
        if bias.shape != (proj.shape[0],):
            raise ValidationError("align bias length must match projection rows")
        if not (np.all(np.isfinite(proj)) and np.all(np.isfinite(bias))):
            raise ValidationError("align params must be finite")
        object.__setattr__(self, "projection", proj)
        object.__setattr__(self, "bias", bias)


@dataclass(frozen=True)
class GateParams:
    """1x1 gate conv: C x (2C) weights plus length-C bias, before sigmoid."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != 2 * w.shape[0]:
            raise ValidationError("gate weights must have shape C x 2C")
        if b.shape != (w.shape[0],):
            raise ValidationError("gate bias length must match gate rows")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("gate params must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class GatingMask:
    """Elementwise [0,1] mask modulating the geometric contribution."""

    tensor: Tensor

    def __post_init__(self):
        arr = self.tensor.values
        if arr.ndim != 3:
            raise ValidationError("gating mask needs dims [C,H,W]")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError("gating mask values must lie in [0,1]")

    @property
    def array(self) -> np.ndarray:
        return self.tensor.values


def init_fusion_params(c_sem: int, c_geo: int, target_hw, seed: int) -> tuple[AlignParams, GateParams]:
    """Seeded Gaussian init, std 1/sqrt(fan_in) per map."""
    rng = np.random.default_rng(seed)
    proj = rng.normal(0.0, 1.0 / np.sqrt(c_geo), size=(c_sem, c_geo))
    a_bias = rng.normal(0.0, 1.0 / np.sqrt(c_geo), size=c_sem)
    gw = rng.normal(0.0, 1.0 / np.sqrt(2 * c_sem), size=(c_sem, 2 * c_sem))
    gb = rng.normal(0.0, 1.0 / np.sqrt(2 * c_sem), size=c_sem)
    return AlignParams(proj, a_bias, tuple(target_hw)), GateParams(gw, gb)


def zero_align_params(c_sem: int, c_geo: int, target_hw) -> AlignParams:
    """Align params that null the geometric pathway (fused == semantic)."""
    return AlignParams(np.zeros((c_sem, c_geo)), np.zeros(c_sem), tuple(target_hw))


def save_fusion_params(directory, align: AlignParams, gate: GateParams) -> None:
    write_named_tensors(
        directory,
        {
            "align_proj": align.projection,
            "align_bias": align.bias,
            "gate_w": gate.weights,
            "gate_b": gate.bias,
        },
    )


def load_fusion_params(directory, target_hw) -> tuple[AlignParams, GateParams]:
    """Load align_proj/align_bias/gate_w/gate_b GTED files from *directory*."""
    align = AlignParams(
        read_named_tensor(directory, "align_proj"),
        read_named_tensor(directory, "align_bias"),
        tuple(target_hw),
    )
    gate = GateParams(
        read_named_tensor(directory, "gate_w"), read_named_tensor(directory, "gate_b")
    )
    return align, gate


def bilinear_resample(values: np.ndarray, target_hw) -> np.ndarray:
    """Resample [C,H',W'] to [C,H,W] with corner-aligned bilinear weights."""
    c, src_h, src_w = values.shape
    dst_h, dst_w = target_hw
    if (src_h, src_w) == (dst_h, dst_w):
        return values.astype(np.float64)

    def grid(src, dst):
        if dst == 1 or src == 1:
            pos = np.zeros(dst)
        else:
            pos = np.arange(dst) * (src - 1) / (dst - 1)
        lo = np.clip(np.floor(pos).astype(int), 0, src - 1)
        hi = np.minimum(lo + 1, src - 1)
        frac = pos - lo
        return lo, hi, frac

    r0, r1, fr = grid(src_h, dst_h)
    c0, c1, fc = grid(src_w, dst_w)
    v = values.astype(np.float64)
    top = v[:, r0][:, :, c0] * (1 - fc) + v[:, r0][:, :, c1] * fc
    bot = v[:, r1][:, :, c0] * (1 - fc) + v[:, r1][:, :, c1] * fc
    return top * (1 - fr[None, :, None]) + bot * fr[None, :, None]


def align(v_g: FeatureMap, params: AlignParams) -> FeatureMap:
    """Resample a geometric map to the target grid and remap its channels."""
    if params.projection.shape[1] != v_g.channels:
        raise ValidationError(
            f"align projection expects {params.projection.shape[1]} channels, "
            f"feature map has {v_g.channels}"
        )
    resampled = bilinear_resample(v_g.array, params.target_hw)
    c_out = params.projection.shape[0]
    h, w = params.target_hw
    out = np.tensordot(params.projection, resampled, axes=([1], [0]))
    out += params.bias[:, None, None]
    return FeatureMap.from_array(out.reshape(c_out, h, w), "geometric")


def _check_same_chw(a: FeatureMap, b: FeatureMap) -> None:
    if a.tensor.dims != b.tensor.dims:
        raise ValidationError(f"feature shape mismatch: {a.tensor.dims} vs {b.tensor.dims}")


def gate_mask(v_s: FeatureMap, aligned_g: FeatureMap, params: GateParams) -> GatingMask:
    """Sigmoid of a per-pixel linear map over the channel concatenation."""
    _check_same_chw(v_s, aligned_g)
    c = v_s.channels
    if params.weights.shape != (c, 2 * c):
        raise ValidationError(
            f"gate weights shape {params.weights.shape} incompatible with C={c}"
        )
    stacked = np.concatenate([v_s.array, aligned_g.array], axis=0).astype(np.float64)
    pre = np.tensordot(params.weights, stacked, axes=([1], [0]))
    pre += params.bias[:, None, None]
    mask = 1.0 / (1.0 + np.exp(-pre))
    return GatingMask(Tensor(mask.astype(np.float32)))


def fuse(v_s: FeatureMap, aligned_g: FeatureMap, mask: GatingMask) -> FeatureMap:
    """F = v_s + m (.) aligned_g."""
    _check_same_chw(v_s, aligned_g)
    if mask.tensor.dims != v_s.tensor.dims:
        raise ValidationError(
            f"mask shape {mask.tensor.dims} does not match features {v_s.tensor.dims}"
        )
    fused = v_s.array + mask.array * aligned_g.array
    return FeatureMap.from_array(fused, "fused")
