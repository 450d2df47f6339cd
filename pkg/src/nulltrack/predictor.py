"""Reference encoding and the attention-based weight predictor.

Reference frames are encoded by injecting a foreground embedding at labeled
target locations:

    F'[c,h,w] = F[c,h,w] + L[h,w] * e[c]

Weights are then predicted by a minimal encoder-decoder: reference and
current tokens (one per spatial cell, plus additive 2D sinusoidal position
and per-frame offset encodings) pass through one single-head self-attention
block with a residual, a cross-attention block reads them out with the
foreground embedding as the sole query, and a task head (semantic or
geometry) maps the decoder output to a length-C weight vector. Both task
passes share the trunk; only the heads differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from nulltrack.boxes import BoxLTRB
from nulltrack.errors import ValidationError
from nulltrack.tensorio import FeatureMap, read_named_tensor, write_named_tensors

HEADS = ("semantic", "geometry")

# Amplitude of the additive positional and frame-offset encodings relative to
# the feature content. Keeps location information available to attention
# without letting it dominate the extracted feature vectors.
ENCODING_SCALE = 0.25

PARAM_TENSOR_NAMES = (
    "enc_q", "enc_k", "enc_v", "enc_o",
    "dec_q", "dec_k", "dec_v", "dec_o",
    "head_sem_w", "head_sem_b", "head_geo_w", "head_geo_b",
    "e_fg",
)


@dataclass(frozen=True)
class LabelMap:
    """Gaussian target label, normalized to peak exactly 1 on the grid."""

    values: np.ndarray
    peak: tuple[int, int]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class WeightVector:
    """Length-C target-model weights; ``role`` records the pipeline stage."""

    w: np.ndarray
    role: str

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1:
            raise ValidationError("weight vector must be one-dimensional")
        if not np.all(np.isfinite(w)):
            raise ValidationError("weight vector must be finite")
        if self.role not in ("semantic", "perturbation", "projected", "combined"):
            raise ValidationError(f"unknown weight role {self.role!r}")
        object.__setattr__(self, "w", w)

    def __len__(self) -> int:
        return len(self.w)


@dataclass(frozen=True)
class PredictorParams:
    """Trunk (shared encoder/decoder) plus the two task heads.

    With ``shared_trunk`` the semantic and geometry passes reuse byte-identical
    trunk parameters; the flag documents that contract for loaders.
    """

    enc_q: np.ndarray
    enc_k: np.ndarray
    enc_v: np.ndarray
    enc_o: np.ndarray
    dec_q: np.ndarray
    dec_k: np.ndarray
    dec_v: np.ndarray
    dec_o: np.ndarray
    head_sem_w: np.ndarray
    head_sem_b: np.ndarray
    head_geo_w: np.ndarray
    head_geo_b: np.ndarray
    shared_trunk: bool = True

    def __post_init__(self):
        c = self.enc_q.shape[0]
        for name in ("enc_q", "enc_k", "enc_v", "enc_o", "dec_q", "dec_k", "dec_v", "dec_o",
                     "head_sem_w", "head_geo_w"):
            mat = np.asarray(getattr(self, name), dtype=np.float64)
            if mat.shape != (c, c):
                raise ValidationError(f"{name} must be {c}x{c}, got {mat.shape}")
            object.__setattr__(self, name, mat)
        for name in ("head_sem_b", "head_geo_b"):
            vec = np.asarray(getattr(self, name), dtype=np.float64)
            if vec.shape != (c,):
                raise ValidationError(f"{name} must have length {c}")
            object.__setattr__(self, name, vec)

    @property
    def channels(self) -> int:
        return self.enc_q.shape[0]

    def head(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        if which == "semantic":
            return self.head_sem_w, self.head_sem_b
        if which == "geometry":
            return self.head_geo_w, self.head_geo_b
        raise ValidationError(f"unknown head {which!r}")


def init_predictor_params(c: int, seed: int) -> PredictorParams:
    """Seeded Gaussian init with std 1/sqrt(C) for every map."""
    rng = np.random.default_rng(seed)
    std = 1.0 / math.sqrt(c)
    mats = [rng.normal(0.0, std, size=(c, c)) for _ in range(10)]
    biases = [rng.normal(0.0, std, size=c) for _ in range(2)]
    return PredictorParams(
        enc_q=mats[0], enc_k=mats[1], enc_v=mats[2], enc_o=mats[3],
        dec_q=mats[4], dec_k=mats[5], dec_v=mats[6], dec_o=mats[7],
        head_sem_w=mats[8], head_sem_b=biases[0],
        head_geo_w=mats[9], head_geo_b=biases[1],
    )


def init_embedding(c: int, seed: int, gain: float | None = None) -> np.ndarray:
    """Seeded foreground embedding; ``gain`` sets its Euclidean norm."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=c)
    v /= np.linalg.norm(v)
    if gain is None:
        gain = 2.0 * math.sqrt(c)
    return v * gain


def save_predictor_params(directory, params: PredictorParams, e_fg: np.ndarray) -> None:
    named = {name: getattr(params, name) for name in PARAM_TENSOR_NAMES if name != "e_fg"}
    named["e_fg"] = e_fg
    write_named_tensors(directory, named)


def load_predictor_params(directory) -> tuple[PredictorParams, np.ndarray]:
    """Load the documented tensor names (see PARAM_TENSOR_NAMES) from GTED files."""
    loaded = {name: read_named_tensor(directory, name) for name in PARAM_TENSOR_NAMES}
    e_fg = loaded.pop("e_fg").astype(np.float64)
    return PredictorParams(**loaded), e_fg


def make_label_map(box: BoxLTRB, dims: tuple[int, int], sigma: float) -> LabelMap:
    """Gaussian bump around the box center, peak-normalized to 1.

    The center must lie inside [0,H) x [0,W); sigma is in feature cells.
    """
    h, w = dims
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    row_c, col_c = box.center
    if not (0 <= row_c < h and 0 <= col_c < w):
        raise ValidationError(
            f"label center ({row_c}, {col_c}) outside grid {h}x{w}"
        )
    rows = np.arange(h, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    d2 = (rows[:, None] - row_c) ** 2 + (cols[None, :] - col_c) ** 2
    values = np.exp(-d2 / (2.0 * sigma * sigma))
    flat_peak = int(np.argmax(values))
    peak = (flat_peak // w, flat_peak % w)
    values = values / values[peak]
    return LabelMap(values=values, peak=peak)


def default_label_sigma(box: BoxLTRB, factor: float = 0.25) -> float:
    """Label sigma as a fraction of the box's shorter side (in cells)."""
    return factor * min(box.width, box.height)


def encode_reference(f_ref: FeatureMap, label: LabelMap, e_fg: np.ndarray) -> FeatureMap:
    """F' = F + L * e_fg with channel/spatial broadcasting."""
    if label.shape != (f_ref.height, f_ref.width):
        raise ValidationError(
            f"label shape {label.shape} does not match grid "
            f"{(f_ref.height, f_ref.width)}"
        )
    e_fg = np.asarray(e_fg, dtype=np.float64)
    if e_fg.shape != (f_ref.channels,):
        raise ValidationError("embedding length must equal the channel count")
    out = f_ref.array + label.values[None, :, :] * e_fg[:, None, None]
    return FeatureMap.from_array(out, f_ref.kind)


def _sin_cos_1d(positions: np.ndarray, dims: int) -> np.ndarray:
    """Standard sinusoidal encoding of scalar positions into ``dims`` channels."""
    out = np.zeros((len(positions), dims))
    for i in range(dims):
        exponent = (i - (i % 2)) / dims
        angle = positions / (10000.0**exponent)
        out[:, i] = np.sin(angle) if i % 2 == 0 else np.cos(angle)
    return out


@lru_cache(maxsize=32)
def grid_positional_encoding(h: int, w: int, c: int) -> np.ndarray:
    """2D sinusoidal encoding: first half of the channels encode the row,
    the rest encode the column. Shape [H*W, C], rows in row-major order."""
    c_row = c // 2
    c_col = c - c_row
    rows = _sin_cos_1d(np.arange(h, dtype=np.float64), c_row)
    cols = _sin_cos_1d(np.arange(w, dtype=np.float64), c_col)
    enc = np.zeros((h * w, c))
    enc[:, :c_row] = np.repeat(rows, w, axis=0)
    enc[:, c_row:] = np.tile(cols, (h, 1))
    enc.flags.writeable = False
    return enc


@lru_cache(maxsize=32)
def frame_offset_encoding(index: int, c: int) -> np.ndarray:
    """Constant per-frame offset distinguishing reference and current tokens."""
    enc = _sin_cos_1d(np.array([float(index + 1)]), c)[0]
    enc.flags.writeable = False
    return enc


def _tokens(maps: list[FeatureMap]) -> np.ndarray:
    """Stacked [n, C] token matrix: features + positional + frame encodings."""
    blocks = []
    for idx, fm in enumerate(maps):
        feats = fm.columns().T.astype(np.float64)
        pe = grid_positional_encoding(fm.height, fm.width, fm.channels)
        offset = frame_offset_encoding(idx, fm.channels)
        blocks.append(feats + ENCODING_SCALE * (pe + offset[None, :]))
    return np.concatenate(blocks, axis=0)


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    scores = scores - scores.max(axis=-1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=-1, keepdims=True)
    return scores


# Token matrices at or above this element count run the attention core in
# float32 (the H*W grids of the tracking loop); smaller ones stay float64.
F32_ELEMENT_THRESHOLD = 8192


def predict_weights(
    refs: list[FeatureMap],
    cur: FeatureMap,
    e_fg: np.ndarray,
    params: PredictorParams,
    head: str,
) -> WeightVector:
    """Run the encoder-decoder forward pass and the selected task head.

    ``refs`` are the already label-encoded reference maps; ``cur`` is the
    current frame. Deterministic given inputs and params.
    """
    if head not in HEADS:
        raise ValidationError(f"head must be one of {HEADS}, got {head!r}")
    if not refs:
        raise ValidationError("at least one reference map is required")
    c = cur.channels
    for fm in refs:
        if fm.channels != c:
            raise ValidationError("all feature maps must share the channel count")
    e_fg = np.asarray(e_fg, dtype=np.float64)
    if e_fg.shape != (c,):
        raise ValidationError("embedding length must equal the channel count")
    if params.channels != c:
        raise ValidationError(
            f"params built for C={params.channels}, features have C={c}"
        )

    x = _tokens(list(refs) + [cur])
    scale = 1.0 / math.sqrt(c)

    dtype = np.float32 if x.size >= F32_ELEMENT_THRESHOLD else np.float64
    x = x.astype(dtype)
    enc_q, enc_k, enc_v, enc_o = (
        params.enc_q.astype(dtype), params.enc_k.astype(dtype),
        params.enc_v.astype(dtype), params.enc_o.astype(dtype),
    )
    dec_q, dec_k, dec_v, dec_o = (
        params.dec_q.astype(dtype), params.dec_k.astype(dtype),
        params.dec_v.astype(dtype), params.dec_o.astype(dtype),
    )
    emb = e_fg.astype(dtype)

    # Encoder: single-head self-attention with a residual connection. A zero
    # value or output map contributes exactly nothing through the residual,
    # so skip the n x n attention in that case (bit-identical fast path).
    if np.any(enc_v) and np.any(enc_o):
        attn = _softmax_rows((x @ enc_q) @ (x @ enc_k).T * dtype(scale))
        x = x + (attn @ (x @ enc_v)) @ enc_o

    # Decoder: cross-attention with the foreground embedding as sole query.
    query = emb @ dec_q
    weights = _softmax_rows(((x @ dec_k) @ query) * dtype(scale))
    decoded = (e_fg + ((weights @ (x @ dec_v)) @ dec_o).astype(np.float64))

    head_w, head_b = params.head(head)
    out = decoded @ head_w + head_b
    role = "semantic" if head == "semantic" else "perturbation"
    return WeightVector(w=out, role=role)
