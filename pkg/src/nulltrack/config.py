"""Experiment configuration: line-oriented ``key = value`` files with
``[section]`` headers, strict unknown-key rejection and range validation.

Unknown keys are errors rather than warnings so a typo cannot silently
change a study. Every diagnostic carries the line number and field name.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields

from nulltrack.errors import ConfigError
from nulltrack.scenes import SceneRecipe
from nulltrack.tracker import MODES


def _parse_bool(raw: str):
    low = raw.strip().lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {raw!r}")


def _parse_float_or_auto(raw: str):
    low = raw.strip().lower()
    if low == "auto":
        return None
    return float(raw)


def _parse_modes(raw: str):
    modes = tuple(m.strip() for m in raw.split(",") if m.strip())
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r} (valid: {', '.join(MODES)})")
    if not modes:
        raise ValueError("at least one mode is required")
    return modes


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _unit(x):
    return 0.0 <= x <= 1.0


# section -> key -> (parser, range check or None, description of valid range)
SCHEMA = {
    "scene": {
        "frames": (int, lambda v: 1 <= v <= 100_000, "1..100000"),
        "height": (int, lambda v: 4 <= v <= 256, "4..256"),
        "width": (int, lambda v: 4 <= v <= 256, "4..256"),
        "c_sem": (int, lambda v: 1 <= v <= 512, "1..512"),
        "c_geo": (int, lambda v: 1 <= v <= 512, "1..512"),
        "box_size": (float, _positive, "> 0"),
        "noise_std": (float, _nonneg, ">= 0"),
        "n_distractors": (int, lambda v: 0 <= v <= 16, "0..16"),
        "distractor_alpha": (float, _unit, "[0,1]"),
        "distractor_beta": (float, _unit, "[0,1]"),
        "distractor_amplitude": (float, _nonneg, ">= 0"),
        "distractor_geo_amplitude": (float, _nonneg, ">= 0"),
        "pass_dist": (float, _positive, "> 0"),
        "far_dist": (float, _positive, "> 0"),
        "pass_width": (float, _positive, "> 0"),
        "passes_per_distractor": (int, lambda v: 1 <= v <= 8, "1..8"),
        "geo_gain": (float, _nonneg, ">= 0"),
        "occlusion": (_parse_bool, None, "on/off"),
        "occlusion_start": (int, _nonneg, ">= 0"),
        "occlusion_end": (int, _nonneg, ">= 0"),
        "occlusion_rho": (float, _unit, "[0,1]"),
        "near_radius": (float, _positive, "> 0"),
    },
    "editing": {
        "ridge": (_parse_float_or_auto, lambda v: v is None or v >= 0, "auto or >= 0"),
        "eps_rel": (float, _nonneg, ">= 0"),
        "eps_abs": (float, _nonneg, ">= 0"),
        "projector_source": (
            str, lambda v: v in ("refs_and_current", "refs_only"),
            "refs_and_current | refs_only",
        ),
        "refresh_stride": (int, lambda v: v >= 1, ">= 1"),
    },
    "tracker": {
        "predictor": (str, lambda v: v in ("analytic", "seeded"), "analytic | seeded"),
        "params_seed": (int, _nonneg, ">= 0"),
        "embedding_gain": (_parse_float_or_auto, lambda v: v is None or v > 0, "auto or > 0"),
        "ref_update_theta": (
            lambda raw: math.inf if raw.strip().lower() in ("inf", "+inf") else float(raw),
            lambda v: v >= 0, ">= 0 or inf",
        ),
        "label_sigma_factor": (float, _positive, "> 0"),
    },
    "run": {
        "seeds": (int, lambda v: 1 <= v <= 100_000, "1..100000"),
        "base_seed": (int, _nonneg, ">= 0"),
        "modes": (_parse_modes, None, "comma list of modes"),
        "jobs": (int, lambda v: 1 <= v <= 256, "1..256"),
        "timings": (_parse_bool, None, "on/off"),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings with study defaults."""

    # [scene]
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
    geo_gain: float = 2.0
    occlusion: bool = True
    occlusion_start: int = 24
    occlusion_end: int = 34
    occlusion_rho: float = 0.95
    near_radius: float = 4.0
    # [editing]
    ridge: float | None = None
    eps_rel: float = 1e-2
    eps_abs: float = 1e-10
    projector_source: str = "refs_and_current"
    refresh_stride: int = 1
    # [tracker]
    predictor: str = "analytic"
    params_seed: int = 0
    embedding_gain: float | None = None
    ref_update_theta: float = 0.5
    label_sigma_factor: float = 0.25
    # [run]
    seeds: int = 5
    base_seed: int = 0
    modes: tuple = ("semantic_only", "naive_fusion", "nullspace_edit")
    jobs: int = 1
    timings: bool = False

    def recipe(self) -> SceneRecipe:
        return SceneRecipe(
            frames=self.frames,
            height=self.height,
            width=self.width,
            c_sem=self.c_sem,
            c_geo=self.c_geo,
            box_size=self.box_size,
            noise_std=self.noise_std,
            n_distractors=self.n_distractors,
            distractor_alpha=self.distractor_alpha,
            distractor_beta=self.distractor_beta,
            distractor_amplitude=self.distractor_amplitude,
            distractor_geo_amplitude=self.distractor_geo_amplitude,
            pass_dist=self.pass_dist,
            far_dist=self.far_dist,
            pass_width=self.pass_width,
            passes_per_distractor=self.passes_per_distractor,
            geo_gain=self.geo_gain,
            occlusion=self.occlusion,
            occlusion_start=self.occlusion_start,
            occlusion_end=self.occlusion_end,
            occlusion_rho=self.occlusion_rho,
            near_radius=self.near_radius,
        )

    def canonical_text(self) -> str:
        """Stable serialization used for the config hash in CSV metadata."""
        parts = []
        for f in fields(self):
            parts.append(f"{f.name}={getattr(self, f.name)!r}")
        return "\n".join(parts)

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def parse_config_text(text: str) -> dict:
    """Parse the raw file into {(section, key): (raw_value, line_no)}."""
    entries = {}
    section = None
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(
                    f"line {line_no}: unknown section [{section}]", line=line_no, field=section
                )
            continue
        if "=" not in line:
            raise ConfigError(
                f"line {line_no}: expected 'key = value', got {raw_line!r}", line=line_no
            )
        if section is None:
            raise ConfigError(
                f"line {line_no}: key outside any [section]", line=line_no
            )
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in SCHEMA[section]:
            raise ConfigError(
                f"line {line_no}: unknown key '{key}' in section [{section}]",
                line=line_no, field=key,
            )
        if (section, key) in entries:
            raise ConfigError(
                f"line {line_no}: duplicate key '{key}' in section [{section}]",
                line=line_no, field=key,
            )
        entries[(section, key)] = (value.strip(), line_no)
    return entries


def load_config(path=None, text=None, overrides=None) -> ExperimentConfig:
    """Build a validated ExperimentConfig from a file, text, and/or overrides."""
    values = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    if text is not None:
        for (section, key), (raw, line_no) in parse_config_text(text).items():
            parser, check, valid = SCHEMA[section][key]
            try:
                value = parser(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(
                    f"line {line_no}: field '{key}': {exc}", line=line_no, field=key
                ) from exc
            if check is not None and not check(value):
                raise ConfigError(
                    f"line {line_no}: field '{key}' = {raw!r} outside valid range ({valid})",
                    line=line_no, field=key,
                )
            values[key] = value
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig(**values)
    if cfg.occlusion and not (cfg.occlusion_start <= cfg.occlusion_end < cfg.frames):
        raise ConfigError(
            "field 'occlusion_end': occlusion span must lie within the sequence",
            field="occlusion_end",
        )
    return cfg
