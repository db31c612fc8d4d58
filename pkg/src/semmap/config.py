"""Flat ``key = value`` config files and pipeline defaults.

The format is deliberately trivial: one assignment per line, ``#`` starts a
comment, no sections, no nesting. Every tunable default in the package has a
named key here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import FormatError


def parse_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


@dataclass
class NoiseModel:
    """Egocentric label corruption: boundary-band flips plus uniform flips."""

    boundary_band: int = 2       # pixels
    boundary_flip_prob: float = 0.3
    uniform_flip_prob: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.boundary_flip_prob <= 1.0
                and 0.0 <= self.uniform_flip_prob <= 1.0):
            raise ValueError("flip probabilities must be in [0, 1]")
        if self.boundary_band < 0:
            raise ValueError("boundary band must be >= 0")


@dataclass
class PipelineConfig:
    kind: str = "smnet"             # smnet | seg2proj | proj2seg
    aggregator: str = "majority_vote"
    ema_alpha: float = 0.3
    smoothing: str = "box_vote"     # none | box_vote
    box_vote_k: int = 3
    # seg2proj options
    downsample_factor: int = 4
    fill_median_k: int = 10
    post_median_k: int = 3
    erosion_side: int = 0           # 0 disables egocentric erosion
    seg2proj_cross_frame: str = "latest_wins"  # or max_height
    # observation / rendering
    camera_width: int = 160
    camera_height_px: int = 120
    camera_hfov_deg: float = 90.0
    frame_stride: int = 4
    max_range: float = 10.0
    # proj2seg labeler training split (scene seeds, rendered on demand)
    proj2seg_train_seed_base: int = 50_000
    proj2seg_train_scenes: int = 8
    proj2seg_band_size: float = 0.20  # height quantization of the labeler
    noise: NoiseModel = field(default_factory=NoiseModel)


_BOOLS = {"true": True, "false": False, "1": True, "0": False,
          "on": True, "off": False}

_INT_KEYS = ("box_vote_k", "downsample_factor", "fill_median_k",
             "post_median_k", "erosion_side", "camera_width",
             "camera_height_px", "frame_stride", "proj2seg_train_seed_base",
             "proj2seg_train_scenes", "noise_boundary_band", "noise_seed")
_FLOAT_KEYS = ("ema_alpha", "camera_hfov_deg", "max_range",
               "proj2seg_band_size", "noise_boundary_flip_prob",
               "noise_uniform_flip_prob")
_STR_KEYS = ("kind", "aggregator", "smoothing", "seg2proj_cross_frame")


def pipeline_config_from_dict(values: dict) -> PipelineConfig:
    """Typed PipelineConfig from a flat key/value mapping; unknown keys fail."""
    cfg = PipelineConfig()
    noise = NoiseModel()
    for key, raw in values.items():
        if key in _INT_KEYS:
            val = int(raw)
        elif key in _FLOAT_KEYS:
            val = float(raw)
        elif key in _STR_KEYS:
            val = raw
        else:
            raise FormatError(f"unknown config key {key!r}")
        if key.startswith("noise_"):
            setattr(noise, key[len("noise_"):], val)
        else:
            setattr(cfg, key, val)
    cfg.noise = noise
    return cfg
