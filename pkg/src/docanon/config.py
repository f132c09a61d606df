"""Pipeline parameters and the JSON config file that overrides them."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, is_dataclass, replace

from .errors import ConfigError


@dataclass(frozen=True)
class RedactionPolicy:
    iou_gate: float = 0.1
    # a reference face counts as overlapping a prediction when IoU exceeds this
    face_overlap_epsilon: float = 0.0

    def __post_init__(self):
        _check_range("policy.iou_gate", self.iou_gate, 0.0, 1.0, hi_open=True)
        _check_range("policy.face_overlap_epsilon", self.face_overlap_epsilon, 0.0, 1.0, hi_open=True)


@dataclass(frozen=True)
class RansacParams:
    threshold: float = 3.0
    iterations: int = 2000
    seed: int = 0

    def __post_init__(self):
        _check_range("ransac.threshold", self.threshold, 0.0, math.inf, lo_open=True)
        _check_int("ransac.iterations", self.iterations, 1)
        _check_int("ransac.seed", self.seed, 0)


@dataclass(frozen=True)
class FeatureParams:
    max_keypoints: int = 1500
    fast_threshold: int = 20
    max_distance: int = 64

    def __post_init__(self):
        _check_int("features.max_keypoints", self.max_keypoints, 3)
        _check_int("features.fast_threshold", self.fast_threshold, 1)
        _check_int("features.max_distance", self.max_distance, 0)
        if self.max_distance > 256:
            raise ConfigError("features.max_distance: must be <= 256")


@dataclass(frozen=True)
class DetectorParams:
    # MRZ kernels as divisors of the page width
    mrz_rect_width_div: float = 40.0
    mrz_rect_height_div: float = 160.0
    mrz_square_div: float = 25.0
    # text blackhat kernel height as a fraction of the page height
    text_blackhat_height: float = 0.06
    # horizontal closing width relative to the estimated glyph advance
    text_close_factor: float = 1.5

    def __post_init__(self):
        for f in fields(self):
            _check_range(f"detector.{f.name}", getattr(self, f.name), 0.0, math.inf, lo_open=True)


@dataclass(frozen=True)
class PipelineConfig:
    policy: RedactionPolicy = field(default_factory=RedactionPolicy)
    ransac: RansacParams = field(default_factory=RansacParams)
    features: FeatureParams = field(default_factory=FeatureParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    # transformed reference boxes keeping less than this share of their area are dropped
    clip_min_fraction: float = 0.25

    def __post_init__(self):
        _check_range("clip_min_fraction", self.clip_min_fraction, 0.0, 1.0)

    def to_dict(self) -> dict:
        return _as_dict(self)


def _check_range(path, value, lo, hi, lo_open=False, hi_open=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    bad = value < lo or value > hi or (lo_open and value == lo) or (hi_open and value == hi)
    if bad:
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        raise ConfigError(f"{path}: {value!r} outside {lb}{lo}, {hi}{rb}")


def _check_int(path, value, lo):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if value < lo:
        raise ConfigError(f"{path}: {value} must be >= {lo}")


def _as_dict(obj):
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = _as_dict(v) if is_dataclass(v) else v
    return out


def _merge(obj, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    known = {f.name: f for f in fields(obj)}
    changes = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(f"{sub}: unknown key")
        current = getattr(obj, key)
        if is_dataclass(current):
            changes[key] = _merge(current, value, sub)
        else:
            if isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            changes[key] = value
    try:
        return replace(obj, **changes)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def config_from_dict(data: dict) -> PipelineConfig:
    return _merge(PipelineConfig(), data, "")


def read_config(path) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)
