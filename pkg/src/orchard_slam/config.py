"""Scenario presets and configuration-file handling for the CLI.

A scenario bundles the orchard geometry, trajectory, sensor model, camera,
and pipeline settings. Presets cover the standard rows (long pear row with
a U-shape path, shorter apple row with a full loop) in mild and degraded
GPS conditions, an intermittent-detection stress case, and small variants
for quick runs and the point-cloud (PCA) path.

Config files are JSON with the same nesting as the dataclasses:

    {"orchard": {...}, "trajectory": {...}, "sensors": {...},
     "camera": {...}, "pipeline": {...}}

Unknown keys or malformed values are reported with their field path.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .geometry import Point2
from .pipeline import PipelineConfig
from .simulator import (
    CameraModel,
    OrchardConfig,
    PathShape,
    SensorConfig,
    TrajectoryConfig,
)


class ConfigError(ValueError):
    """A scenario config file or preset override is invalid."""


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    orchard: OrchardConfig
    trajectory: TrajectoryConfig
    sensors: SensorConfig
    camera: CameraModel = field(default_factory=CameraModel)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        """Derive the scenario for one seed; sensor noise gets its own stream."""
        return replace(self, sensors=replace(self.sensors, seed=seed + 1000003))


# Odometry realism shared by every preset: small translational noise, wheel
# heading drift, and a slight systematic curvature (wheel-radius mismatch).
_ODOM_SIGMA = (0.02, 0.01, 0.004)
_ODOM_BIAS = (0.002, 0.0, 0.0005)
_PIPELINE_COMMON = dict(
    range_sigma=0.05,
    bearing_sigma=0.02,
    odom_sigma=(0.03, 0.015, 0.008),
)


def _pear_orchard() -> OrchardConfig:
    return OrchardConfig(n_trees=135, planting_distance=1.1)


def _apple_orchard() -> OrchardConfig:
    return OrchardConfig(n_trees=65, planting_distance=1.2)


def _preset_pear_row() -> ScenarioConfig:
    return ScenarioConfig(
        name="pear-row",
        orchard=_pear_orchard(),
        trajectory=TrajectoryConfig(path=PathShape.U_SHAPE),
        sensors=SensorConfig(odom_sigma=_ODOM_SIGMA, odom_bias=_ODOM_BIAS),
        pipeline=PipelineConfig(planting_distance=1.1, **_PIPELINE_COMMON),
    )


def _preset_pear_row_degraded() -> ScenarioConfig:
    base = _preset_pear_row()
    return replace(
        base, name="pear-row-degraded",
        sensors=replace(base.sensors,
                        gps_bias_walk_sigma=0.05, gps_bias_reversion=0.98))


def _preset_apple_loop() -> ScenarioConfig:
    return ScenarioConfig(
        name="apple-loop",
        orchard=_apple_orchard(),
        trajectory=TrajectoryConfig(path=PathShape.FULL_LOOP),
        sensors=SensorConfig(odom_sigma=_ODOM_SIGMA, odom_bias=_ODOM_BIAS),
        pipeline=PipelineConfig(planting_distance=1.2, **_PIPELINE_COMMON),
    )


def _preset_apple_loop_degraded() -> ScenarioConfig:
    base = _preset_apple_loop()
    return replace(
        base, name="apple-loop-degraded",
        sensors=replace(base.sensors,
                        gps_bias_walk_sigma=0.05, gps_bias_reversion=0.98))


def _preset_intermittent() -> ScenarioConfig:
    """Half the per-frame detections are dropped; GPS bias wanders."""
    base = _preset_apple_loop_degraded()
    return replace(
        base, name="intermittent",
        sensors=replace(base.sensors, miss_prob=0.5))


def _preset_mini() -> ScenarioConfig:
    return ScenarioConfig(
        name="mini",
        orchard=OrchardConfig(n_trees=12, planting_distance=1.1),
        trajectory=TrajectoryConfig(path=PathShape.U_SHAPE),
        sensors=SensorConfig(odom_sigma=_ODOM_SIGMA, odom_bias=_ODOM_BIAS),
        pipeline=PipelineConfig(planting_distance=1.1, **_PIPELINE_COMMON),
    )


def _preset_mini_clouds() -> ScenarioConfig:
    """Small row whose detections carry trunk point clouds for the PCA path."""
    base = _preset_mini()
    return replace(
        base, name="mini-clouds",
        orchard=replace(base.orchard, n_trees=10, trunk_radius=0.05),
        sensors=replace(base.sensors, emit_clouds=True, cloud_points=200),
        pipeline=replace(base.pipeline, use_clouds=True))


_PRESETS = {
    "pear-row": _preset_pear_row,
    "pear-row-degraded": _preset_pear_row_degraded,
    "apple-loop": _preset_apple_loop,
    "apple-loop-degraded": _preset_apple_loop_degraded,
    "intermittent": _preset_intermittent,
    "mini": _preset_mini,
    "mini-clouds": _preset_mini_clouds,
}


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def load_preset(name: str) -> ScenarioConfig:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}") from None


def _build_dataclass(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown field "
                              f"(known: {', '.join(sorted(known))})")
        kwargs[key] = _coerce(cls, key, value, f"{path}.{key}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}") from e


def _coerce(cls, key: str, value, path: str):
    if cls is OrchardConfig and key == "row_origin":
        if not (isinstance(value, (list, tuple)) and len(value) == 2):
            raise ConfigError(f"{path}: expected [x, y]")
        return Point2(float(value[0]), float(value[1]))
    if cls is TrajectoryConfig and key == "path":
        try:
            return PathShape(value)
        except ValueError:
            raise ConfigError(
                f"{path}: expected one of "
                f"{[p.value for p in PathShape]}, got {value!r}") from None
    if isinstance(value, list):
        return tuple(value)
    return value


_SECTIONS = {
    "orchard": OrchardConfig,
    "trajectory": TrajectoryConfig,
    "sensors": SensorConfig,
    "camera": CameraModel,
    "pipeline": PipelineConfig,
}


def scenario_from_dict(data: dict, name: str = "custom") -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root: expected an object")
    parts = {}
    for key, value in data.items():
        if key == "name":
            name = str(value)
            continue
        if key not in _SECTIONS:
            raise ConfigError(f"config.{key}: unknown section "
                              f"(known: {', '.join(sorted(_SECTIONS))})")
        parts[key] = _build_dataclass(_SECTIONS[key], value, f"config.{key}")
    scenario = ScenarioConfig(
        name=name,
        orchard=parts.get("orchard", OrchardConfig()),
        trajectory=parts.get("trajectory", TrajectoryConfig()),
        sensors=parts.get("sensors", SensorConfig()),
        camera=parts.get("camera", CameraModel()),
        pipeline=parts.get("pipeline", PipelineConfig()),
    )
    if "pipeline" not in parts or "planting_distance" not in data.get("pipeline", {}):
        scenario = replace(scenario, pipeline=replace(
            scenario.pipeline,
            planting_distance=scenario.orchard.planting_distance))
    return scenario


def load_scenario_file(path) -> ScenarioConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: invalid JSON: {e}") from e
    return scenario_from_dict(data, name=p.stem)


def scenario_to_dict(s: ScenarioConfig) -> dict:
    def encode(obj):
        out = {}
        for f in fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, Point2):
                v = [v.x, v.y]
            elif isinstance(v, PathShape):
                v = v.value
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    return {
        "name": s.name,
        "orchard": encode(s.orchard),
        "trajectory": encode(s.trajectory),
        "sensors": encode(s.sensors),
        "camera": encode(s.camera),
        "pipeline": encode(s.pipeline),
    }


def scenario_summary(s: ScenarioConfig, seed: int) -> str:
    o, t = s.orchard, s.trajectory
    lines = [
        f"scenario: {s.name} (seed {seed})",
        f"  orchard: {o.n_trees} trees, planting distance {o.planting_distance} m, "
        f"row length {o.row_length:.1f} m",
        f"  path: {t.path.value}, lateral offset {t.lateral_offset} m, "
        f"{t.speed} m/frame",
        f"  gps: sigma {s.sensors.gps_sigma} m, dropout {s.sensors.gps_dropout_prob}, "
        f"bias walk {s.sensors.gps_bias_walk_sigma}",
        f"  detections: range {s.sensors.detection_range} m, "
        f"fov {math.degrees(s.sensors.detection_fov):.0f} deg, "
        f"miss prob {s.sensors.miss_prob}"
        + (", with point clouds" if s.sensors.emit_clouds else ""),
    ]
    return "\n".join(lines)
