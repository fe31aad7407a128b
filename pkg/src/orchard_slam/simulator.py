"""Deterministic synthetic orchard scenarios.

Generates a ground-truth tree row, a U-shape or full-loop trajectory along
both row sides, and the noisy sensor stream a real run would produce:
odometry deltas, intermittent GPS fixes with an optional slowly varying
bias, and per-frame trunk detections (bounding box, confidence,
range-bearing, and optionally a sampled trunk-surface point cloud). All
randomness flows from one seeded generator, so replays are bit-exact.

Detection world positions in the frame records come from the dead-reckoned
odometry chain, never from the true poses; the true poses and tree map are
returned separately as the held-out ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .evaluation import TreeMap
from .geometry import (
    Point2,
    Pose2,
    Pose2Delta,
    normalize_angle,
    pose_between,
    pose_compose,
    project_range_bearing,
    range_bearing,
)
from .perception import SensorExtrinsics, TrunkPointCloud

RIGHT_SIDE_BEARING = -math.pi / 2.0   # camera optical axis relative to heading


@dataclass(frozen=True)
class OrchardConfig:
    n_trees: int = 135
    planting_distance: float = 1.1
    row_heading: float = 0.0
    position_jitter_sigma: float = 0.03
    trunk_radius: float = 0.05
    row_origin: Point2 = field(default_factory=lambda: Point2(0.0, 0.0))
    # Trellis posts between trees: persistent non-tree objects the detector
    # fires on with low confidence. 0 disables them.
    post_every: int = 0
    post_offset_sigma: float = 0.06

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.planting_distance <= 0:
            raise ValueError("planting_distance must be positive")

    @property
    def row_length(self) -> float:
        return (self.n_trees - 1) * self.planting_distance


class PathShape(Enum):
    U_SHAPE = "u_shape"
    FULL_LOOP = "full_loop"


@dataclass(frozen=True)
class TrajectoryConfig:
    path: PathShape = PathShape.U_SHAPE
    lateral_offset: float = 2.0
    speed: float = 0.35          # meters per frame
    turn_radius: float = 1.0     # overshoot of the turn center beyond the row end

    def __post_init__(self) -> None:
        if self.lateral_offset <= 0 or self.speed <= 0:
            raise ValueError("lateral_offset and speed must be positive")


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics and mounting of the side-facing RGB-D camera."""

    fx: float = 640.0
    fy: float = 640.0
    cx: float = 640.0
    cy: float = 360.0
    width: int = 1280
    height: int = 720
    mount_height: float = 0.6
    trunk_height: float = 1.6

    def extrinsics(self) -> SensorExtrinsics:
        return SensorExtrinsics.right_side_camera(height=self.mount_height)


@dataclass(frozen=True)
class SensorConfig:
    odom_sigma: tuple[float, float, float] = (0.02, 0.01, 0.003)
    # Systematic per-frame odometry error (wheel-radius / track-width
    # mismatch); a dtheta component gives the classic curvature drift.
    odom_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gps_sigma: float = 0.30
    gps_dropout_prob: float = 0.10
    # Slowly varying GPS bias (canopy multipath): per-frame walk sigma, either
    # one value or per-world-axis (x, y), with optional mean reversion
    # (1.0 = pure random walk).
    gps_bias_walk_sigma: float | tuple[float, float] = 0.0
    gps_bias_reversion: float = 1.0
    detection_range: float = 3.5
    detection_fov: float = 1.5        # radians, centered on the right-facing axis
    miss_prob: float = 0.05
    false_positive_rate: float = 0.0  # expected transient spurious detections per frame
    clutter_miss_prob: float = 0.5
    clutter_confidence: tuple[float, float] = (0.1, 0.45)
    range_sigma: float = 0.04
    bearing_sigma: float = 0.015
    confidence_mean: float = 0.8
    confidence_sigma: float = 0.08
    bbox_noise_px: float = 1.0
    seed: int = 0
    emit_clouds: bool = False
    cloud_points: int = 250
    cloud_noise_sigma: float = 0.003
    cloud_max_surface_angle: float = math.radians(65.0)

    def __post_init__(self) -> None:
        for name in ("gps_sigma", "range_sigma", "bearing_sigma",
                     "bbox_noise_px", "cloud_noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if np.any(np.asarray(self.gps_bias_walk_sigma) < 0):
            raise ValueError("gps_bias_walk_sigma must be >= 0")
        for name in ("gps_dropout_prob", "miss_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass(frozen=True)
class GpsFix:
    x: float
    y: float
    sigma: float


@dataclass(frozen=True)
class SimDetection:
    bbox: tuple[float, float, float, float]
    confidence: float
    range: float
    bearing: float
    world_pos: Point2                      # from the dead-reckoned chain
    cloud: TrunkPointCloud | None = None
    true_tree: int | None = None           # None for injected false positives


@dataclass(frozen=True)
class FrameRecord:
    frame: int
    odom: Pose2Delta
    gps: GpsFix | None
    detections: tuple[SimDetection, ...]
    true_pose: Pose2                       # held out of the pipeline's view


@dataclass(frozen=True)
class GroundTruth:
    trees: TreeMap
    trajectory: tuple[Pose2, ...]


@dataclass(frozen=True)
class SimResult:
    frames: tuple[FrameRecord, ...]
    ground_truth: GroundTruth


def generate_orchard(cfg: OrchardConfig, seed: int) -> TreeMap:
    """Ground-truth tree positions along the row, jittered per seed."""
    rng = np.random.default_rng(seed)
    c, s = math.cos(cfg.row_heading), math.sin(cfg.row_heading)
    entries = []
    for k in range(cfg.n_trees):
        along = k * cfg.planting_distance
        jx, jy = rng.normal(0.0, cfg.position_jitter_sigma, size=2) \
            if cfg.position_jitter_sigma > 0 else (0.0, 0.0)
        entries.append((k, Point2(cfg.row_origin.x + c * along + jx,
                                  cfg.row_origin.y + s * along + jy)))
    return TreeMap(tuple(entries))


def generate_clutter(cfg: OrchardConfig, seed: int) -> tuple[Point2, ...]:
    """Trellis posts at tree midpoints, every post_every-th gap, jittered.

    Uses a seed offset so clutter placement does not perturb the tree jitter
    stream of generate_orchard.
    """
    if cfg.post_every <= 0:
        return ()
    rng = np.random.default_rng(seed + 7919)
    c, s = math.cos(cfg.row_heading), math.sin(cfg.row_heading)
    posts = []
    for k in range(0, cfg.n_trees - 1, cfg.post_every):
        along = (k + 0.5) * cfg.planting_distance
        jx, jy = rng.normal(0.0, cfg.post_offset_sigma, size=2)
        posts.append(Point2(cfg.row_origin.x + c * along + jx,
                            cfg.row_origin.y + s * along + jy))
    return tuple(posts)


def _path_segments(orchard: OrchardConfig, cfg: TrajectoryConfig):
    """Straight and arc segments in the row frame (row along +x from 0)."""
    d = cfg.lateral_offset
    m = cfg.turn_radius
    length = orchard.row_length

    def straight(p0, heading, seg_len):
        hx, hy = math.cos(heading), math.sin(heading)
        return seg_len, lambda u: Pose2(p0[0] + u * hx, p0[1] + u * hy, heading)

    def right_arc(center, alpha0, sweep):
        # Clockwise arc (alpha decreasing); heading is alpha - pi/2.
        return sweep * d, lambda u: Pose2(
            center[0] + d * math.cos(alpha0 - u / d),
            center[1] + d * math.sin(alpha0 - u / d),
            alpha0 - u / d - math.pi / 2.0,
        )

    if cfg.path is PathShape.U_SHAPE:
        start_x = length / 2.0
        return [
            straight((start_x, d), 0.0, length + m - start_x),
            right_arc((length + m, 0.0), math.pi / 2.0, math.pi),
            straight((length + m, -d), math.pi, length + 2.0 * m),
        ]
    return [
        straight((-m, d), 0.0, length + 2.0 * m),
        right_arc((length + m, 0.0), math.pi / 2.0, math.pi),
        straight((length + m, -d), math.pi, length + 2.0 * m),
        right_arc((-m, 0.0), -math.pi / 2.0, math.pi),
    ]


def generate_trajectory(orchard: OrchardConfig, cfg: TrajectoryConfig) -> list[Pose2]:
    """True poses sampled every `speed` meters along the drive path."""
    segments = _path_segments(orchard, cfg)
    total = sum(seg_len for seg_len, _ in segments)
    c, s = math.cos(orchard.row_heading), math.sin(orchard.row_heading)
    ox, oy = orchard.row_origin.x, orchard.row_origin.y

    poses = []
    u = 0.0
    while u <= total + 1e-9:
        rem = u
        for seg_len, pose_at in segments:
            if rem <= seg_len or (seg_len, pose_at) is segments[-1]:
                p = pose_at(min(rem, seg_len))
                break
            rem -= seg_len
        poses.append(Pose2(ox + c * p.x - s * p.y,
                           oy + s * p.x + c * p.y,
                           p.theta + orchard.row_heading))
        u += cfg.speed
    return poses


def sample_cylinder_cloud(rng: np.random.Generator,
                          axis_origin: np.ndarray,
                          axis_dir: np.ndarray,
                          radius: float,
                          height: float,
                          view_origin: np.ndarray,
                          n_points: int,
                          noise_sigma: float,
                          max_surface_angle: float = math.radians(65.0)) -> np.ndarray:
    """Sample the camera-facing surface of a cylinder.

    Points are uniform across the visible chord (as pixels are) and uniform
    in height; the surface beyond max_surface_angle from the front normal is
    dropped, mimicking grazing-angle failure of depth cameras. Noise is
    added along each viewing ray.
    """
    axis = np.asarray(axis_dir, dtype=float)
    axis = axis / np.linalg.norm(axis)
    origin = np.asarray(axis_origin, dtype=float)
    view = np.asarray(view_origin, dtype=float) - origin
    front = view - (view @ axis) * axis
    fn = np.linalg.norm(front)
    if fn < 1e-9:
        raise ValueError("camera lies on the cylinder axis; no facing surface")
    front /= fn
    side = np.cross(axis, front)
    side /= np.linalg.norm(side)

    a = math.sin(max_surface_angle)
    chord = rng.uniform(-a * radius, a * radius, size=n_points)
    depth = np.sqrt(radius ** 2 - chord ** 2)
    h = rng.uniform(0.0, height, size=n_points)
    pts = (origin[None, :]
           + h[:, None] * axis[None, :]
           + chord[:, None] * side[None, :]
           + depth[:, None] * front[None, :])
    if noise_sigma > 0:
        rays = pts - np.asarray(view_origin, dtype=float)[None, :]
        rays /= np.linalg.norm(rays, axis=1, keepdims=True)
        pts = pts + rays * rng.normal(0.0, noise_sigma, size=n_points)[:, None]
    return pts


def _world_to_camera(extr: SensorExtrinsics, pose: Pose2, p_world: np.ndarray) -> np.ndarray:
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    ex, ey = p_world[0] - pose.x, p_world[1] - pose.y
    p_robot = np.array([c * ex + s * ey, -s * ex + c * ey, p_world[2]])
    return extr.robot_to_camera(p_robot)


def _synth_bbox(camera: CameraModel, extr: SensorExtrinsics, pose: Pose2,
                tree: Point2, trunk_radius: float,
                rng: np.random.Generator, noise_px: float):
    """Project a trunk cylinder through the pinhole model; None if off-image."""
    base = _world_to_camera(extr, pose, np.array([tree.x, tree.y, 0.0]))
    top = _world_to_camera(extr, pose, np.array([tree.x, tree.y, camera.trunk_height]))
    if base[2] < 0.15 or top[2] < 0.15:
        return None
    u = camera.fx * base[0] / base[2] + camera.cx
    v_bottom = camera.fy * base[1] / base[2] + camera.cy
    v_top = camera.fy * top[1] / top[2] + camera.cy
    half_w = camera.fx * trunk_radius / base[2]
    x0, x1 = u - half_w, u + half_w
    y0, y1 = min(v_top, v_bottom), max(v_top, v_bottom)
    if noise_px > 0:
        jitter = rng.normal(0.0, noise_px, size=4)
        x0, y0, x1, y1 = x0 + jitter[0], y0 + jitter[1], x1 + jitter[2], y1 + jitter[3]
    x0, x1 = max(0.0, x0), min(float(camera.width), x1)
    y0, y1 = max(0.0, y0), min(float(camera.height), y1)
    if x1 - x0 < 2.0 or y1 - y0 < 2.0:
        return None
    return (x0, y0, x1, y1)


def _trunk_cloud(camera: CameraModel, extr: SensorExtrinsics, pose: Pose2,
                 tree: Point2, trunk_radius: float, sensors: SensorConfig,
                 rng: np.random.Generator) -> TrunkPointCloud:
    base = _world_to_camera(extr, pose, np.array([tree.x, tree.y, 0.0]))
    top = _world_to_camera(extr, pose, np.array([tree.x, tree.y, camera.trunk_height]))
    axis = top - base
    pts = sample_cylinder_cloud(
        rng, base, axis / np.linalg.norm(axis), trunk_radius,
        float(np.linalg.norm(axis)), np.zeros(3), sensors.cloud_points,
        sensors.cloud_noise_sigma, sensors.cloud_max_surface_angle)
    return TrunkPointCloud(points=pts, camera_origin=np.zeros(3))


def simulate(trees: TreeMap,
             trajectory: list[Pose2],
             sensors: SensorConfig,
             camera: CameraModel | None = None,
             trunk_radius: float = 0.05,
             clutter: tuple[Point2, ...] = ()) -> SimResult:
    """Produce the noisy frame stream plus the held-out ground truth.

    Clutter points are persistent non-tree objects (posts, weed patches)
    that yield intermittent low-confidence detections; they are absent from
    the ground-truth tree map.
    """
    camera = camera or CameraModel()
    extr = camera.extrinsics()
    rng = np.random.default_rng(sensors.seed)
    tree_list = list(trees.entries)

    frames = []
    dr_pose = trajectory[0]     # dead-reckoned chain, seeded at the true start
    bias = np.zeros(2)
    for t, true_pose in enumerate(trajectory):
        if t == 0:
            odom = Pose2Delta(0.0, 0.0, 0.0)
        else:
            clean = pose_between(trajectory[t - 1], true_pose)
            err = rng.normal(0.0, 1.0, size=3) * np.asarray(sensors.odom_sigma) \
                + np.asarray(sensors.odom_bias)
            odom = Pose2Delta(clean.dx + err[0], clean.dy + err[1],
                              clean.dtheta + err[2])
            dr_pose = pose_compose(dr_pose, odom)

        walk = np.broadcast_to(np.asarray(sensors.gps_bias_walk_sigma, dtype=float), 2)
        bias = sensors.gps_bias_reversion * bias + rng.normal(0.0, 1.0, size=2) * walk
        gps = None
        if rng.uniform() >= sensors.gps_dropout_prob:
            gx, gy = rng.normal(0.0, sensors.gps_sigma, size=2)
            gps = GpsFix(true_pose.x + bias[0] + gx,
                         true_pose.y + bias[1] + gy,
                         sensors.gps_sigma)

        detections = []
        for tree_id, pos in tree_list:
            r, phi = range_bearing(true_pose, pos)
            if r > sensors.detection_range:
                continue
            if abs(normalize_angle(phi - RIGHT_SIDE_BEARING)) > sensors.detection_fov / 2.0:
                continue
            if rng.uniform() < sensors.miss_prob:
                continue
            bbox = _synth_bbox(camera, extr, true_pose, pos, trunk_radius,
                               rng, sensors.bbox_noise_px)
            if bbox is None:
                continue
            r_m = r + rng.normal(0.0, sensors.range_sigma)
            phi_m = normalize_angle(phi + rng.normal(0.0, sensors.bearing_sigma))
            if r_m <= 0.05:
                continue
            conf = float(np.clip(rng.normal(sensors.confidence_mean,
                                            sensors.confidence_sigma), 0.0, 1.0))
            cloud = _trunk_cloud(camera, extr, true_pose, pos, trunk_radius,
                                 sensors, rng) if sensors.emit_clouds else None
            detections.append(SimDetection(
                bbox=bbox, confidence=conf, range=r_m, bearing=phi_m,
                world_pos=project_range_bearing(dr_pose, r_m, phi_m),
                cloud=cloud, true_tree=tree_id))

        for post in clutter:
            r, phi = range_bearing(true_pose, post)
            if r > sensors.detection_range:
                continue
            if abs(normalize_angle(phi - RIGHT_SIDE_BEARING)) > sensors.detection_fov / 2.0:
                continue
            if rng.uniform() < sensors.clutter_miss_prob:
                continue
            bbox = _synth_bbox(camera, extr, true_pose, post, 0.03,
                               rng, sensors.bbox_noise_px)
            if bbox is None:
                continue
            r_m = r + rng.normal(0.0, sensors.range_sigma)
            phi_m = normalize_angle(phi + rng.normal(0.0, sensors.bearing_sigma))
            if r_m <= 0.05:
                continue
            cloud = _trunk_cloud(camera, extr, true_pose, post, 0.03,
                                 sensors, rng) if sensors.emit_clouds else None
            detections.append(SimDetection(
                bbox=bbox, confidence=float(rng.uniform(*sensors.clutter_confidence)),
                range=r_m, bearing=phi_m,
                world_pos=project_range_bearing(dr_pose, r_m, phi_m),
                cloud=cloud, true_tree=None))

        if sensors.false_positive_rate > 0:
            for _ in range(rng.poisson(sensors.false_positive_rate)):
                r_fp = rng.uniform(1.0, sensors.detection_range)
                phi_fp = normalize_angle(
                    RIGHT_SIDE_BEARING
                    + rng.uniform(-sensors.detection_fov / 2.0, sensors.detection_fov / 2.0))
                spot = project_range_bearing(true_pose, r_fp, phi_fp)
                bbox = _synth_bbox(camera, extr, true_pose, spot, 0.04,
                                   rng, sensors.bbox_noise_px)
                if bbox is None:
                    continue
                detections.append(SimDetection(
                    bbox=bbox, confidence=float(rng.uniform(0.1, 0.45)),
                    range=r_fp, bearing=phi_fp,
                    world_pos=project_range_bearing(dr_pose, r_fp, phi_fp),
                    cloud=None, true_tree=None))

        frames.append(FrameRecord(frame=t, odom=odom, gps=gps,
                                  detections=tuple(detections),
                                  true_pose=true_pose))

    return SimResult(frames=tuple(frames),
                     ground_truth=GroundTruth(trees=trees,
                                              trajectory=tuple(trajectory)))
