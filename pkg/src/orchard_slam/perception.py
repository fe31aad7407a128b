"""Trunk localization from segmented point clouds and per-frame detection filtering.

A segmented trunk cloud covers only the camera-facing surface, so its
centroid sits in front of the true trunk center. The estimator finds the
trunk axis with PCA, measures the apparent width across the remaining two
components, and pushes the centroid half a width away from the camera,
perpendicular to the axis. Per-frame detections are then de-duplicated by
density clustering in the world frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import NOISE, dbscan
from .geometry import Point2, Pose2

DEFAULT_CONFIDENCE_FLOOR = 0.1


class DegenerateCloudError(ValueError):
    """Cloud too small or rank-deficient for axis estimation."""


@dataclass(frozen=True)
class TrunkPointCloud:
    """3D trunk surface points plus the viewing origin, in one shared frame."""

    points: np.ndarray          # (n, 3)
    camera_origin: np.ndarray   # (3,)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        origin = np.asarray(self.camera_origin, dtype=float).reshape(3)
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(origin))):
            raise ValueError("cloud coordinates must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "camera_origin", origin)


@dataclass(frozen=True)
class TrunkEstimate:
    center3d: np.ndarray   # corrected trunk center, same frame as the cloud
    width: float           # apparent trunk width, meters
    axis: np.ndarray       # unit vector along the trunk


@dataclass(frozen=True)
class Detection:
    """One per-frame trunk observation."""

    bbox: tuple[float, float, float, float]   # x_min, y_min, x_max, y_max px
    confidence: float
    world_pos: Point2
    range_bearing: tuple[float, float]        # meters, radians (robot frame)
    cloud: TrunkPointCloud | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"bbox must have positive extent, got {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class SensorExtrinsics:
    """Rigid transform mapping camera-frame points into the robot frame.

    Robot frame: x forward, y left, z up. Camera frame: x image-right,
    y image-down, z optical axis.
    """

    rotation: np.ndarray      # (3, 3), camera axes as columns in robot frame
    translation: np.ndarray   # (3,), camera position in robot frame

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    def camera_to_robot(self, p: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float).reshape(3) + self.translation

    def robot_to_camera(self, p: np.ndarray) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p, dtype=float).reshape(3) - self.translation)

    @classmethod
    def identity(cls) -> "SensorExtrinsics":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def right_side_camera(cls, height: float = 0.6) -> "SensorExtrinsics":
        # Optical axis points to the robot's right (-y), image-right points
        # backward (-x) so that trees sweep left to right while driving.
        rot = np.array([
            [-1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0],
            [0.0, -1.0, 0.0],
        ])
        return cls(rot, np.array([0.0, 0.0, height]))


def estimate_trunk_center(cloud: TrunkPointCloud) -> TrunkEstimate:
    """Estimate the corrected trunk center from a surface point cloud.

    The first principal component of the cloud is taken as the trunk axis;
    the apparent width is the larger coordinate range along the other two
    components. The centroid is shifted away from the camera by width/2
    along the camera-to-centroid direction projected perpendicular to the
    axis. A cloud seen straight down its own axis gets no correction.
    """
    pts = cloud.points
    if len(pts) < 3:
        raise DegenerateCloudError(f"need at least 3 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / (len(pts) - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)   # ascending order
    if eigvals[1] <= max(eigvals[2], 1.0) * 1e-12:
        raise DegenerateCloudError("points are collinear; trunk axis is ambiguous")
    axis = eigvecs[:, 2]
    # Deterministic sign: largest-magnitude component is positive.
    k = int(np.argmax(np.abs(axis)))
    if axis[k] < 0:
        axis = -axis
    spans = [float(np.ptp(centered @ eigvecs[:, i])) for i in (0, 1)]
    width = max(spans)

    view = centroid - cloud.camera_origin
    view_perp = view - (view @ axis) * axis
    norm = np.linalg.norm(view_perp)
    center = centroid.copy()
    if norm >= 1e-9:
        center = centroid + (width / 2.0) * (view_perp / norm)
    return TrunkEstimate(center3d=center, width=width, axis=axis)


def cloud_centroid(cloud: TrunkPointCloud) -> np.ndarray:
    """Plain average of the cloud, the fallback center estimator."""
    if len(cloud.points) == 0:
        raise DegenerateCloudError("empty cloud")
    return cloud.points.mean(axis=0)


def project_to_ground(center3d: np.ndarray,
                      robot_pose: Pose2,
                      extrinsics: SensorExtrinsics) -> Point2:
    """World-frame 2D position of a camera-frame point, height discarded."""
    p_robot = extrinsics.camera_to_robot(center3d)
    c, s = math.cos(robot_pose.theta), math.sin(robot_pose.theta)
    return Point2(
        robot_pose.x + c * p_robot[0] - s * p_robot[1],
        robot_pose.y + s * p_robot[0] + c * p_robot[1],
    )


def range_bearing_from_cloud(cloud: TrunkPointCloud,
                             extrinsics: SensorExtrinsics,
                             use_pca: bool = True) -> tuple[float, float]:
    """Robot-frame (range, bearing) of a trunk cloud's estimated center."""
    center = estimate_trunk_center(cloud).center3d if use_pca else cloud_centroid(cloud)
    p_robot = extrinsics.camera_to_robot(center)
    r = math.hypot(p_robot[0], p_robot[1])
    if r <= 1e-9:
        raise DegenerateCloudError("trunk center coincides with the robot origin")
    return r, math.atan2(p_robot[1], p_robot[0])


def filter_detections(dets: list[Detection],
                      planting_distance: float,
                      eps_factor: float = 0.6,
                      min_pts: int = 1,
                      drop_noise: bool = False) -> list[Detection]:
    """Collapse spatial duplicates, keeping the highest-confidence member.

    Detections are clustered over world position with eps = eps_factor times
    the planting distance. Each multi-member cluster keeps only its best
    detection (confidence, then lexicographic world position as tie-break).
    Noise points are kept unless drop_noise is set.
    """
    if planting_distance <= 0:
        raise ValueError(f"planting_distance must be positive, got {planting_distance}")
    if not dets:
        return []
    pts = [(d.world_pos.x, d.world_pos.y) for d in dets]
    labels = dbscan(pts, eps=eps_factor * planting_distance, min_pts=min_pts)

    keep: dict[int, int] = {}
    survivors: list[int] = []
    for i, label in enumerate(labels):
        if label == NOISE:
            if not drop_noise:
                survivors.append(i)
            continue
        if label not in keep:
            keep[label] = i
            continue
        j = keep[label]
        better = (dets[i].confidence, -dets[i].world_pos.x, -dets[i].world_pos.y) > \
                 (dets[j].confidence, -dets[j].world_pos.x, -dets[j].world_pos.y)
        if better:
            keep[label] = i
    survivors.extend(keep.values())
    return [dets[i] for i in sorted(survivors)]
