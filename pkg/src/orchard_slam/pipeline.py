"""Per-frame orchestration: perception -> association -> factor graph.

Each frame record advances the pose chain by its odometry delta, attaches
a GPS factor when a fix is present, localizes and de-duplicates the
detections, associates them with existing tree tracks, feeds the matched
and newly spawned observations (plus same-frame inter-tree distances) into
the factor graph, and re-optimizes incrementally. A final from-scratch
batch solve precedes export.

Also provides the accumulate-and-cluster baseline's detection positioning:
dead reckoning snapped to GPS whenever a fix arrives, with no smoothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

from .evaluation import TreeMap
from .factor_graph import FactorGraph, SolveMode, SolveReport
from .geometry import Point2, Pose2, Pose2Delta, pose_compose, project_range_bearing
from .perception import (
    Detection,
    SensorExtrinsics,
    filter_detections,
    range_bearing_from_cloud,
)
from .tracking import TrackerConfig, TrunkTracker


@dataclass(frozen=True)
class PipelineConfig:
    planting_distance: float = 1.1
    confidence_floor: float = 0.1
    filter_eps_factor: float = 0.6
    filter_min_pts: int = 1
    filter_drop_noise: bool = False
    iou_gate: float = 0.3
    stage1_max_age: int = 5
    cascade_enabled: bool = True
    neighbor_radius: float | None = None     # default 2.2 * planting distance
    dist_gate: float | None = None           # default planting distance / 2
    kalman_process_noise: float = 1.0
    kalman_measurement_noise: float = 4.0
    odom_sigma: tuple[float, float, float] = (0.02, 0.02, 0.01)
    gps_sigma: float = 0.30              # fallback when a fix carries no sigma
    range_sigma: float = 0.10
    bearing_sigma: float = 0.05
    inter_distance_sigma: float = 0.05
    inter_distance_enabled: bool = True
    inter_distance_max_pairs: int | None = None
    pca_enabled: bool = True
    use_clouds: bool = False
    camera_mount_height: float = 0.6
    min_track_observations: int = 2
    heading_prior_sigma: float = 1.0
    optimize_every: int = 1
    max_incremental_iterations: int = 50
    huber_delta: float | None = None


@dataclass
class PipelineResult:
    tree_map: TreeMap
    trajectory: list[Pose2]
    graph: FactorGraph
    tracker: TrunkTracker
    incremental_values: dict
    batch_report: SolveReport


def _ingest_detections(record, pose_pred: Pose2, cfg: PipelineConfig,
                       extrinsics: SensorExtrinsics) -> list[Detection]:
    dets = []
    for d in record.detections:
        if d.confidence < cfg.confidence_floor:
            continue
        rng, brg = d.range, d.bearing
        if cfg.use_clouds and d.cloud is not None:
            rng, brg = range_bearing_from_cloud(d.cloud, extrinsics,
                                                use_pca=cfg.pca_enabled)
        dets.append(Detection(
            bbox=tuple(d.bbox), confidence=d.confidence,
            world_pos=project_range_bearing(pose_pred, rng, brg),
            range_bearing=(rng, brg)))
    return filter_detections(dets, cfg.planting_distance, cfg.filter_eps_factor,
                             cfg.filter_min_pts, cfg.filter_drop_noise)


def run_pipeline(records, config: PipelineConfig | None = None) -> PipelineResult:
    """Process a frame log into a tree map and an estimated trajectory."""
    cfg = config or PipelineConfig()
    if not records:
        raise ValueError("frame log is empty")
    graph = FactorGraph(huber_delta=cfg.huber_delta)
    tracker = TrunkTracker(TrackerConfig(
        planting_distance=cfg.planting_distance,
        iou_gate=cfg.iou_gate,
        stage1_max_age=cfg.stage1_max_age,
        neighbor_radius=cfg.neighbor_radius,
        dist_gate=cfg.dist_gate,
        cascade_enabled=cfg.cascade_enabled,
        process_noise=cfg.kalman_process_noise,
        measurement_noise=cfg.kalman_measurement_noise))
    extrinsics = SensorExtrinsics.right_side_camera(cfg.camera_mount_height)
    has_gps = any(rec.gps is not None for rec in records)

    last = len(records) - 1
    for i, rec in enumerate(records):
        if i == 0:
            if rec.gps is not None:
                prior = Pose2(rec.gps.x, rec.gps.y, 0.0)
                s = max(2.0 * rec.gps.sigma, 1e-3)
                sigma = (s, s, cfg.heading_prior_sigma)
            elif has_gps:
                # GPS arrives later; the prior is only a soft hint.
                prior = Pose2(0.0, 0.0, 0.0)
                sigma = (1e3, 1e3, cfg.heading_prior_sigma * 10.0)
            else:
                # GPS-denied run: the prior fixes the gauge at the origin.
                prior = Pose2(0.0, 0.0, 0.0)
                sigma = (1e-3, 1e-3, 1e-3)
            key = graph.initialize(prior, sigma)
        else:
            key = graph.add_pose(rec.odom, cfg.odom_sigma)
        if rec.gps is not None:
            gps_sigma = rec.gps.sigma if rec.gps.sigma > 0 else cfg.gps_sigma
            graph.add_gps(key, (rec.gps.x, rec.gps.y), gps_sigma)

        pose_pred = graph.pose_estimate(key.index)
        dets = _ingest_detections(rec, pose_pred, cfg, extrinsics)
        result = tracker.step(dets, rec.frame)

        observed: list[tuple[int, int]] = [(t, d) for t, d, _ in result.matches]
        observed += list(zip(result.spawned_track_ids, result.new_track_detections))
        for tid, di in observed:
            rng, brg = dets[di].range_bearing
            graph.add_observation(key, tid, rng, brg,
                                  cfg.range_sigma, cfg.bearing_sigma)
        if cfg.inter_distance_enabled and len(observed) >= 2:
            local = {}
            for tid, di in observed:
                rng, brg = dets[di].range_bearing
                local[tid] = (rng * math.cos(brg), rng * math.sin(brg))
            pairs = list(combinations(sorted(local), 2))
            if cfg.inter_distance_max_pairs is not None:
                pairs = pairs[:cfg.inter_distance_max_pairs]
            for ti, tj in pairs:
                delta = math.dist(local[ti], local[tj])
                if delta > 1e-6:
                    graph.add_inter_distance(ti, tj, delta,
                                             cfg.inter_distance_sigma)

        if i % cfg.optimize_every == 0 or i == last:
            graph.optimize(SolveMode.INCREMENTAL,
                           max_iterations=cfg.max_incremental_iterations)
            for tid in tracker.tracks:
                tracker.set_world_position(tid, graph.landmark_estimate(tid))

    incremental_values = {k: v.copy() for k, v in graph.estimates.items()}
    batch_report = graph.optimize(SolveMode.BATCH)

    entries = []
    for tid in sorted(tracker.tracks):
        if tracker.tracks[tid].n_observations >= cfg.min_track_observations:
            entries.append((tid, graph.landmark_estimate(tid)))
    tree_map = TreeMap(tuple(entries))
    trajectory = [graph.pose_estimate(i) for i in graph.pose_indices()]
    return PipelineResult(tree_map=tree_map, trajectory=trajectory, graph=graph,
                          tracker=tracker, incremental_values=incremental_values,
                          batch_report=batch_report)


def baseline_detection_positions(records, confidence_floor: float = 0.1,
                                 gps_gain: float = 0.2) -> list[Point2]:
    """World positions of every detection under a simple non-SLAM localizer.

    The pose integrates odometry and blends each incoming GPS fix with a
    fixed-gain complementary filter (the kind of lightweight fusion a robot
    stack runs without a mapping back end); heading comes from odometry
    alone. These are the points the clustering baseline accumulates.
    """
    points: list[Point2] = []
    pose = None
    for i, rec in enumerate(records):
        if pose is None:
            pose = Pose2(rec.gps.x, rec.gps.y, 0.0) if rec.gps is not None \
                else Pose2(0.0, 0.0, 0.0)
        elif i > 0:
            pose = pose_compose(pose, rec.odom)
        if rec.gps is not None and i > 0:
            pose = Pose2(pose.x + gps_gain * (rec.gps.x - pose.x),
                         pose.y + gps_gain * (rec.gps.y - pose.y),
                         pose.theta)
        for d in rec.detections:
            if d.confidence >= confidence_floor:
                points.append(project_range_bearing(pose, d.range, d.bearing))
    return points
