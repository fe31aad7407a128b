"""Persistent tree identities via staged detection-to-track association.

Matching runs in three stages: a SORT-style assignment in the image frame
on IoU of Kalman-predicted boxes, then a cascade that propagates matches
through world-frame neighborhoods of already-matched trees, and, when the
image stage yields nothing at all (typically right after a U-turn), a
gated global assignment on world distance. Detections that survive all
stages unmatched spawn new tracks. Tracks are never deleted; their world
positions are maintained externally by the mapping back end.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .assignment import hungarian
from .geometry import Point2

BBox = tuple[float, float, float, float]


class Stage(Enum):
    IOU = "IOU"
    CASCADE = "CASCADE"
    GLOBAL = "GLOBAL"


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two axis-aligned rectangles."""
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    iw, ih = max(0.0, ix1 - ix0), max(0.0, iy1 - iy0)
    inter = iw * ih
    if inter <= 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


@dataclass
class BoxKalman:
    """Constant-velocity filter on the bbox center-x coordinate."""

    x: float                 # center-x, px
    v: float = 0.0           # px per frame
    cov: np.ndarray = field(default_factory=lambda: np.diag([4.0, 1000.0]))
    process_noise: float = 1.0      # px^2
    measurement_noise: float = 4.0  # px^2

    def predicted_center(self, dt: float = 1.0) -> float:
        return self.x + self.v * dt

    def predict(self, dt: float = 1.0) -> None:
        f = np.array([[1.0, dt], [0.0, 1.0]])
        q = self.process_noise * np.array([
            [dt ** 4 / 4.0, dt ** 3 / 2.0],
            [dt ** 3 / 2.0, dt ** 2],
        ])
        self.x = self.x + self.v * dt
        self.cov = f @ self.cov @ f.T + q

    def update(self, measured_x: float) -> None:
        s = self.cov[0, 0] + self.measurement_noise
        k = self.cov[:, 0] / s
        innov = measured_x - self.x
        self.x += k[0] * innov
        self.v += k[1] * innov
        self.cov = self.cov - np.outer(k, self.cov[0, :])


@dataclass
class Track:
    """A persistent tree identity; id doubles as the landmark key index."""

    id: int
    last_bbox: BBox
    kalman: BoxKalman
    world_pos: Point2
    last_seen_frame: int
    n_observations: int = 1


def predict_bbox(track: Track, frames_ahead: float = 1.0) -> BBox:
    """Constant-velocity bbox prediction; only center-x moves."""
    x0, y0, x1, y1 = track.last_bbox
    shift = track.kalman.predicted_center(frames_ahead) - (x0 + x1) / 2.0
    return (x0 + shift, y0, x1 + shift, y1)


def _bbox_center_x(bbox: BBox) -> float:
    return (bbox[0] + bbox[2]) / 2.0


@dataclass(frozen=True)
class AssociationResult:
    matches: list[tuple[int, int, Stage]]     # (track id, detection index, stage)
    new_track_detections: list[int]           # detection indices
    spawned_track_ids: list[int]              # aligned with new_track_detections


def associate_stage1(tracks: list[Track],
                     detections,
                     frame: int,
                     iou_gate: float = 0.3,
                     max_age: int = 5) -> list[tuple[int, int]]:
    """Image-frame assignment on IoU of predicted boxes.

    Only tracks seen within the last max_age frames take part. Pairs whose
    IoU falls below the gate are left unassociated.
    """
    recent = [t for t in tracks if frame - t.last_seen_frame <= max_age]
    if not recent or not detections:
        return []
    overlap = np.zeros((len(recent), len(detections)))
    for i, t in enumerate(recent):
        pred = predict_bbox(t, frame - t.last_seen_frame)
        for j, d in enumerate(detections):
            overlap[i, j] = iou(pred, d.bbox)
    pairs = hungarian(1.0 - overlap)
    return [(recent[i].id, j) for i, j in pairs if overlap[i, j] >= iou_gate]


def _gated_euclidean_matches(cand_tracks: list[Track],
                             detections,
                             cand_dets: list[int],
                             dist_gate: float) -> list[tuple[int, int]]:
    if not cand_tracks or not cand_dets:
        return []
    cost = np.zeros((len(cand_tracks), len(cand_dets)))
    for i, t in enumerate(cand_tracks):
        for j, di in enumerate(cand_dets):
            cost[i, j] = t.world_pos.distance_to(detections[di].world_pos)
    pairs = hungarian(cost)
    return [(cand_tracks[i].id, cand_dets[j])
            for i, j in pairs if cost[i, j] < dist_gate]


def associate_cascade(matched_ids: list[int],
                      tracks_by_id: dict[int, Track],
                      unassoc_track_ids: set[int],
                      detections,
                      unassoc_dets: set[int],
                      radius: float,
                      dist_gate: float) -> list[tuple[int, int]]:
    """Propagate matches outward through spatial neighborhoods.

    Each frontier track gathers the unassociated tracks and detections
    within `radius` of its world position and matches them with a gated
    Hungarian assignment on Euclidean distance. Newly matched tracks join
    the frontier (processed in ascending track id) until no more matches
    can be made.
    """
    unassoc_track_ids = set(unassoc_track_ids)
    unassoc_dets = set(unassoc_dets)
    frontier = list(matched_ids)
    heapq.heapify(frontier)
    out: list[tuple[int, int]] = []
    while frontier and unassoc_track_ids and unassoc_dets:
        tid = heapq.heappop(frontier)
        center = tracks_by_id[tid].world_pos
        near_tracks = sorted(
            k for k in unassoc_track_ids
            if center.distance_to(tracks_by_id[k].world_pos) < radius
        )
        near_dets = sorted(
            di for di in unassoc_dets
            if center.distance_to(detections[di].world_pos) < radius
        )
        matches = _gated_euclidean_matches(
            [tracks_by_id[k] for k in near_tracks], detections, near_dets, dist_gate
        )
        for k, di in matches:
            out.append((k, di))
            unassoc_track_ids.discard(k)
            unassoc_dets.discard(di)
            heapq.heappush(frontier, k)
    return out


def associate_global(tracks: list[Track],
                     detections,
                     unassoc_dets: set[int],
                     dist_gate: float) -> list[tuple[int, int]]:
    """Gated Hungarian assignment over all unassociated tracks and detections."""
    return _gated_euclidean_matches(
        sorted(tracks, key=lambda t: t.id), detections, sorted(unassoc_dets), dist_gate
    )


@dataclass
class TrackerConfig:
    planting_distance: float = 1.1
    iou_gate: float = 0.3
    stage1_max_age: int = 5
    # The cascade must reach past one missed neighbor (2 PD) or isolated
    # detections spawn duplicate tracks; 2.2 PD clears that with margin
    # while staying below typical row spacing.
    neighbor_radius: float | None = None   # default 2.2 * planting distance
    dist_gate: float | None = None         # default planting distance / 2
    cascade_enabled: bool = True
    process_noise: float = 1.0
    measurement_noise: float = 4.0

    def resolved_radius(self) -> float:
        return self.neighbor_radius if self.neighbor_radius is not None \
            else 2.2 * self.planting_distance

    def resolved_gate(self) -> float:
        return self.dist_gate if self.dist_gate is not None \
            else self.planting_distance / 2.0


class TrunkTracker:
    """Single-owner stateful tracker; call step() once per frame."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.tracks: dict[int, Track] = {}
        self._next_id = 0

    def step(self, detections, frame: int) -> AssociationResult:
        """Associate one frame's detections and spawn tracks from leftovers.

        Returns a valid partial matching: every detection index appears
        exactly once, either in matches or in new_track_detections.
        """
        cfg = self.config
        track_list = [self.tracks[k] for k in sorted(self.tracks)]
        stage1 = associate_stage1(track_list, detections, frame,
                                  cfg.iou_gate, cfg.stage1_max_age)
        matches: list[tuple[int, int, Stage]] = [(t, d, Stage.IOU) for t, d in stage1]

        matched_ids = [t for t, _ in stage1]
        unassoc_tracks = set(self.tracks) - set(matched_ids)
        unassoc_dets = set(range(len(detections))) - {d for _, d in stage1}

        if stage1 and unassoc_dets:
            if cfg.cascade_enabled:
                extra = associate_cascade(
                    matched_ids, self.tracks, unassoc_tracks, detections,
                    unassoc_dets, cfg.resolved_radius(), cfg.resolved_gate())
                stage = Stage.CASCADE
            else:
                extra = associate_global(
                    [self.tracks[k] for k in unassoc_tracks], detections,
                    unassoc_dets, cfg.resolved_gate())
                stage = Stage.GLOBAL
            matches.extend((t, d, stage) for t, d in extra)
            unassoc_dets -= {d for t, d in extra}
        elif not stage1 and unassoc_dets:
            extra = associate_global(
                [self.tracks[k] for k in unassoc_tracks], detections,
                unassoc_dets, cfg.resolved_gate())
            matches.extend((t, d, Stage.GLOBAL) for t, d in extra)
            unassoc_dets -= {d for t, d in extra}

        for tid, di, _ in matches:
            self._observe(self.tracks[tid], detections[di], frame)

        new_dets = sorted(unassoc_dets)
        spawned = [self._spawn(detections[di], frame) for di in new_dets]
        return AssociationResult(matches=matches,
                                 new_track_detections=new_dets,
                                 spawned_track_ids=spawned)

    def set_world_position(self, track_id: int, pos: Point2) -> None:
        self.tracks[track_id].world_pos = pos

    def _observe(self, track: Track, det, frame: int) -> None:
        dt = frame - track.last_seen_frame
        if dt > 0:
            track.kalman.predict(dt)
        track.kalman.update(_bbox_center_x(det.bbox))
        track.last_bbox = det.bbox
        track.last_seen_frame = frame
        track.n_observations += 1

    def _spawn(self, det, frame: int) -> int:
        tid = self._next_id
        self._next_id += 1
        kalman = BoxKalman(x=_bbox_center_x(det.bbox),
                           process_noise=self.config.process_noise,
                           measurement_noise=self.config.measurement_noise)
        kalman.cov = np.diag([self.config.measurement_noise, 1000.0])
        self.tracks[tid] = Track(
            id=tid, last_bbox=det.bbox, kalman=kalman,
            world_pos=det.world_pos, last_seen_frame=frame)
        return tid
