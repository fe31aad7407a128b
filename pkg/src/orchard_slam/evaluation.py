"""Scoring of predicted tree maps and the clustering-only baseline.

Predictions are matched to ground truth with a min-cost assignment on
Euclidean distance; matched pairs at or beyond the gate are demoted to a
false positive plus a false negative rather than re-matched, which keeps
the scoring deterministic. The baseline mapper clusters every accumulated
detection position with DBSCAN and reports cluster centroids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assignment import hungarian
from .clustering import NOISE, dbscan
from .geometry import Point2


@dataclass(frozen=True)
class TreeMap:
    """Estimated or ground-truth tree positions with unique ids."""

    entries: tuple[tuple[int, Point2], ...]
    frame: str = "local"

    def __post_init__(self) -> None:
        entries = tuple((int(i), p) for i, p in self.entries)
        ids = [i for i, _ in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("tree ids must be unique")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[int]:
        return [i for i, _ in self.entries]

    def positions(self) -> np.ndarray:
        return np.array([[p.x, p.y] for _, p in self.entries]).reshape(-1, 2)

    @classmethod
    def from_points(cls, points, frame: str = "local") -> "TreeMap":
        return cls(tuple(enumerate(points)), frame=frame)


@dataclass(frozen=True)
class MatchResult:
    matches: tuple[tuple[int, int, float], ...]   # (pred id, gt id, distance)
    false_positive_ids: tuple[int, ...]
    false_negative_ids: tuple[int, ...]


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    mean_tp_error: float
    pct_within_half_pd: float
    gate: float

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "mean_tp_error": self.mean_tp_error,
            "pct_within_half_pd": self.pct_within_half_pd,
            "gate": self.gate,
        }


def match_maps(pred: TreeMap, gt: TreeMap, gate: float) -> MatchResult:
    """Min-cost matching on Euclidean distance, gated at `gate` meters.

    Pairs assigned by the optimal matching but at distance >= gate count as
    one false positive and one false negative; each tree matches at most once.
    """
    if gate <= 0:
        raise ValueError(f"gate must be positive, got {gate}")
    if len(pred) == 0 or len(gt) == 0:
        return MatchResult((), tuple(pred.ids()), tuple(gt.ids()))
    pp, gp = pred.positions(), gt.positions()
    cost = np.linalg.norm(pp[:, None, :] - gp[None, :, :], axis=2)
    pairs = hungarian(cost)
    pred_ids, gt_ids = pred.ids(), gt.ids()
    matches = tuple((pred_ids[i], gt_ids[j], float(cost[i, j]))
                    for i, j in pairs if cost[i, j] < gate)
    matched_pred = {m[0] for m in matches}
    matched_gt = {m[1] for m in matches}
    return MatchResult(
        matches=matches,
        false_positive_ids=tuple(i for i in pred_ids if i not in matched_pred),
        false_negative_ids=tuple(j for j in gt_ids if j not in matched_gt),
    )


def evaluate(pred: TreeMap, gt: TreeMap, gate: float,
             planting_distance: float | None = None) -> EvalReport:
    """Full metric suite at one gate.

    pct_within_half_pd is the recall at a gate of half the planting
    distance; when no planting distance is given it equals the recall at
    `gate` (i.e. the gate is assumed to be PD/2 already).
    """
    res = match_maps(pred, gt, gate)
    tp, fp, fn = len(res.matches), len(res.false_positive_ids), len(res.false_negative_ids)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    mean_err = float(np.mean([d for _, _, d in res.matches])) if res.matches else float("nan")
    if planting_distance is not None:
        half = match_maps(pred, gt, planting_distance / 2.0)
        denom = len(half.matches) + len(half.false_negative_ids)
        pct = len(half.matches) / denom if denom else 0.0
    else:
        pct = recall
    return EvalReport(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall,
                      f1=f1, mean_tp_error=mean_err, pct_within_half_pd=pct,
                      gate=gate)


def sweep_thresholds(pred: TreeMap, gt: TreeMap, gates: list[float],
                     planting_distance: float | None = None) -> list[EvalReport]:
    """Evaluate at each gate; gates must be sorted ascending."""
    if any(b < a for a, b in zip(gates, gates[1:])):
        raise ValueError("gates must be sorted ascending")
    return [evaluate(pred, gt, g, planting_distance) for g in gates]


def baseline_map(all_detections, eps: float = 0.5, min_samples: int = 5) -> TreeMap:
    """Cluster every accumulated detection position; centroids become trees.

    Noise points are discarded. This is the clustering-only mapper used as
    the comparison baseline for the full pipeline.
    """
    pts = np.array([[p.x, p.y] if isinstance(p, Point2) else [p[0], p[1]]
                    for p in all_detections]).reshape(-1, 2)
    if len(pts) == 0:
        return TreeMap(())
    labels = dbscan(pts, eps=eps, min_pts=min_samples)
    entries = []
    for cid in sorted(set(labels) - {NOISE}):
        centroid = pts[labels == cid].mean(axis=0)
        entries.append((len(entries), Point2(float(centroid[0]), float(centroid[1]))))
    return TreeMap(tuple(entries))


def ablation_run(records, gt_trees: TreeMap, config,
                 pca: bool = True, cascade: bool = True, inter_distance: bool = True,
                 gate: float | None = None) -> EvalReport:
    """Run the pipeline with selected components replaced by their fallback.

    pca=False estimates trunk centers as plain cloud centroids (only
    meaningful on logs that carry point clouds); cascade=False replaces the
    neighborhood cascade with a global gated assignment on the leftovers of
    the image-space stage; inter_distance=False omits the landmark-distance
    factors.
    """
    from dataclasses import replace

    from .pipeline import run_pipeline

    cfg = replace(config, pca_enabled=pca, cascade_enabled=cascade,
                  inter_distance_enabled=inter_distance)
    result = run_pipeline(records, cfg)
    g = gate if gate is not None else cfg.planting_distance / 2.0
    return evaluate(result.tree_map, gt_trees, g,
                    planting_distance=cfg.planting_distance)
