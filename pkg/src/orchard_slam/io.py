"""File formats: JSONL frame logs, tree-map CSVs, reports, and SVG overlays.

The frame log is one JSON object per line with the schema below; it is
validated on load and parse or schema problems are reported with the
offending frame. All writers emit deterministic bytes (full-precision
repr floats, fixed key order, no timestamps).

    {"frame": int,
     "odom": {"dx": f, "dy": f, "dtheta": f},
     "gps": {"x": f, "y": f, "sigma": f} | null,
     "detections": [{"bbox": [x0, y0, x1, y1], "conf": f,
                     "range": f, "bearing": f,
                     "cloud": {"points": [[x, y, z], ...],
                               "camera_origin": [x, y, z]}?}]}
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .evaluation import EvalReport, TreeMap, match_maps
from .factor_graph import FactorGraph
from .geometry import Point2, Pose2, Pose2Delta
from .perception import TrunkPointCloud
from .simulator import GpsFix


class FrameLogError(ValueError):
    """A frame log failed to parse or violated the schema."""


_CLOUD_SCHEMA = {
    "type": "object",
    "required": ["points", "camera_origin"],
    "additionalProperties": False,
    "properties": {
        "points": {"type": "array",
                   "items": {"type": "array", "items": {"type": "number"},
                             "minItems": 3, "maxItems": 3}},
        "camera_origin": {"type": "array", "items": {"type": "number"},
                          "minItems": 3, "maxItems": 3},
    },
}

_DETECTION_SCHEMA = {
    "type": "object",
    "required": ["bbox", "conf", "range", "bearing"],
    "additionalProperties": False,
    "properties": {
        "bbox": {"type": "array", "items": {"type": "number"},
                 "minItems": 4, "maxItems": 4},
        "conf": {"type": "number", "minimum": 0, "maximum": 1},
        "range": {"type": "number", "exclusiveMinimum": 0},
        "bearing": {"type": "number"},
        "cloud": _CLOUD_SCHEMA,
    },
}

FRAME_SCHEMA = {
    "type": "object",
    "required": ["frame", "odom", "gps", "detections"],
    "additionalProperties": False,
    "properties": {
        "frame": {"type": "integer", "minimum": 0},
        "odom": {"type": "object",
                 "required": ["dx", "dy", "dtheta"],
                 "additionalProperties": False,
                 "properties": {"dx": {"type": "number"},
                                "dy": {"type": "number"},
                                "dtheta": {"type": "number"}}},
        "gps": {"anyOf": [
            {"type": "null"},
            {"type": "object",
             "required": ["x", "y", "sigma"],
             "additionalProperties": False,
             "properties": {"x": {"type": "number"},
                            "y": {"type": "number"},
                            "sigma": {"type": "number", "minimum": 0}}},
        ]},
        "detections": {"type": "array", "items": _DETECTION_SCHEMA},
    },
}

_FRAME_VALIDATOR = jsonschema.Draft202012Validator(FRAME_SCHEMA)


@dataclass(frozen=True)
class LogDetection:
    bbox: tuple[float, float, float, float]
    confidence: float
    range: float
    bearing: float
    cloud: TrunkPointCloud | None = None


@dataclass(frozen=True)
class LogRecord:
    frame: int
    odom: Pose2Delta
    gps: GpsFix | None
    detections: tuple[LogDetection, ...]


def _f(x: float) -> float:
    return float(x)


def frame_to_dict(rec) -> dict:
    """Serialize a frame record (simulator or log form) to the JSONL schema."""
    detections = []
    for d in rec.detections:
        det = {
            "bbox": [_f(v) for v in d.bbox],
            "conf": _f(d.confidence),
            "range": _f(d.range),
            "bearing": _f(d.bearing),
        }
        if getattr(d, "cloud", None) is not None:
            det["cloud"] = {
                "points": [[_f(v) for v in p] for p in d.cloud.points],
                "camera_origin": [_f(v) for v in d.cloud.camera_origin],
            }
        detections.append(det)
    return {
        "frame": int(rec.frame),
        "odom": {"dx": _f(rec.odom.dx), "dy": _f(rec.odom.dy),
                 "dtheta": _f(rec.odom.dtheta)},
        "gps": None if rec.gps is None else
               {"x": _f(rec.gps.x), "y": _f(rec.gps.y), "sigma": _f(rec.gps.sigma)},
        "detections": detections,
    }


def write_frame_log(path, frames) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in frames:
            fh.write(json.dumps(frame_to_dict(rec), separators=(",", ":")))
            fh.write("\n")


def read_frame_log(path) -> list[LogRecord]:
    """Load and schema-validate a JSONL frame log."""
    records: list[LogRecord] = []
    last_frame = -1
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise FrameLogError(f"line {lineno}: invalid JSON: {e}") from e
            err = jsonschema.exceptions.best_match(_FRAME_VALIDATOR.iter_errors(raw))
            if err is not None:
                where = "/".join(str(p) for p in err.absolute_path) or "record"
                raise FrameLogError(
                    f"frame record at line {lineno} "
                    f"(frame {raw.get('frame', '?')}): {where}: {err.message}")
            if raw["frame"] <= last_frame:
                raise FrameLogError(
                    f"frame record at line {lineno}: frame indices must be "
                    f"strictly increasing ({raw['frame']} after {last_frame})")
            last_frame = raw["frame"]
            dets = []
            for j, d in enumerate(raw["detections"]):
                x0, y0, x1, y1 = d["bbox"]
                if not (x0 < x1 and y0 < y1):
                    raise FrameLogError(
                        f"frame {raw['frame']}: detection {j}: bbox must have "
                        f"positive extent, got {d['bbox']}")
                cloud = None
                if "cloud" in d:
                    cloud = TrunkPointCloud(
                        points=np.asarray(d["cloud"]["points"], dtype=float),
                        camera_origin=np.asarray(d["cloud"]["camera_origin"], dtype=float))
                dets.append(LogDetection(
                    bbox=(x0, y0, x1, y1), confidence=d["conf"],
                    range=d["range"], bearing=d["bearing"], cloud=cloud))
            gps = None if raw["gps"] is None else GpsFix(
                raw["gps"]["x"], raw["gps"]["y"], raw["gps"]["sigma"])
            records.append(LogRecord(
                frame=raw["frame"],
                odom=Pose2Delta(raw["odom"]["dx"], raw["odom"]["dy"],
                                raw["odom"]["dtheta"]),
                gps=gps, detections=tuple(dets)))
    return records


def write_tree_map(path, tree_map: TreeMap) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y"])
        for tid, p in tree_map.entries:
            w.writerow([tid, repr(p.x), repr(p.y)])


def read_tree_map(path) -> TreeMap:
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                [f.strip() for f in reader.fieldnames] != ["id", "x", "y"]:
            raise ValueError(f"{path}: expected header 'id,x,y', "
                             f"got {reader.fieldnames}")
        for row in reader:
            entries.append((int(row["id"]),
                            Point2(float(row["x"]), float(row["y"]))))
    return TreeMap(tuple(entries))


def write_trajectory(path, poses: list[Pose2]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "x", "y", "theta"])
        for i, p in enumerate(poses):
            w.writerow([i, repr(p.x), repr(p.y), repr(p.theta)])


def write_eval_report(path, report: EvalReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_sweep_csv(path, reports: list[EvalReport]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gate", "tp", "fp", "fn", "precision", "recall", "f1",
                    "mean_tp_error"])
        for r in reports:
            w.writerow([repr(r.gate), r.tp, r.fp, r.fn, repr(r.precision),
                        repr(r.recall), repr(r.f1), repr(r.mean_tp_error)])


def write_graph_snapshot(path, graph: FactorGraph) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(graph.to_snapshot(), fh, separators=(",", ":"))
        fh.write("\n")


def read_graph_snapshot(path) -> FactorGraph:
    with open(path) as fh:
        return FactorGraph.from_snapshot(json.load(fh))


def write_map_overlay_svg(path, pred: TreeMap, gt: TreeMap, gate: float) -> None:
    """Predicted (crosses) vs ground-truth (circles) trees, matches linked."""
    pts = [p for _, p in list(pred.entries) + list(gt.entries)]
    if not pts:
        xmin = ymin = 0.0
        xmax = ymax = 1.0
    else:
        xmin = min(p.x for p in pts)
        xmax = max(p.x for p in pts)
        ymin = min(p.y for p in pts)
        ymax = max(p.y for p in pts)
    pad = max(1.0, 0.05 * max(xmax - xmin, ymax - ymin))
    xmin, xmax, ymin, ymax = xmin - pad, xmax + pad, ymin + pad, ymax + pad  # y flipped
    width = 900.0
    scale = (width - 40.0) / max(xmax - xmin, 1e-9)
    height = max(120.0, (ymin - ymax) * scale + 40.0)

    def sx(x: float) -> float:
        return 20.0 + (x - xmin) * scale

    def sy(y: float) -> float:
        return 20.0 + (ymin - y) * scale

    res = match_maps(pred, gt, gate) if len(pred) and len(gt) else None
    gt_pos = dict(gt.entries)
    pred_pos = dict(pred.entries)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    if res is not None:
        for pid, gid, _ in res.matches:
            a, b = pred_pos[pid], gt_pos[gid]
            parts.append(
                f'<line x1="{sx(a.x):.2f}" y1="{sy(a.y):.2f}" '
                f'x2="{sx(b.x):.2f}" y2="{sy(b.y):.2f}" '
                'stroke="#bbbbbb" stroke-width="1"/>')
    for _, p in gt.entries:
        parts.append(f'<circle cx="{sx(p.x):.2f}" cy="{sy(p.y):.2f}" r="4" '
                     'fill="none" stroke="#2a7e2a" stroke-width="1.5"/>')
    for _, p in pred.entries:
        x, y = sx(p.x), sy(p.y)
        parts.append(f'<path d="M {x-3.5:.2f} {y-3.5:.2f} L {x+3.5:.2f} {y+3.5:.2f} '
                     f'M {x-3.5:.2f} {y+3.5:.2f} L {x+3.5:.2f} {y-3.5:.2f}" '
                     'stroke="#c23b22" stroke-width="1.5"/>')
    parts.append(
        f'<text x="20" y="{height-8:.0f}" font-family="monospace" font-size="12">'
        f'circles: ground truth ({len(gt)})  crosses: predicted ({len(pred)})  '
        f'gate: {gate:g} m</text>')
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
