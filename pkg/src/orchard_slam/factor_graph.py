"""Nonlinear least-squares factor graph over 2D poses and tree landmarks.

Variables are robot poses (x, y, theta) and landmark positions (x, y).
Factors encode a prior on the first pose, relative odometry between
consecutive poses, absolute GPS fixes, range-bearing observations of
landmarks, and measured distances between landmarks seen in the same
frame. All residuals are whitened by the inverse square root of their
noise covariance, so the total cost is the covariance-weighted sum of
squared errors.

Optimization is Levenberg-Marquardt on the sparse normal equations.
Batch mode re-initializes every variable from the raw measurements;
incremental mode warm-starts from the current estimates, which makes
per-frame re-optimization cheap while agreeing with a from-scratch
batch solve on the same graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .geometry import (
    DegenerateGeometryError,
    Point2,
    Pose2,
    Pose2Delta,
    normalize_angle,
    pose_between,
    pose_compose,
    project_range_bearing,
)


class NumericalFailureError(RuntimeError):
    """The normal equations could not be solved."""


class VarKind(Enum):
    POSE = "pose"
    LANDMARK = "landmark"


_VAR_DIM = {VarKind.POSE: 3, VarKind.LANDMARK: 2}


@dataclass(frozen=True, order=True)
class Key:
    kind: VarKind
    index: int

    def __str__(self) -> str:
        return f"{'x' if self.kind is VarKind.POSE else 'l'}{self.index}"


def pose_key(i: int) -> Key:
    return Key(VarKind.POSE, i)


def landmark_key(j: int) -> Key:
    return Key(VarKind.LANDMARK, j)


class FactorKind(Enum):
    PRIOR = "prior"
    ODOMETRY = "odometry"
    GPS = "gps"
    RANGE_BEARING = "range_bearing"
    INTER_DISTANCE = "inter_distance"


def _as_covariance(sigma, dim: int) -> np.ndarray:
    """Accept a scalar std, per-component stds, or a full covariance matrix."""
    arr = np.asarray(sigma, dtype=float)
    if arr.ndim == 0:
        cov = np.eye(dim) * float(arr) ** 2
    elif arr.ndim == 1:
        if len(arr) != dim:
            raise ValueError(f"expected {dim} stds, got {len(arr)}")
        cov = np.diag(arr ** 2)
    elif arr.shape == (dim, dim):
        cov = arr.copy()
    else:
        raise ValueError(f"cannot interpret noise spec of shape {arr.shape} for dim {dim}")
    if not np.all(np.isfinite(cov)):
        raise ValueError("covariance must be finite")
    # symmetric positive definite check via Cholesky below
    return cov


@dataclass(frozen=True)
class Factor:
    kind: FactorKind
    keys: tuple[Key, ...]
    measurement: np.ndarray
    covariance: np.ndarray
    sqrt_info: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        z = np.asarray(self.measurement, dtype=float).ravel()
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "measurement", z)
        object.__setattr__(self, "covariance", cov)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise ValueError(f"{self.kind.value} covariance is not positive definite") from e
        object.__setattr__(self, "sqrt_info", np.linalg.inv(chol))

    @property
    def dim(self) -> int:
        return len(self.measurement)


def _wrap(a: np.ndarray | float):
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def _raw_residual_and_jacobians(f: Factor, values: dict[Key, np.ndarray]):
    """Unwhitened residual (z - h) and its Jacobian blocks per connected key."""
    k = f.kind
    z = f.measurement
    if k is FactorKind.PRIOR:
        x = values[f.keys[0]]
        r = np.array([z[0] - x[0], z[1] - x[1], normalize_angle(z[2] - x[2])])
        return r, {f.keys[0]: -np.eye(3)}
    if k is FactorKind.GPS:
        x = values[f.keys[0]]
        if f.dim == 2:
            r = z - x[:2]
            jac = np.zeros((2, 3))
            jac[0, 0] = -1.0
            jac[1, 1] = -1.0
            return r, {f.keys[0]: jac}
        r = np.array([z[0] - x[0], z[1] - x[1], normalize_angle(z[2] - x[2])])
        return r, {f.keys[0]: -np.eye(3)}
    if k is FactorKind.ODOMETRY:
        a, b = (values[key] for key in f.keys)
        c, s = math.cos(a[2]), math.sin(a[2])
        ex, ey = b[0] - a[0], b[1] - a[1]
        h = np.array([c * ex + s * ey, -s * ex + c * ey, normalize_angle(b[2] - a[2])])
        r = np.array([z[0] - h[0], z[1] - h[1], normalize_angle(z[2] - h[2])])
        ja = np.array([
            [c, s, s * ex - c * ey],
            [-s, c, c * ex + s * ey],
            [0.0, 0.0, 1.0],
        ])
        jb = np.array([
            [-c, -s, 0.0],
            [s, -c, 0.0],
            [0.0, 0.0, -1.0],
        ])
        return r, {f.keys[0]: ja, f.keys[1]: jb}
    if k is FactorKind.RANGE_BEARING:
        x = values[f.keys[0]]
        l = values[f.keys[1]]
        dx, dy = l[0] - x[0], l[1] - x[1]
        q = dx * dx + dy * dy
        if q < 1e-18:
            raise DegenerateGeometryError("landmark coincides with pose")
        rng = math.sqrt(q)
        phi = math.atan2(dy, dx) - x[2]
        r = np.array([z[0] - rng, normalize_angle(z[1] - phi)])
        jp = np.array([
            [dx / rng, dy / rng, 0.0],
            [-dy / q, dx / q, 1.0],
        ])
        jl = np.array([
            [-dx / rng, -dy / rng],
            [dy / q, -dx / q],
        ])
        return r, {f.keys[0]: jp, f.keys[1]: jl}
    if k is FactorKind.INTER_DISTANCE:
        li = values[f.keys[0]]
        lj = values[f.keys[1]]
        diff = li - lj
        d = math.hypot(diff[0], diff[1])
        if d < 1e-12:
            raise DegenerateGeometryError("landmarks coincide")
        r = np.array([z[0] - d])
        ji = (-diff / d).reshape(1, 2)
        return r, {f.keys[0]: ji, f.keys[1]: -ji}
    raise AssertionError(f"unhandled factor kind {k}")


def factor_residual(f: Factor, values: dict[Key, np.ndarray]) -> np.ndarray:
    """Whitened residual of a single factor at the given values."""
    r, _ = _raw_residual_and_jacobians(f, values)
    return f.sqrt_info @ r


def factor_jacobian(f: Factor, values: dict[Key, np.ndarray]) -> dict[Key, np.ndarray]:
    """Whitened residual Jacobian blocks keyed by connected variable."""
    _, jacs = _raw_residual_and_jacobians(f, values)
    return {k: f.sqrt_info @ j for k, j in jacs.items()}


class SolveMode(Enum):
    BATCH = "batch"
    INCREMENTAL = "incremental"


@dataclass
class SolveReport:
    iterations: int
    initial_cost: float
    final_cost: float
    converged: bool
    values: dict[Key, np.ndarray]


class FactorGraph:
    """Mutable factor graph with incremental Levenberg-Marquardt solving."""

    def __init__(self, huber_delta: float | None = None):
        self.factors: list[Factor] = []
        self.estimates: dict[Key, np.ndarray] = {}
        self.huber_delta = huber_delta
        self._offsets: dict[Key, int] = {}
        self._keys: list[Key] = []
        self._n_params = 0
        self._last_pose_index: int | None = None

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------
    def _add_variable(self, key: Key, initial: np.ndarray) -> Key:
        if key in self._offsets:
            raise ValueError(f"variable {key} already exists")
        self._offsets[key] = self._n_params
        self._keys.append(key)
        self._n_params += _VAR_DIM[key.kind]
        self.estimates[key] = np.asarray(initial, dtype=float).copy()
        return key

    def _add_factor(self, factor: Factor) -> None:
        for key in factor.keys:
            if key not in self._offsets:
                raise KeyError(f"factor references unknown variable {key}")
        self.factors.append(factor)

    def initialize(self, prior: Pose2, sigma) -> Key:
        """Create the first pose with a gauge-fixing prior factor."""
        if self._last_pose_index is not None:
            raise ValueError("graph already initialized")
        key = self._add_variable(pose_key(0), np.array([prior.x, prior.y, prior.theta]))
        self._add_factor(Factor(FactorKind.PRIOR, (key,),
                                np.array([prior.x, prior.y, prior.theta]),
                                _as_covariance(sigma, 3)))
        self._last_pose_index = 0
        return key

    def add_pose(self, delta: Pose2Delta, sigma) -> Key:
        """Append the next pose, linked to the previous one by odometry."""
        if self._last_pose_index is None:
            raise ValueError("call initialize() before add_pose()")
        prev = pose_key(self._last_pose_index)
        new_index = self._last_pose_index + 1
        guess = pose_compose(self.pose_estimate(self._last_pose_index), delta)
        key = self._add_variable(pose_key(new_index),
                                 np.array([guess.x, guess.y, guess.theta]))
        self._add_factor(Factor(FactorKind.ODOMETRY, (prev, key),
                                np.array([delta.dx, delta.dy, delta.dtheta]),
                                _as_covariance(sigma, 3)))
        self._last_pose_index = new_index
        return key

    def add_gps(self, key: Key, z, sigma) -> None:
        """Attach an absolute position (2-vector) or full-pose (3-vector) fix."""
        if key not in self._offsets:
            raise KeyError(f"unknown pose {key}")
        z = np.asarray(z, dtype=float).ravel()
        if len(z) not in (2, 3):
            raise ValueError(f"gps measurement must have 2 or 3 components, got {len(z)}")
        self._add_factor(Factor(FactorKind.GPS, (key,), z, _as_covariance(sigma, len(z))))

    def add_observation(self, pose: Key, landmark_index: int,
                        rng: float, phi: float, sigma_r: float, sigma_phi: float) -> Key:
        """Attach a range-bearing factor, creating the landmark on first sight."""
        if rng <= 0:
            raise ValueError(f"range must be positive, got {rng}")
        if pose not in self._offsets:
            raise KeyError(f"unknown pose {pose}")
        lkey = landmark_key(landmark_index)
        if lkey not in self._offsets:
            guess = project_range_bearing(self.pose_estimate(pose.index), rng, phi)
            self._add_variable(lkey, np.array([guess.x, guess.y]))
        self._add_factor(Factor(FactorKind.RANGE_BEARING, (pose, lkey),
                                np.array([rng, phi]),
                                np.diag([sigma_r ** 2, sigma_phi ** 2])))
        return lkey

    def add_inter_distance(self, i: int, j: int, delta: float, sigma_delta: float) -> None:
        """Constrain the distance between two landmarks seen in the same frame."""
        if i == j:
            raise ValueError("inter-distance factor needs two distinct landmarks")
        ki, kj = landmark_key(i), landmark_key(j)
        for k in (ki, kj):
            if k not in self._offsets:
                raise KeyError(f"unknown landmark {k}")
        self._add_factor(Factor(FactorKind.INTER_DISTANCE, (ki, kj),
                                np.array([delta]), np.array([[sigma_delta ** 2]])))

    # ------------------------------------------------------------------
    # accessors
    # ------------------------------------------------------------------
    def pose_estimate(self, i: int) -> Pose2:
        v = self.estimates[pose_key(i)]
        return Pose2(v[0], v[1], v[2])

    def landmark_estimate(self, j: int) -> Point2:
        v = self.estimates[landmark_key(j)]
        return Point2(v[0], v[1])

    def pose_indices(self) -> list[int]:
        return sorted(k.index for k in self._keys if k.kind is VarKind.POSE)

    def landmark_indices(self) -> list[int]:
        return sorted(k.index for k in self._keys if k.kind is VarKind.LANDMARK)

    def evaluate_cost(self, values: dict[Key, np.ndarray] | None = None) -> float:
        """Standalone weighted cost: sum of squared whitened residuals.

        Evaluated factor by factor, independently of the vectorized path the
        optimizer uses.
        """
        vals = values if values is not None else self.estimates
        return float(sum(float(np.dot(r, r)) for r in
                         (factor_residual(f, vals) for f in self.factors)))

    # ------------------------------------------------------------------
    # initialization for batch solves
    # ------------------------------------------------------------------
    def initial_values(self) -> dict[Key, np.ndarray]:
        """Re-derive initial estimates from the measurements alone.

        Poses are chained from the prior through the odometry measurements
        and, when GPS factors exist, refined by solving the pose-only
        subgraph (prior, odometry, GPS) first; a long chain drifts too far
        for the full nonlinear problem to start in the right basin
        otherwise. Each landmark then starts at its first observation
        projected through the initialized pose.
        """
        vals: dict[Key, np.ndarray] = {}
        start = np.zeros(3)
        for f in self.factors:
            if f.kind is FactorKind.PRIOR:
                start = f.measurement.copy()
                break
        odom: dict[int, tuple[int, np.ndarray]] = {}
        for f in self.factors:
            if f.kind is FactorKind.ODOMETRY:
                odom[f.keys[1].index] = (f.keys[0].index, f.measurement)
        pose_ids = sorted(k.index for k in self._keys if k.kind is VarKind.POSE)
        for i in pose_ids:
            if i not in odom:
                vals[pose_key(i)] = start.copy()
                continue
            prev, z = odom[i]
            p = vals[pose_key(prev)]
            pose = pose_compose(Pose2(p[0], p[1], p[2]), Pose2Delta(z[0], z[1], z[2]))
            vals[pose_key(i)] = np.array([pose.x, pose.y, pose.theta])

        pose_factors = [f for f in self.factors
                        if f.kind in (FactorKind.PRIOR, FactorKind.ODOMETRY, FactorKind.GPS)]
        has_gps = any(f.kind is FactorKind.GPS for f in pose_factors)
        has_gauge = has_gps or any(f.kind is FactorKind.PRIOR for f in pose_factors)
        if has_gps and has_gauge:
            shift = np.mean([f.measurement[:2] - vals[f.keys[0]][:2]
                             for f in pose_factors if f.kind is FactorKind.GPS], axis=0)
            for i in pose_ids:
                vals[pose_key(i)][:2] += shift
            sub = FactorGraph()
            for i in pose_ids:
                sub._add_variable(pose_key(i), vals[pose_key(i)])
            for f in pose_factors:
                sub._add_factor(f)
            sub.optimize(SolveMode.INCREMENTAL, max_iterations=50)
            for i in pose_ids:
                vals[pose_key(i)] = sub.estimates[pose_key(i)].copy()

        for f in self.factors:
            if f.kind is FactorKind.RANGE_BEARING and f.keys[1] not in vals:
                p = vals[f.keys[0]]
                pt = project_range_bearing(Pose2(p[0], p[1], p[2]),
                                           f.measurement[0], f.measurement[1])
                vals[f.keys[1]] = np.array([pt.x, pt.y])
        return vals

    # ------------------------------------------------------------------
    # optimization
    # ------------------------------------------------------------------
    def optimize(self, mode: SolveMode = SolveMode.INCREMENTAL,
                 max_iterations: int = 100, rel_tol: float = 1e-9) -> SolveReport:
        """Minimize the weighted least-squares cost over all variables.

        BATCH starts from initial_values(); INCREMENTAL warm-starts from the
        current estimates. Accepted Levenberg-Marquardt steps never increase
        the cost; convergence is declared when the relative cost decrease
        drops below rel_tol.
        """
        if not any(f.kind in (FactorKind.PRIOR, FactorKind.GPS) for f in self.factors):
            raise ValueError("graph needs a prior or at least one GPS factor to fix the gauge")
        values = self.initial_values() if mode is SolveMode.BATCH else self.estimates
        x = self._flatten(values)
        groups = self._build_groups()
        theta_idx = np.array([self._offsets[k] + 2 for k in self._keys
                              if k.kind is VarKind.POSE], dtype=int)

        cost = self._cost_from_groups(groups, x)
        initial_cost = cost
        lam = 1e-6
        iterations = 0
        converged = cost <= 1e-18
        while not converged and iterations < max_iterations:
            J, r = self._linearize(groups, x)
            g = J.T @ r
            h = (J.T @ J).tocsc()
            diag = h.diagonal()
            stepped = False
            while lam <= 1e10:
                damped = h + sp.diags(np.maximum(diag, 1e-12) * lam)
                try:
                    delta = spsolve(damped, -g)
                except RuntimeError as e:
                    raise NumericalFailureError(str(e)) from e
                if not np.all(np.isfinite(delta)):
                    lam *= 10.0
                    continue
                x_new = x + delta
                x_new[theta_idx] = _wrap(x_new[theta_idx])
                new_cost = self._cost_from_groups(groups, x_new)
                if new_cost < cost:
                    rel = (cost - new_cost) / max(cost, 1e-300)
                    x, cost = x_new, new_cost
                    lam = max(lam / 3.0, 1e-12)
                    stepped = True
                    if rel < rel_tol or cost <= 1e-18:
                        converged = True
                    break
                lam *= 10.0
            iterations += 1
            if not stepped:
                # No downhill step found; treat the current point as converged.
                converged = True
        self._unflatten(x)
        return SolveReport(iterations=iterations, initial_cost=initial_cost,
                           final_cost=cost, converged=converged,
                           values={k: v.copy() for k, v in self.estimates.items()})

    # ------------------------------------------------------------------
    # vectorized linearization
    # ------------------------------------------------------------------
    def _flatten(self, values: dict[Key, np.ndarray]) -> np.ndarray:
        x = np.zeros(self._n_params)
        for k in self._keys:
            off = self._offsets[k]
            x[off:off + _VAR_DIM[k.kind]] = values[k]
        return x

    def _unflatten(self, x: np.ndarray) -> None:
        for k in self._keys:
            off = self._offsets[k]
            self.estimates[k] = x[off:off + _VAR_DIM[k.kind]].copy()

    def _build_groups(self) -> list[dict]:
        """Group factors by kind (and GPS dimension) into array batches."""
        buckets: dict[tuple, list[Factor]] = {}
        for f in self.factors:
            buckets.setdefault((f.kind, f.dim), []).append(f)
        groups = []
        row = 0
        for (kind, dim), fs in sorted(buckets.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
            n = len(fs)
            offs = np.array([[self._offsets[k] for k in f.keys] for f in fs], dtype=int)
            group = {
                "kind": kind,
                "dim": dim,
                "n": n,
                "offsets": offs,
                "z": np.array([f.measurement for f in fs]),
                "w": np.array([f.sqrt_info for f in fs]),
                "rows": np.arange(row, row + n * dim).reshape(n, dim),
            }
            vdims = [_VAR_DIM[k.kind] for k in fs[0].keys]
            coords = []
            for a, vd in enumerate(vdims):
                rr = np.broadcast_to(group["rows"][:, :, None], (n, dim, vd)).ravel()
                cc = np.broadcast_to(offs[:, a][:, None, None] + np.arange(vd)[None, None, :],
                                     (n, dim, vd)).ravel()
                coords.append((rr, cc))
            group["coords"] = coords
            groups.append(group)
            row += n * dim
        self._total_rows = row
        return groups

    @staticmethod
    def _group_residual_blocks(group: dict, x: np.ndarray):
        """Whitened residuals (n, dim) and Jacobian blocks [(n, dim, vdim), ...]."""
        kind, n = group["kind"], group["n"]
        z, w, offs = group["z"], group["w"], group["offsets"]
        if kind is FactorKind.PRIOR or (kind is FactorKind.GPS and group["dim"] == 3):
            p = x[offs[:, 0][:, None] + np.arange(3)]
            r = z - p
            r[:, 2] = _wrap(r[:, 2])
            jac = np.broadcast_to(-np.eye(3), (n, 3, 3))
            return r, [jac]
        if kind is FactorKind.GPS:
            p = x[offs[:, 0][:, None] + np.arange(3)]
            r = z - p[:, :2]
            jac = np.zeros((n, 2, 3))
            jac[:, 0, 0] = -1.0
            jac[:, 1, 1] = -1.0
            return r, [jac]
        if kind is FactorKind.ODOMETRY:
            pa = x[offs[:, 0][:, None] + np.arange(3)]
            pb = x[offs[:, 1][:, None] + np.arange(3)]
            c, s = np.cos(pa[:, 2]), np.sin(pa[:, 2])
            ex, ey = pb[:, 0] - pa[:, 0], pb[:, 1] - pa[:, 1]
            h = np.stack([c * ex + s * ey, -s * ex + c * ey, _wrap(pb[:, 2] - pa[:, 2])], axis=1)
            r = z - h
            r[:, 2] = _wrap(r[:, 2])
            ja = np.zeros((n, 3, 3))
            ja[:, 0, 0] = c
            ja[:, 0, 1] = s
            ja[:, 0, 2] = s * ex - c * ey
            ja[:, 1, 0] = -s
            ja[:, 1, 1] = c
            ja[:, 1, 2] = c * ex + s * ey
            ja[:, 2, 2] = 1.0
            jb = np.zeros((n, 3, 3))
            jb[:, 0, 0] = -c
            jb[:, 0, 1] = -s
            jb[:, 1, 0] = s
            jb[:, 1, 1] = -c
            jb[:, 2, 2] = -1.0
            return r, [ja, jb]
        if kind is FactorKind.RANGE_BEARING:
            p = x[offs[:, 0][:, None] + np.arange(3)]
            l = x[offs[:, 1][:, None] + np.arange(2)]
            dx, dy = l[:, 0] - p[:, 0], l[:, 1] - p[:, 1]
            q = dx * dx + dy * dy
            if np.any(q < 1e-18):
                raise DegenerateGeometryError("landmark coincides with a pose")
            rng = np.sqrt(q)
            phi = np.arctan2(dy, dx) - p[:, 2]
            r = np.stack([z[:, 0] - rng, _wrap(z[:, 1] - phi)], axis=1)
            jp = np.zeros((n, 2, 3))
            jp[:, 0, 0] = dx / rng
            jp[:, 0, 1] = dy / rng
            jp[:, 1, 0] = -dy / q
            jp[:, 1, 1] = dx / q
            jp[:, 1, 2] = 1.0
            jl = np.zeros((n, 2, 2))
            jl[:, 0, 0] = -dx / rng
            jl[:, 0, 1] = -dy / rng
            jl[:, 1, 0] = dy / q
            jl[:, 1, 1] = -dx / q
            return r, [jp, jl]
        if kind is FactorKind.INTER_DISTANCE:
            li = x[offs[:, 0][:, None] + np.arange(2)]
            lj = x[offs[:, 1][:, None] + np.arange(2)]
            diff = li - lj
            d = np.hypot(diff[:, 0], diff[:, 1])
            if np.any(d < 1e-12):
                raise DegenerateGeometryError("coincident landmarks in distance factor")
            r = (z[:, 0] - d)[:, None]
            ji = (-diff / d[:, None])[:, None, :]
            return r, [ji, -ji]
        raise AssertionError(f"unhandled kind {kind}")

    def _whiten(self, group: dict, r: np.ndarray, blocks: list[np.ndarray]):
        w = group["w"]
        rw = np.einsum("nij,nj->ni", w, r)
        bw = [np.einsum("nij,njk->nik", w, b) for b in blocks]
        if self.huber_delta is not None:
            norms = np.linalg.norm(rw, axis=1)
            scale = np.sqrt(np.minimum(1.0, self.huber_delta / np.maximum(norms, 1e-12)))
            rw = rw * scale[:, None]
            bw = [b * scale[:, None, None] for b in bw]
        return rw, bw

    def _cost_from_groups(self, groups: list[dict], x: np.ndarray) -> float:
        total = 0.0
        for group in groups:
            r, blocks = self._group_residual_blocks(group, x)
            rw, _ = self._whiten(group, r, [])
            total += float(np.sum(rw * rw))
        return total

    def _linearize(self, groups: list[dict], x: np.ndarray):
        data_parts, row_parts, col_parts = [], [], []
        resid = np.zeros(self._total_rows)
        for group in groups:
            r, blocks = self._group_residual_blocks(group, x)
            rw, bw = self._whiten(group, r, blocks)
            resid[group["rows"].ravel()] = rw.ravel()
            for (rr, cc), b in zip(group["coords"], bw):
                row_parts.append(rr)
                col_parts.append(cc)
                data_parts.append(b.ravel())
        J = sp.coo_matrix(
            (np.concatenate(data_parts),
             (np.concatenate(row_parts), np.concatenate(col_parts))),
            shape=(self._total_rows, self._n_params)).tocsr()
        return J, resid

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------
    def to_snapshot(self) -> dict:
        """JSON-ready snapshot of variables, factors, and covariances."""
        return {
            "variables": [
                {"kind": k.kind.value, "index": k.index,
                 "estimate": self.estimates[k].tolist()}
                for k in self._keys
            ],
            "factors": [
                {"kind": f.kind.value,
                 "keys": [[k.kind.value, k.index] for k in f.keys],
                 "measurement": f.measurement.tolist(),
                 "covariance": f.covariance.tolist()}
                for f in self.factors
            ],
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "FactorGraph":
        g = cls()
        pose_ids = []
        for v in snap["variables"]:
            key = Key(VarKind(v["kind"]), v["index"])
            g._add_variable(key, np.asarray(v["estimate"], dtype=float))
            if key.kind is VarKind.POSE:
                pose_ids.append(key.index)
        for fd in snap["factors"]:
            keys = tuple(Key(VarKind(k), i) for k, i in fd["keys"])
            g._add_factor(Factor(FactorKind(fd["kind"]), keys,
                                 np.asarray(fd["measurement"], dtype=float),
                                 np.asarray(fd["covariance"], dtype=float)))
        g._last_pose_index = max(pose_ids) if pose_ids else None
        return g
