"""Topological state of a multi-arm configuration.

Three scales are computed from discretized centerlines:

  pairwise - Gauss linking number between every pair of arms,
  local    - writhe (self-coiling) of each arm,
  global   - crossing events of the projected configuration, which feed the
             braid word whose simplified length |Br| enters the risk score.

The linking and writhe sums discretize the Gauss integral over segment pairs
with an epsilon-regularized denominator, so near-singular geometry degrades
gracefully instead of faulting. Arms are open curves; the continuous risk
signals use them directly, while integer-valued tests (the entanglement
indicator) close each arm virtually through its base far below the workspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import ArmState, Polyline
from .safety import RiskCoeffs, risk_score

__all__ = [
    "TopoState",
    "CrossingSign",
    "CrossingEvent",
    "CrossingScan",
    "linking_number",
    "writhe",
    "linking_matrix",
    "detect_crossings",
    "close_polyline",
    "topo_state",
    "EntanglementDetector",
]

DEFAULT_EPS = 1e-9  # m^3, guards true segment-distance singularities only
_DEGENERATE_DET = 1e-12
_CHUNK = 512


def _pts(curve) -> np.ndarray:
    if isinstance(curve, ArmState):
        return curve.centerline.points
    if isinstance(curve, Polyline):
        return curve.points
    return np.asarray(curve, dtype=float)


def _gauss_double_sum(pa, sa, pb, sb, eps) -> float:
    # Fixed row-chunked summation order: results are bit-stable across calls.
    # Triple product written out componentwise; np.cross is slow on small arrays.
    total = 0.0
    for i0 in range(0, len(sa), _CHUNK):
        i1 = min(i0 + _CHUNK, len(sa))
        d = pa[i0:i1, None, :] - pb[None, :, :]
        a = sa[i0:i1, None, :]
        b = sb[None, :, :]
        num = ((a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]) * d[..., 0]
               + (a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]) * d[..., 1]
               + (a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]) * d[..., 2])
        d2 = d[..., 0] ** 2 + d[..., 1] ** 2 + d[..., 2] ** 2
        d3 = np.sqrt(d2) ** 3
        total += float((num / (d3 + eps)).sum())
    return total / (4.0 * math.pi)


def linking_number(a, b, eps: float = DEFAULT_EPS) -> float:
    """Discretized Gauss linking number between two polylines.

    (1/4pi) sum_a sum_b (dr_a x dr_b) . (r_a - r_b) / (|r_a - r_b|^3 + eps)
    with r the segment start nodes and dr the segment vectors. Symmetric in
    its arguments; near +/-1 for well-discretized singly-linked closed curves.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    pa, pb = _pts(a), _pts(b)
    return _gauss_double_sum(pa[:-1], pa[1:] - pa[:-1], pb[:-1], pb[1:] - pb[:-1], eps)


def writhe(a, eps: float = DEFAULT_EPS) -> float:
    """Self-linking analogue of linking_number on one curve.

    Same kernel over all distinct segment pairs of the curve (the diagonal
    contributes exactly zero and drops out). Planar curves give 0; mirror
    images negate. A single segment has no pairs, so its writhe is 0.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    pa = _pts(a)
    if len(pa) < 3:
        return 0.0
    sa = pa[1:] - pa[:-1]
    return _gauss_double_sum(pa[:-1], sa, pa[:-1], sa, eps)


def linking_matrix(curves, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Symmetric N x N matrix of pairwise linking numbers, zero diagonal."""
    n = len(curves)
    lk = np.zeros((n, n))
    for j in range(n):
        for k in range(j + 1, n):
            lk[j, k] = lk[k, j] = linking_number(curves[j], curves[k], eps)
    return lk


def _gauss_batch(pa, sa, pb, sb, eps) -> np.ndarray:
    # Batched kernel over B curve pairs of equal segment count: one fused
    # evaluation instead of B small ones. Per-pair reduction tree matches the
    # chunked single-pair path for segment counts below _CHUNK.
    d = pa[:, :, None, :] - pb[:, None, :, :]
    a = sa[:, :, None, :]
    b = sb[:, None, :, :]
    num = ((a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]) * d[..., 0]
           + (a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]) * d[..., 1]
           + (a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]) * d[..., 2])
    d2 = d[..., 0] ** 2 + d[..., 1] ** 2 + d[..., 2] ** 2
    d3 = np.sqrt(d2) ** 3
    vals = (num / (d3 + eps)).reshape(len(pa), -1).sum(axis=1)
    return vals / (4.0 * math.pi)


def linking_row(curve, others, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Linking numbers of one curve against several others, batched when square."""
    pa = _pts(curve)
    pts = [_pts(c) for c in others]
    if not pts:
        return np.zeros(0)
    m = len(pa)
    if any(len(p) != m for p in pts) or m < 2 or m - 1 > _CHUNK:
        return np.array([linking_number(pa, p, eps) for p in pts])
    stack = np.asarray(pts)
    sa = pa[1:] - pa[:-1]
    starts = np.broadcast_to(pa[:-1], (len(pts), m - 1, 3))
    segs = np.broadcast_to(sa, (len(pts), m - 1, 3))
    return _gauss_batch(starts, segs, stack[:, :-1], stack[:, 1:] - stack[:, :-1], eps)


def linking_bundle(curves, eps: float = DEFAULT_EPS):
    """Pairwise linking matrix and per-curve writhes in one fused kernel pass.

    Equal node counts below the chunk size batch into a single evaluation that
    matches linking_matrix and writhe; ragged or long inputs fall back to the
    per-pair path.
    """
    pts = [_pts(c) for c in curves]
    n = len(pts)
    m = len(pts[0]) if pts else 0
    if n == 0:
        return np.zeros((0, 0)), np.zeros(0)
    if any(len(p) != m for p in pts) or m < 2 or m - 1 > _CHUNK:
        return (linking_matrix(pts, eps),
                np.array([writhe(p, eps) for p in pts]))
    stack = np.asarray(pts)
    starts = stack[:, :-1]
    segs = stack[:, 1:] - stack[:, :-1]
    jj, kk = np.triu_indices(n, 1)
    rows = np.concatenate([jj, np.arange(n)])
    cols = np.concatenate([kk, np.arange(n)])
    vals = _gauss_batch(starts[rows], segs[rows], starts[cols], segs[cols], eps)
    lk = np.zeros((n, n))
    lk[jj, kk] = lk[kk, jj] = vals[: len(jj)]
    wr = vals[len(jj):].copy()
    if m < 3:
        wr[:] = 0.0  # single segment has no pairs
    return lk, wr


class CrossingSign(Enum):
    """Which way the lower-indexed strand passes at a projected crossing."""

    UNDER = 1   # strand i under strand i+1: contributes sigma_i
    OVER = -1   # strand i over strand i+1: contributes sigma_i^-1

    @property
    def exponent(self) -> int:
        return self.value


@dataclass(frozen=True)
class CrossingEvent:
    strand_index: int  # generator index i: crossing between strands i and i+1
    sign: CrossingSign
    time_step: int = 0


class CrossingScan(list):
    """Sequence of CrossingEvent plus a tally of skipped degenerate intersections."""

    degenerate_skips: int = 0


def _projection_frame(direction: np.ndarray):
    d = np.asarray(direction, dtype=float).reshape(3)
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise ValueError("projection direction must be a unit vector")
    helper = np.eye(3)[np.argmin(np.abs(d))]
    u = np.cross(helper, d)
    u /= np.linalg.norm(u)
    v = np.cross(d, u)
    return u, v, d


def detect_crossings(arms, direction, time_step: int = 0) -> CrossingScan:
    """Transversal crossings between strand-adjacent arms in projection.

    Arms must already be ordered by strand position (base coordinate along a
    fixed axis of the projection plane); position k in the sequence is strand
    k+1. For each adjacent pair, every transversal intersection of projected
    segments yields one event; the strand nearer the viewer (larger component
    along `direction`) passes over. Events are ordered by strand index, then
    by parameter along the lower strand. Tangential or depth-degenerate
    intersections (determinant below 1e-12, or equal depths) are skipped and
    tallied on the returned scan.
    """
    u, v, d = _projection_frame(direction)
    flat = []
    for arm in arms:
        p = _pts(arm)
        flat.append(np.stack([p @ u, p @ v, p @ d], axis=1))  # (x', y', depth)

    scan = CrossingScan()
    skips = 0
    for k in range(len(flat) - 1):
        pa, pb = flat[k], flat[k + 1]
        a0, da = pa[:-1], pa[1:] - pa[:-1]
        b0, db = pb[:-1], pb[1:] - pb[:-1]
        # 2D segment-pair intersection solved in bulk
        denom = da[:, None, 0] * db[None, :, 1] - da[:, None, 1] * db[None, :, 0]
        rel = b0[None, :, :2] - a0[:, None, :2]
        t_num = rel[:, :, 0] * db[None, :, 1] - rel[:, :, 1] * db[None, :, 0]
        s_num = rel[:, :, 0] * da[:, None, 1] - rel[:, :, 1] * da[:, None, 0]
        nondeg = np.abs(denom) >= _DEGENERATE_DET
        safe = np.where(nondeg, denom, 1.0)
        t = t_num / safe
        s = s_num / safe
        inside = nondeg & (t > 0.0) & (t < 1.0) & (s > 0.0) & (s < 1.0)
        if not nondeg.all():
            # tangential contacts: intersection point on a segment boundary or
            # parallel overlap with a tiny determinant while bounding boxes touch
            grazing = (~nondeg) & _boxes_touch(a0, da, b0, db)
            skips += int(grazing.sum())
        ii, jj = np.nonzero(inside)
        if ii.size == 0:
            continue
        depth_a = pa[ii, 2] + t[ii, jj] * (pa[ii + 1, 2] - pa[ii, 2])
        depth_b = pb[jj, 2] + s[ii, jj] * (pb[jj + 1, 2] - pb[jj, 2])
        order = np.lexsort((s[ii, jj], t[ii, jj], ii))
        for idx in order:
            za, zb = depth_a[idx], depth_b[idx]
            if za == zb:
                skips += 1  # true centerline contact, orientation undefined
                continue
            sign = CrossingSign.OVER if za > zb else CrossingSign.UNDER
            scan.append(CrossingEvent(k + 1, sign, time_step))
    scan.degenerate_skips = skips
    return scan


def _boxes_touch(a0, da, b0, db) -> np.ndarray:
    alo = np.minimum(a0[:, :2], a0[:, :2] + da[:, :2])
    ahi = np.maximum(a0[:, :2], a0[:, :2] + da[:, :2])
    blo = np.minimum(b0[:, :2], b0[:, :2] + db[:, :2])
    bhi = np.maximum(b0[:, :2], b0[:, :2] + db[:, :2])
    return (
        (alo[:, None, 0] <= bhi[None, :, 0]) & (blo[None, :, 0] <= ahi[:, None, 0])
        & (alo[:, None, 1] <= bhi[None, :, 1]) & (blo[None, :, 1] <= ahi[:, None, 1])
    )


def close_polyline(p, depth: float = 10.0, max_segment: float | None = None) -> Polyline:
    """Virtually close an open centerline through its base.

    Appends a return path: straight down from the tip to a floor `depth`
    below the curve's lowest point, across to below the base, and back up to
    the base point. Stagger `depth` per arm when closing several arms so the
    floor runs of different closures cannot intersect. `max_segment`
    subdivides the return legs; the start-node Gauss kernel needs closure
    segments no longer than their distance to the other curve, so callers
    feeding linking_number should pass a value near the arm segment length.
    """
    pts = _pts(p)
    base, tip = pts[0], pts[-1]
    floor = min(pts[:, 2].min(), base[2]) - depth
    way = [tip, np.array([tip[0], tip[1], floor]), np.array([base[0], base[1], floor]), base]
    if abs(tip[0] - base[0]) < 1e-12 and abs(tip[1] - base[1]) < 1e-12:
        del way[2]  # tip directly above base: single floor point suffices
    extra = []
    for a, b in zip(way[:-1], way[1:]):
        k = 1
        if max_segment is not None:
            k = max(1, int(np.ceil(np.linalg.norm(b - a) / max_segment)))
        extra.extend(a + (b - a) * i / k for i in range(1, k + 1))
    return Polyline(np.vstack([pts, extra]))


@dataclass
class TopoState:
    """Per-step topological summary of the whole system."""

    linking: np.ndarray        # symmetric N x N, zero diagonal
    writhes: np.ndarray        # length N
    braid_length: int          # length of the current simplified braid word
    risk: float

    @property
    def max_abs_linking(self) -> float:
        return float(np.abs(self.linking).max()) if self.linking.size else 0.0


def topo_state(arms, braid_length: int, entangled: bool, coeffs: RiskCoeffs,
               eps: float = DEFAULT_EPS) -> TopoState:
    """Assemble the topological state bundle and its risk score."""
    curves = [_pts(a) for a in arms]
    lk, wr = linking_bundle(curves, eps)
    max_lk = float(np.abs(lk).max()) if len(curves) > 1 else 0.0
    return TopoState(lk, wr, int(braid_length),
                     risk_score(max_lk, braid_length, entangled, coeffs))


@dataclass
class EntanglementDetector:
    """Hysteresis detector for confirmed entanglement.

    The raw condition is max |Lk| >= lk_threshold on virtually closed arms
    AND simplified braid length >= braid_threshold; the indicator turns on
    only after the condition persists for `persistence` consecutive steps and
    turns off as soon as it breaks.
    """

    lk_threshold: float = 0.8
    braid_threshold: int = 4
    persistence: int = 3
    streak: int = field(default=0, init=False)
    entangled: bool = field(default=False, init=False)

    def update(self, closed_linking: np.ndarray, braid_length: int) -> bool:
        max_lk = float(np.abs(closed_linking).max()) if closed_linking.size else 0.0
        hot = max_lk >= self.lk_threshold and braid_length >= self.braid_threshold
        self.streak = self.streak + 1 if hot else 0
        self.entangled = self.streak >= self.persistence
        return self.entangled

    def flagged_pairs(self, closed_linking: np.ndarray):
        """Arm index pairs currently at or above the linking threshold."""
        if not self.entangled:
            return []
        j, k = np.nonzero(np.triu(np.abs(closed_linking) >= self.lk_threshold, 1))
        return list(zip(j.tolist(), k.tolist()))

    def reset(self):
        self.streak = 0
        self.entangled = False
