"""Small planar geometry helpers for lane polylines and footprints.

All computations run in the x/y plane; z coordinates are carried through
untouched. Polylines are float64 arrays of shape (n, 3).
"""

from __future__ import annotations

import math

import numpy as np
from shapely.geometry import Point, Polygon


def as_polyline(points) -> np.ndarray:
    """Coerce a point list to an (n, 3) float64 array, padding z with 0."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] not in (2, 3):
        raise ValueError("polyline must be a list of >= 2 points with 2 or 3 coords")
    if arr.shape[1] == 2:
        arr = np.hstack([arr, np.zeros((arr.shape[0], 1))])
    return arr


def arc_length(polyline: np.ndarray) -> float:
    """Total x/y arc length of a polyline."""
    d = np.diff(polyline[:, :2], axis=0)
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def cumulative_arc_length(polyline: np.ndarray) -> np.ndarray:
    d = np.diff(polyline[:, :2], axis=0)
    seg = np.hypot(d[:, 0], d[:, 1])
    return np.concatenate([[0.0], np.cumsum(seg)])


def point_at_arc_length(polyline: np.ndarray, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (point, unit tangent) at arc length s, clamped to the polyline."""
    cum = cumulative_arc_length(polyline)
    total = cum[-1]
    s = min(max(s, 0.0), total)
    idx = int(np.searchsorted(cum, s, side="right") - 1)
    idx = min(idx, len(polyline) - 2)
    seg_len = cum[idx + 1] - cum[idx]
    t = 0.0 if seg_len <= 0 else (s - cum[idx]) / seg_len
    p = polyline[idx] + t * (polyline[idx + 1] - polyline[idx])
    tangent = polyline[idx + 1, :2] - polyline[idx, :2]
    norm = np.hypot(tangent[0], tangent[1])
    tangent = tangent / norm if norm > 0 else np.array([1.0, 0.0])
    return p, tangent


def project_to_polyline(polyline: np.ndarray, point) -> tuple[float, float]:
    """Project an x/y point onto a polyline.

    Returns (arc length of the closest point, lateral distance). Ties between
    segments resolve to the smallest arc length.
    """
    p = np.asarray(point, dtype=np.float64)[:2]
    cum = cumulative_arc_length(polyline)
    best_s, best_d = 0.0, math.inf
    for i in range(len(polyline) - 1):
        a = polyline[i, :2]
        b = polyline[i + 1, :2]
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom <= 0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
        q = a + t * ab
        d = float(np.hypot(*(p - q)))
        if d < best_d - 1e-12:
            best_d = d
            best_s = float(cum[i] + t * np.hypot(*ab))
    return best_s, best_d


def heading_of_tangent(tangent: np.ndarray) -> float:
    return math.atan2(float(tangent[1]), float(tangent[0]))


def angle_difference(a: float, b: float) -> float:
    """Absolute difference between two angles, wrapped to [0, pi]."""
    d = (a - b) % (2.0 * math.pi)
    return min(d, 2.0 * math.pi - d)


def offset_polyline(polyline: np.ndarray, offset: float) -> np.ndarray:
    """Offset a polyline laterally (positive = left of travel direction).

    Uses averaged segment normals with a clamped miter so right-angle
    connectors stay well formed.
    """
    pts = polyline[:, :2]
    n = len(pts)
    normals = np.zeros((n - 1, 2))
    for i in range(n - 1):
        d = pts[i + 1] - pts[i]
        length = np.hypot(*d)
        if length <= 0:
            raise ValueError("degenerate polyline segment")
        normals[i] = np.array([-d[1], d[0]]) / length
    out = np.zeros_like(polyline)
    out[:, 2] = polyline[:, 2]
    for i in range(n):
        if i == 0:
            nrm = normals[0]
        elif i == n - 1:
            nrm = normals[-1]
        else:
            nrm = normals[i - 1] + normals[i]
            length = np.hypot(*nrm)
            if length < 1e-9:
                nrm = normals[i]
            else:
                nrm = nrm / length
                # miter scale, clamped to avoid spikes at sharp corners
                cos_half = float(np.clip(nrm @ normals[i], 0.5, 1.0))
                nrm = nrm / cos_half
        out[i, :2] = pts[i] + offset * nrm
    return out


def footprint_polygon(left_boundary: np.ndarray, right_boundary: np.ndarray) -> Polygon:
    """Lane footprint: left boundary followed by the reversed right boundary."""
    coords = [tuple(p[:2]) for p in left_boundary]
    coords += [tuple(p[:2]) for p in right_boundary[::-1]]
    poly = Polygon(coords)
    if not poly.is_valid:
        poly = poly.buffer(0)
    return poly


def oriented_box(center, heading_rad: float, length_m: float, width_m: float) -> list[np.ndarray]:
    """Corners of an oriented rectangle around a center point."""
    c = np.asarray(center, dtype=np.float64)[:2]
    dx = np.array([math.cos(heading_rad), math.sin(heading_rad)])
    dy = np.array([-dx[1], dx[0]])
    half_l, half_w = length_m / 2.0, width_m / 2.0
    return [c + sx * half_l * dx + sy * half_w * dy
            for sx in (1.0, -1.0) for sy in (1.0, -1.0)]


def polygon_contains(poly: Polygon, point) -> bool:
    p = np.asarray(point, dtype=np.float64)
    return bool(poly.covers(Point(float(p[0]), float(p[1]))))
