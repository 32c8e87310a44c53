"""Geometric kernels: ray/triangle intersection, mirror images, reflection points.

Points are plain ``numpy`` float64 arrays of shape ``(3,)``. The batched
helpers operate on stacked triangles (``TriangleArrays``) so that the
coverage and validity passes can test thousands of segments at once.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

EPS_T = 1e-6        # minimum ray parameter (m), avoids self-hits at bounce points
EPS_DEN = 1e-9      # reflection-point denominator guard
EPS_AREA = 1e-8     # m^2, smallest admissible triangle
EPS_DET = 1e-12     # parallel ray / triangle guard in Moller-Trumbore


class GeometryError(ValueError):
    """Raised for inputs that violate a geometric precondition."""


def vec3(p) -> np.ndarray:
    a = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise GeometryError(f"non-finite point {a}")
    return a


@dataclass(frozen=True)
class Triangle:
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    normal: np.ndarray
    centroid: np.ndarray

    @classmethod
    def from_vertices(cls, v1, v2, v3) -> "Triangle":
        a, b, c = vec3(v1), vec3(v2), vec3(v3)
        n = np.cross(b - a, c - a)
        norm = np.linalg.norm(n)
        if 0.5 * norm <= EPS_AREA:
            raise GeometryError("degenerate triangle (area below threshold)")
        return cls(a, b, c, n / norm, (a + b + c) / 3.0)

    @property
    def area(self) -> float:
        return 0.5 * float(np.linalg.norm(np.cross(self.v2 - self.v1, self.v3 - self.v1)))

    def vertices(self) -> np.ndarray:
        return np.stack([self.v1, self.v2, self.v3])


@dataclass(frozen=True)
class Hit:
    t: float
    u: float
    v: float
    point: np.ndarray


def ray_triangle_intersect(origin, direction, tri: Triangle) -> Optional[Hit]:
    """Moller-Trumbore test. Boundary hits count; ``t`` must exceed ``EPS_T``.

    ``u`` weights ``v2`` and ``v`` weights ``v3``, so the hit point is
    ``(1-u-v) v1 + u v2 + v v3``.
    """
    o = vec3(origin)
    d = vec3(direction)
    if not np.linalg.norm(d) > 0:
        raise GeometryError("zero ray direction")
    if tri.area <= EPS_AREA:
        raise GeometryError("degenerate triangle")
    e1 = tri.v2 - tri.v1
    e2 = tri.v3 - tri.v1
    p = np.cross(d, e2)
    det = float(e1 @ p)
    if abs(det) < EPS_DET * np.linalg.norm(e1) * np.linalg.norm(e2) * np.linalg.norm(d):
        return None
    inv = 1.0 / det
    s = o - tri.v1
    u = float(s @ p) * inv
    if u < 0.0 or u > 1.0:
        return None
    q = np.cross(s, e1)
    v = float(d @ q) * inv
    if v < 0.0 or u + v > 1.0:
        return None
    t = float(e2 @ q) * inv
    if t < EPS_T:
        return None
    return Hit(t, u, v, o + t * d)


def mirror_point(p, plane_point, unit_normal) -> np.ndarray:
    """Reflect ``p`` across the plane through ``plane_point`` with normal ``unit_normal``."""
    n = vec3(unit_normal)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise GeometryError("mirror plane normal must be unit length")
    p = vec3(p)
    d = float((p - vec3(plane_point)) @ n)
    return p - 2.0 * d * n


def reflection_point(o_vbs, o_bs, o_ue) -> np.ndarray:
    """Specular bounce point of the BS->UE path whose image source is ``o_vbs``.

    The point lies on the perpendicular bisector plane of BS and VBS and on
    the line from the VBS towards the UE.
    """
    vbs, bs, ue = vec3(o_vbs), vec3(o_bs), vec3(o_ue)
    a = bs - vbs
    b = ue - vbs
    den = 2.0 * float(a @ b)
    if abs(den) <= EPS_DEN:
        raise GeometryError("grazing/invalid reflection geometry")
    return vbs + float(a @ a) * b / den


def reflection_fraction(o_vbs, o_bs, o_ue) -> float:
    """Position of the bounce point along VBS->UE as a fraction in (0, 1) when valid."""
    vbs, bs, ue = vec3(o_vbs), vec3(o_bs), vec3(o_ue)
    a = bs - vbs
    den = 2.0 * float(a @ (ue - vbs))
    if abs(den) <= EPS_DEN:
        raise GeometryError("grazing/invalid reflection geometry")
    return float(a @ a) / den


def segment_occluded(p1, p2, meshes: Sequence[Triangle], exclude: Iterable[int] = ()) -> bool:
    """True iff a non-excluded triangle cuts the open segment ``p1 -> p2``."""
    a, b = vec3(p1), vec3(p2)
    seg = b - a
    length = float(np.linalg.norm(seg))
    if length == 0.0:
        raise GeometryError("segment endpoints coincide")
    d = seg / length
    skip = set(exclude)
    for i, tri in enumerate(meshes):
        if i in skip:
            continue
        hit = ray_triangle_intersect(a, d, tri)
        if hit is not None and hit.t < length - EPS_T:
            return True
    return False


# ---------------------------------------------------------------------------
# batched kernels


@dataclass(frozen=True)
class TriangleArrays:
    """Stacked triangle data: ``v0`` plus edge vectors, normals and centroids."""

    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    normal: np.ndarray
    centroid: np.ndarray

    @classmethod
    def from_triangles(cls, tris: Sequence[Triangle]) -> "TriangleArrays":
        if len(tris) == 0:
            z = np.zeros((0, 3))
            return cls(z, z, z, z, z)
        v1 = np.stack([t.v1 for t in tris])
        v2 = np.stack([t.v2 for t in tris])
        v3 = np.stack([t.v3 for t in tris])
        return cls(v1, v2 - v1, v3 - v1,
                   np.stack([t.normal for t in tris]),
                   np.stack([t.centroid for t in tris]))

    def __len__(self) -> int:
        return len(self.v0)

    def subset(self, idx) -> "TriangleArrays":
        idx = np.asarray(idx, dtype=int)
        return TriangleArrays(self.v0[idx], self.e1[idx], self.e2[idx],
                              self.normal[idx], self.centroid[idx])


def batch_intersect(origins: np.ndarray, dirs: np.ndarray, tris: TriangleArrays):
    """Moller-Trumbore for every (ray, triangle) pair.

    Returns ``(hit, t, u, v)`` arrays of shape ``(n_rays, n_tris)``; ``t`` is
    in units of the (unnormalised) direction vectors. No lower bound on ``t``
    is applied here.
    """
    o = np.asarray(origins, dtype=float)[:, None, :]
    d = np.asarray(dirs, dtype=float)[:, None, :]
    e1 = tris.e1[None, :, :]
    e2 = tris.e2[None, :, :]
    p = np.cross(d, e2)
    det = np.sum(e1 * p, axis=-1)
    scale = (np.linalg.norm(tris.e1, axis=1) * np.linalg.norm(tris.e2, axis=1))[None, :] \
        * np.linalg.norm(np.asarray(dirs, dtype=float), axis=1)[:, None]
    ok = np.abs(det) >= EPS_DET * scale
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = o - tris.v0[None, :, :]
    u = np.sum(s * p, axis=-1) * inv
    q = np.cross(s, e1)
    v = np.sum(d * q, axis=-1) * inv
    t = np.sum(e2 * q, axis=-1) * inv
    hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0)
    return hit, t, u, v


def intersect_pairs(origins: np.ndarray, dirs: np.ndarray, tris: TriangleArrays):
    """Moller-Trumbore for ray ``i`` against triangle ``i``.

    Same conventions as ``ray_triangle_intersect``: boundary hits count and
    ``t`` must exceed ``EPS_T``. Returns ``(hit, t, u, v)`` of shape ``(n,)``.
    """
    o = np.asarray(origins, dtype=float)
    d = np.asarray(dirs, dtype=float)
    p = np.cross(d, tris.e2)
    det = np.einsum("ij,ij->i", tris.e1, p)
    scale = np.linalg.norm(tris.e1, axis=1) * np.linalg.norm(tris.e2, axis=1) * np.linalg.norm(d, axis=1)
    ok = np.abs(det) >= EPS_DET * scale
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = o - tris.v0
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, tris.e1)
    v = np.einsum("ij,ij->i", d, q) * inv
    t = np.einsum("ij,ij->i", tris.e2, q) * inv
    hit = ok & (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (u + v <= 1.0) & (t >= EPS_T)
    return hit, t, u, v


def segments_occluded(p1: np.ndarray, p2: np.ndarray, tris: TriangleArrays,
                      exclude_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Vectorised ``segment_occluded`` over many segments.

    ``exclude_mask`` is either a boolean mask over triangles applied to every
    segment, or a ``(n_segments, n_tris)`` mask.
    """
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    p2 = np.atleast_2d(np.asarray(p2, dtype=float))
    n = max(len(p1), len(p2))
    p1 = np.broadcast_to(p1, (n, 3))
    p2 = np.broadcast_to(p2, (n, 3))
    if len(tris) == 0 or n == 0:
        return np.zeros(n, dtype=bool)
    seg = p2 - p1
    length = np.linalg.norm(seg, axis=1)
    if np.any(length == 0.0):
        raise GeometryError("segment endpoints coincide")
    # normalised directions keep t in metres, matching the scalar kernel
    d = seg / length[:, None]
    out = np.zeros(n, dtype=bool)
    # chunk to bound the (n, m, 3) temporaries
    chunk = max(1, 200_000 // max(1, len(tris)))
    for s in range(0, n, chunk):
        sl = slice(s, min(n, s + chunk))
        hit, t, _, _ = batch_intersect(p1[sl], d[sl], tris)
        blocked = hit & (t > EPS_T) & (t < length[sl, None] - EPS_T)
        if exclude_mask is not None:
            m = np.asarray(exclude_mask, dtype=bool)
            blocked &= ~(m[None, :] if m.ndim == 1 else m[sl])
        out[sl] = blocked.any(axis=1)
    return out


def triangle_contains(points: np.ndarray, tri: Triangle, tol: float = 1e-9) -> np.ndarray:
    """Barycentric containment of points projected onto the triangle plane."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    e1 = tri.v2 - tri.v1
    e2 = tri.v3 - tri.v1
    w = pts - tri.v1
    d11, d12, d22 = e1 @ e1, e1 @ e2, e2 @ e2
    den = d11 * d22 - d12 * d12
    w1 = w @ e1
    w2 = w @ e2
    u = (d22 * w1 - d12 * w2) / den
    v = (d11 * w2 - d12 * w1) / den
    return (u >= -tol) & (v >= -tol) & (u + v <= 1.0 + tol)
