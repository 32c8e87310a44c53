"""Per-object reflector meshes from clustered LiDAR points.

Objects are split into near-planar patches (local-sampling RANSAC followed
by least-squares refinement); each patch is projected to its plane, its 2-D
alpha shape is computed and triangulated. The union of patch triangulations
forms the object mesh, which ``qem.simplify_qem`` then decimates.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .geom import EPS_AREA, Triangle


class MeshFormatError(ValueError):
    pass


@dataclass
class TriMesh:
    vertices: np.ndarray          # (n, 3)
    faces: np.ndarray             # (m, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face index out of range")

    def __len__(self) -> int:
        return len(self.faces)

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    def face_normals(self) -> np.ndarray:
        v = self.vertices[self.faces]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def face_areas(self) -> np.ndarray:
        v = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum()) if len(self.faces) else 0.0

    def triangles(self) -> List[Triangle]:
        return [Triangle.from_vertices(*self.vertices[f]) for f in self.faces]

    def drop_degenerate(self) -> "TriMesh":
        if not len(self.faces):
            return self
        return TriMesh(self.vertices, self.faces[self.face_areas() > EPS_AREA])

    @staticmethod
    def concat(meshes: List["TriMesh"]) -> "TriMesh":
        verts, faces, off = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            faces.append(m.faces + off)
            off += len(m.vertices)
        if not verts:
            return TriMesh.empty()
        return TriMesh(np.vstack(verts), np.vstack(faces))


# ---------------------------------------------------------------------------
# plane segmentation


@dataclass
class Patch:
    normal: np.ndarray
    offset: float           # plane: normal . x = offset
    points: np.ndarray

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


def fit_plane(points: np.ndarray) -> Tuple[np.ndarray, float]:
    c = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - c, full_matrices=False)
    n = vt[-1]
    return n, float(n @ c)


def segment_planes(points: np.ndarray, dist_thresh: float, min_inliers: int,
                   seed: int = 0, iterations: int = 300, neighbourhood: int = 24,
                   max_planes: int = 64) -> List[Patch]:
    """Greedy largest-consensus plane extraction."""
    rng = np.random.default_rng(seed)
    remaining = np.asarray(points, dtype=float)
    patches: List[Patch] = []
    while len(remaining) >= min_inliers and len(patches) < max_planes:
        k = min(neighbourhood, len(remaining))
        tree = cKDTree(remaining)
        best_count, best = 0, None
        seeds = rng.integers(0, len(remaining), iterations)
        _, nbrs = tree.query(remaining[seeds], k=k)
        nbrs = np.asarray(nbrs).reshape(iterations, -1)
        for it in range(iterations):
            pick = rng.choice(nbrs.shape[1], size=2, replace=False) if k > 2 else [0, 1]
            a, b, c = remaining[seeds[it]], remaining[nbrs[it, pick[0]]], remaining[nbrs[it, pick[1]]]
            n = np.cross(b - a, c - a)
            norm = np.linalg.norm(n)
            if norm < 1e-9:
                continue
            n /= norm
            count = int(np.count_nonzero(np.abs(remaining @ n - n @ a) < dist_thresh))
            if count > best_count:
                best_count, best = count, (n, float(n @ a))
        if best is None or best_count < min_inliers:
            break
        n, off = best
        for _ in range(3):
            inl = np.abs(remaining @ n - off) < dist_thresh
            if inl.sum() < 3:
                break
            n, off = fit_plane(remaining[inl])
        inl = np.abs(remaining @ n - off) < dist_thresh
        if inl.sum() < min_inliers:
            break
        patches.append(Patch(n, off, remaining[inl]))
        remaining = remaining[~inl]
    return patches


def orient_patch(patch: Patch, object_centroid: np.ndarray, tol: float = 1e-6) -> Patch:
    """Flip the normal so it points away from the object centroid.

    A patch through the centroid (a lone wall) falls back to making the
    largest-magnitude normal component positive.
    """
    n = patch.normal
    s = float(n @ (patch.centroid - object_centroid))
    if abs(s) <= tol:
        s = n[int(np.argmax(np.abs(n)))]
    if s < 0:
        return Patch(-n, -patch.offset, patch.points)
    return patch


# ---------------------------------------------------------------------------
# alpha shape + triangulation


def plane_frame(normal: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """In-plane axes (u, v) with u x v = normal."""
    e = np.eye(3)[int(np.argmin(np.abs(normal)))]
    u = np.cross(normal, e)
    u /= np.linalg.norm(u)
    return u, np.cross(normal, u)


def _circumradius(p: np.ndarray) -> np.ndarray:
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) \
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    area = 0.5 * np.abs(cross)
    with np.errstate(divide="ignore"):
        return np.where(area > 0, a * b * c / (4.0 * area), np.inf)


def alpha_triangulation(xy: np.ndarray, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    """Triangulate the 2-D alpha shape of ``xy`` using its boundary vertices only.

    Returns ``(vertices_2d, triangles)`` with counter-clockwise triangles.
    """
    xy = np.unique(np.asarray(xy, dtype=float), axis=0)
    if len(xy) < 3:
        return np.zeros((0, 2)), np.zeros((0, 3), dtype=np.int64)
    try:
        dt = Delaunay(xy)
    except Exception:   # collinear or otherwise degenerate input
        return np.zeros((0, 2)), np.zeros((0, 3), dtype=np.int64)
    keep = _circumradius(xy[dt.simplices]) < alpha
    if not keep.any():
        return np.zeros((0, 2)), np.zeros((0, 3), dtype=np.int64)
    kept = dt.simplices[keep]
    edges = np.sort(np.concatenate([kept[:, [0, 1]], kept[:, [1, 2]], kept[:, [0, 2]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    boundary = np.unique(uniq[counts == 1])
    bxy = xy[boundary]
    if len(bxy) < 3:
        return np.zeros((0, 2)), np.zeros((0, 3), dtype=np.int64)
    try:
        dt2 = Delaunay(bxy)
    except Exception:
        return np.zeros((0, 2)), np.zeros((0, 3), dtype=np.int64)
    tris = dt2.simplices
    # keep coarse triangles that sit inside the alpha region; test centroid
    # and edge midpoints so thin bridges across concavities are rejected
    inside = np.ones(len(tris), dtype=bool)
    p = bxy[tris]
    cen = p.mean(axis=1)
    probes = [cen] + [cen + 0.9 * ((p[:, i] + p[:, j]) / 2 - cen) for i, j in ((0, 1), (1, 2), (0, 2))]
    for probe in probes:
        s = dt.find_simplex(probe)
        inside &= (s >= 0) & keep[np.maximum(s, 0)]
    tris = tris[inside]
    # counter-clockwise orientation
    p = bxy[tris]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) \
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    tris = np.where((cross < 0)[:, None], tris[:, [0, 2, 1]], tris)
    return bxy, tris[np.abs(cross) > 2 * EPS_AREA]


def patch_mesh(patch: Patch, alpha: float) -> TriMesh:
    n = patch.normal
    u, v = plane_frame(n)
    c = patch.centroid
    c = c - (n @ c - patch.offset) * n
    rel = patch.points - c
    xy = np.column_stack([rel @ u, rel @ v])
    verts2, tris = alpha_triangulation(xy, alpha)
    if not len(tris):
        return TriMesh.empty()
    verts = c + verts2[:, :1] * u + verts2[:, 1:] * v
    used, inv = np.unique(tris, return_inverse=True)
    return TriMesh(verts[used], inv.reshape(-1, 3))


def reconstruct_object_mesh(points, plane_dist_thresh: float = 0.15, min_inliers: int = 100,
                            alpha: float = 1.0, seed: int = 0,
                            object_centroid: Optional[np.ndarray] = None) -> TriMesh:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < min_inliers:
        return TriMesh.empty()
    centroid = pts.mean(axis=0) if object_centroid is None else np.asarray(object_centroid, float)
    patches = segment_planes(pts, plane_dist_thresh, min_inliers, seed=seed)
    meshes = [patch_mesh(orient_patch(p, centroid), alpha) for p in patches]
    return TriMesh.concat([m for m in meshes if len(m)])


# ---------------------------------------------------------------------------
# OBJ subset I/O


def write_obj(mesh: TriMesh, path, comment: str = "") -> None:
    with open(path, "w") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.9f} {y:.9f} {z:.9f}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def read_obj(path) -> TriMesh:
    verts, faces = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        tag, *rest = s.split()
        try:
            if tag == "v" and len(rest) == 3:
                verts.append([float(x) for x in rest])
            elif tag == "f" and len(rest) == 3:
                faces.append([int(x.split("/")[0]) - 1 for x in rest])
            else:
                raise MeshFormatError(f"{path}:{lineno}: unsupported record {s!r}")
        except ValueError as exc:
            raise MeshFormatError(f"{path}:{lineno}: {exc}") from exc
    try:
        return TriMesh(np.array(verts, float).reshape(-1, 3), np.array(faces, np.int64).reshape(-1, 3))
    except ValueError as exc:
        raise MeshFormatError(f"{path}: {exc}") from exc
