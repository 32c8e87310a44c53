"""LiDAR point clouds: synthetic scans, outlier removal and ASCII I/O."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Tuple

import numpy as np
from scipy.spatial import cKDTree

from .scene import Scene


class CloudFormatError(ValueError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray
    scene_id: str = ""
    noise_sigma: float = 0.0
    drop_rate: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must be an (n, 3) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        self.points = pts

    def __len__(self) -> int:
        return len(self.points)


def _sample_rect(rng, face, n):
    a = rng.uniform(-face.half_u, face.half_u, n)
    b = rng.uniform(-face.half_v, face.half_v, n)
    return face.center + a[:, None] * face.axis_u + b[:, None] * face.axis_v


def simulate_scan(scene: Scene, density: float, noise_sigma: float, drop_rate: float,
                  seed: int) -> PointCloud:
    """Uniformly sample every exposed surface, add Gaussian noise, then drop points.

    Each face gets ``round(area * density)`` points. Ground samples falling
    inside a building footprint are redrawn, so the ground count covers the
    exposed ground area only.
    """
    if density <= 0:
        raise ValueError("density must be positive")
    if not 0.0 <= drop_rate < 1.0:
        raise ValueError("drop_rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    chunks = []
    for face in scene.faces(include_ground=True):
        if face.box < 0:
            xmin, ymin, xmax, ymax = scene.region
            covered = sum((min(b.max[0], xmax) - max(b.min[0], xmin))
                          * (min(b.max[1], ymax) - max(b.min[1], ymin)) for b in scene.boxes)
            n = int(round((face.area - covered) * density))
            got = np.zeros((0, 3))
            while len(got) < n:
                cand = _sample_rect(rng, face, max(64, int(1.2 * (n - len(got)))))
                keep = np.ones(len(cand), dtype=bool)
                for b in scene.boxes:
                    keep &= ~b.contains_xy(cand[:, 0], cand[:, 1])
                got = np.vstack([got, cand[keep]])
            chunks.append(got[:n])
        else:
            chunks.append(_sample_rect(rng, face, int(round(face.area * density))))
    pts = np.vstack(chunks) if chunks else np.zeros((0, 3))
    if noise_sigma > 0:
        pts = pts + rng.normal(0.0, noise_sigma, pts.shape)
    if drop_rate > 0:
        pts = pts[rng.random(len(pts)) >= drop_rate]
    return PointCloud(pts, scene.scene_id, noise_sigma, drop_rate)


def preprocess(cloud: PointCloud, k_neighbors: int = 8, std_ratio: float = 2.0) -> PointCloud:
    """Statistical outlier removal on the mean distance to the k nearest neighbours."""
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    pts = cloud.points
    if len(pts) < k_neighbors + 1:
        return cloud
    dist, _ = cKDTree(pts).query(pts, k=k_neighbors + 1)
    mean_d = dist[:, 1:].mean(axis=1)
    keep = mean_d <= mean_d.mean() + std_ratio * mean_d.std()
    return replace(cloud, points=pts[keep])


def voxel_downsample(points: np.ndarray, voxel: float) -> Tuple[np.ndarray, np.ndarray]:
    """Average points per voxel. Returns ``(centroids, inverse)`` with ``inverse`` mapping input -> voxel."""
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        return points.reshape(0, 3), np.zeros(0, dtype=int)
    keys = np.floor(points / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(counts), 3))
    np.add.at(sums, inverse, points)
    return sums / counts[:, None], inverse


def estimate_ground_z(points: np.ndarray, band: float = 0.3) -> float:
    """Median height of the lowest band of points."""
    z = np.asarray(points, dtype=float)[:, 2]
    if len(z) == 0:
        raise ValueError("empty cloud")
    low = np.percentile(z, 1.0)
    return float(np.median(z[z < low + band]))


def write_cloud(cloud: PointCloud, path) -> None:
    header = (f"# scene_id: {cloud.scene_id}\n# noise_sigma: {cloud.noise_sigma!r}\n"
              f"# drop_rate: {cloud.drop_rate!r}\n# count: {len(cloud)}\n")
    with open(path, "w") as fh:
        fh.write(header)
        np.savetxt(fh, cloud.points, fmt="%.7f")


def read_cloud(path) -> PointCloud:
    meta = {}
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, sep, val = s[1:].partition(":")
            if sep:
                meta[key.strip()] = val.strip()
            continue
        parts = s.split()
        if len(parts) != 3:
            raise CloudFormatError(f"{path}:{lineno}: expected 'x y z', got {s!r}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise CloudFormatError(f"{path}:{lineno}: {exc}") from exc
    return PointCloud(np.array(rows, dtype=float).reshape(-1, 3), meta.get("scene_id", ""),
                      float(meta.get("noise_sigma", 0.0)), float(meta.get("drop_rate", 0.0)))
