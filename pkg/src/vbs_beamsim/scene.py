"""Synthetic box-world scenes: axis-aligned buildings standing on a flat ground."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    min: Tuple[float, float, float]
    max: Tuple[float, float, float]
    gamma_db: float = 10.0

    def __post_init__(self):
        lo, hi = np.asarray(self.min, float), np.asarray(self.max, float)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
            raise SceneError(f"box corners must satisfy min < max, got {self.min} {self.max}")

    def contains_xy(self, x, y, margin: float = 0.0):
        return ((x > self.min[0] - margin) & (x < self.max[0] + margin)
                & (y > self.min[1] - margin) & (y < self.max[1] + margin))


@dataclass(frozen=True)
class Face:
    """Planar rectangle: ``center + a*axis_u + b*axis_v`` with ``|a|<=half_u``, ``|b|<=half_v``."""

    center: np.ndarray
    normal: np.ndarray
    axis_u: np.ndarray
    axis_v: np.ndarray
    half_u: float
    half_v: float
    gamma_db: float
    box: int              # -1 for the ground
    name: str

    @property
    def area(self) -> float:
        return 4.0 * self.half_u * self.half_v

    def corners(self) -> np.ndarray:
        c, u, v = self.center, self.axis_u * self.half_u, self.axis_v * self.half_v
        return np.stack([c - u - v, c + u - v, c + u + v, c - u + v])


@dataclass
class Scene:
    ground_z: float
    region: Tuple[float, float, float, float]      # xmin, ymin, xmax, ymax
    boxes: List[Box] = field(default_factory=list)
    ground_gamma_db: float = 10.0
    scene_id: str = "scene"

    def __post_init__(self):
        self.boxes = [b if isinstance(b, Box) else Box(**b) for b in self.boxes]
        self.validate()

    def validate(self) -> None:
        xmin, ymin, xmax, ymax = self.region
        if not (xmax > xmin and ymax > ymin):
            raise SceneError("region must have positive extent")
        for i, b in enumerate(self.boxes):
            if b.min[2] < self.ground_z - 1e-9:
                raise SceneError(f"box {i} extends below the ground")
        for i in range(len(self.boxes)):
            for j in range(i + 1, len(self.boxes)):
                a, b = self.boxes[i], self.boxes[j]
                if all(a.min[k] < b.max[k] and b.min[k] < a.max[k] for k in range(3)):
                    raise SceneError(f"boxes {i} and {j} overlap")

    # -- faces ---------------------------------------------------------------

    def faces(self, include_ground: bool = True) -> List[Face]:
        """Reflecting faces with outward normals. Box bottoms rest on the ground and are skipped."""
        out: List[Face] = []
        if include_ground:
            xmin, ymin, xmax, ymax = self.region
            out.append(Face(np.array([(xmin + xmax) / 2, (ymin + ymax) / 2, self.ground_z]),
                            np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]),
                            np.array([0.0, 1.0, 0.0]), (xmax - xmin) / 2, (ymax - ymin) / 2,
                            self.ground_gamma_db, -1, "ground"))
        ex, ey, ez = np.eye(3)
        for k, b in enumerate(self.boxes):
            lo, hi = np.asarray(b.min, float), np.asarray(b.max, float)
            c = (lo + hi) / 2
            h = (hi - lo) / 2
            face_defs = [
                ("-x", -ex, ey, ez, h[1], h[2], 0, lo[0]),
                ("+x", ex, ey, ez, h[1], h[2], 0, hi[0]),
                ("-y", -ey, ex, ez, h[0], h[2], 1, lo[1]),
                ("+y", ey, ex, ez, h[0], h[2], 1, hi[1]),
                ("+z", ez, ex, ey, h[0], h[1], 2, hi[2]),
            ]
            for name, n, u, v, hu, hv, axis, coord in face_defs:
                fc = c.copy()
                fc[axis] = coord
                out.append(Face(fc, n.copy(), u.copy(), v.copy(), float(hu), float(hv),
                                b.gamma_db, k, f"box{k}{name}"))
        return out

    def box_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.boxes:
            return np.zeros((0, 3)), np.zeros((0, 3))
        return (np.array([b.min for b in self.boxes], float),
                np.array([b.max for b in self.boxes], float))

    def inside_any_box(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        lo, hi = self.box_arrays()
        if len(lo) == 0:
            return np.zeros(len(pts), dtype=bool)
        inside = np.all((pts[:, None, :] > lo[None]) & (pts[:, None, :] < hi[None]), axis=2)
        return inside.any(axis=1)

    # -- io --------------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "ground_z": self.ground_z,
            "region": list(self.region),
            "ground_gamma_db": self.ground_gamma_db,
            "scene_id": self.scene_id,
            "boxes": [{"min": list(b.min), "max": list(b.max), "gamma_db": b.gamma_db}
                      for b in self.boxes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        try:
            boxes = [Box(tuple(map(float, b["min"])), tuple(map(float, b["max"])),
                         float(b.get("gamma_db", 10.0))) for b in d.get("boxes", [])]
            region = tuple(float(x) for x in d["region"])
            if len(region) != 4:
                raise SceneError("region must be [xmin, ymin, xmax, ymax]")
            return cls(float(d["ground_z"]), region, boxes,
                       float(d.get("ground_gamma_db", 10.0)), str(d.get("scene_id", "scene")))
        except KeyError as exc:
            raise SceneError(f"scene file missing field {exc}") from exc


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=1) + "\n")


def load_scene(path) -> Scene:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    return Scene.from_dict(d)


def generate_scene(seed: int, region=(40.0, 0.0, 160.0, 120.0), n_boxes: int = 8,
                   bs_xy: Optional[Sequence[float]] = (140.0, 60.0), ground_z: float = 0.0,
                   footprint=(8.0, 22.0), height=(8.0, 25.0), gamma_range=(6.0, 14.0),
                   gap: float = 5.0, bs_clearance: float = 10.0,
                   max_tries: int = 5000) -> Scene:
    """Random non-overlapping boxes inside ``region`` with at least ``gap`` metres between them."""
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = region
    boxes: List[Box] = []
    tries = 0
    while len(boxes) < n_boxes and tries < max_tries:
        tries += 1
        w, l = rng.uniform(*footprint, size=2)
        x0 = rng.uniform(xmin + gap, xmax - gap - w)
        y0 = rng.uniform(ymin + gap, ymax - gap - l)
        h = rng.uniform(*height)
        if bs_xy is not None:
            cx = min(max(bs_xy[0], x0), x0 + w)
            cy = min(max(bs_xy[1], y0), y0 + l)
            if np.hypot(bs_xy[0] - cx, bs_xy[1] - cy) < bs_clearance:
                continue
        clash = any(x0 < b.max[0] + gap and b.min[0] < x0 + w + gap
                    and y0 < b.max[1] + gap and b.min[1] < y0 + l + gap for b in boxes)
        if clash:
            continue
        g = round(float(rng.uniform(*gamma_range)), 3)
        boxes.append(Box((round(float(x0), 3), round(float(y0), 3), float(ground_z)),
                         (round(float(x0 + w), 3), round(float(y0 + l), 3),
                          round(float(ground_z + h), 3)), g))
    return Scene(ground_z, tuple(region), boxes, 10.0, f"random-{seed}")

