"""Virtual base stations: mirror images of the BS across valid reflector triangles.

Record ids are positions in ``VbsStore.records``: id 0 is the physical BS
(order 0), id 1 the ground image, ids >= 2 the clustered facade images.
Coverage cells are stored row-major, ``cell = iy * dx + ix``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .geom import (EPS_T, Triangle, TriangleArrays, batch_intersect, mirror_point,
                   segments_occluded)
from .hdbscan import hdbscan


class StoreFormatError(ValueError):
    """Malformed VBS store file; the message names the offending line or field."""


@dataclass
class VbsRecord:
    order: int
    index: int
    location: np.ndarray
    triangle_ids: Tuple[int, ...] = ()

    def __post_init__(self):
        self.location = np.asarray(self.location, dtype=float).reshape(3)
        self.triangle_ids = tuple(sorted(int(t) for t in self.triangle_ids))
        if self.order not in (0, 1):
            raise ValueError("only orders 0 and 1 are supported")
        if self.order == 0 and self.triangle_ids:
            raise ValueError("the order-0 record has no reflectors")
        if self.order == 1 and not self.triangle_ids:
            raise ValueError("order-1 records need at least one triangle")


@dataclass
class GridSpec:
    dx: int
    dy: int
    bounds: Tuple[float, float, float, float]   # xmin, ymin, xmax, ymax
    ue_height: float

    def centers(self) -> np.ndarray:
        """Cell centres at UE height, shape ``(dx*dy, 3)`` in row-major (iy, ix) order."""
        xmin, ymin, xmax, ymax = self.bounds
        xs = xmin + (np.arange(self.dx) + 0.5) * (xmax - xmin) / self.dx
        ys = ymin + (np.arange(self.dy) + 0.5) * (ymax - ymin) / self.dy
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, self.ue_height)])


@dataclass
class CoverageGrid(GridSpec):
    cells: List[List[int]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.cells) != self.dx * self.dy:
            raise ValueError("cell count must equal dx * dy")


@dataclass
class VbsStore:
    bs_location: np.ndarray
    records: List[VbsRecord]
    grid: CoverageGrid

    def __post_init__(self):
        self.bs_location = np.asarray(self.bs_location, dtype=float).reshape(3)
        n = len(self.records)
        for k, cell in enumerate(self.grid.cells):
            for i in cell:
                if not 0 <= i < n:
                    raise ValueError(f"cell {k} references unknown VBS id {i}")


# ---------------------------------------------------------------------------
# construction


def valid_reflector(tri: Triangle, all_tris: Sequence[Triangle], o_bs) -> bool:
    """Orientation toward the BS and at least one unblocked BS->vertex ray."""
    o_bs = np.asarray(o_bs, dtype=float)
    if float(tri.normal @ (o_bs - tri.centroid)) <= 0.0:
        return False
    idx = next((i for i, t in enumerate(all_tris) if t is tri), None)
    arrays = TriangleArrays.from_triangles(list(all_tris))
    mask = np.zeros(len(arrays), dtype=bool)
    if idx is not None:
        mask[idx] = True
    blocked = segments_occluded(np.tile(o_bs, (3, 1)), tri.vertices(), arrays, mask)
    return bool(not blocked.all())


def valid_reflectors(tris: TriangleArrays, o_bs, candidates: Optional[Iterable[int]] = None) -> np.ndarray:
    """Vectorised ``valid_reflector`` over a triangle set; returns a boolean mask."""
    o_bs = np.asarray(o_bs, dtype=float)
    n = len(tris)
    out = np.zeros(n, dtype=bool)
    idx = np.arange(n) if candidates is None else np.fromiter(candidates, dtype=int)
    facing = np.einsum("ij,ij->i", tris.normal[idx], o_bs - tris.centroid[idx]) > 0.0
    idx = idx[facing]
    if not len(idx):
        return out
    verts = np.stack([tris.v0[idx], tris.v0[idx] + tris.e1[idx], tris.v0[idx] + tris.e2[idx]], axis=1)
    ends = verts.reshape(-1, 3)
    excl = np.zeros((len(ends), n), dtype=bool)
    excl[np.arange(len(ends)), np.repeat(idx, 3)] = True
    blocked = segments_occluded(np.broadcast_to(o_bs, ends.shape), ends, tris, excl)
    out[idx] = ~blocked.reshape(-1, 3).all(axis=1)
    return out


def compute_raw_vbs(tris: TriangleArrays, o_bs, ground_ids: Iterable[int] = ()) -> List[Tuple[np.ndarray, int]]:
    """Mirror images of the BS across every valid non-ground triangle.

    Ground triangles are skipped here; the ground image is special-cased by
    ``ground_vbs``.
    """
    o_bs = np.asarray(o_bs, dtype=float)
    ground = set(int(g) for g in ground_ids)
    cand = [i for i in range(len(tris)) if i not in ground]
    valid = valid_reflectors(tris, o_bs, cand)
    out = []
    for i in np.flatnonzero(valid):
        out.append((mirror_point(o_bs, tris.v0[i], tris.normal[i]), int(i)))
    return out


def ground_vbs(o_bs, ground_z: float) -> np.ndarray:
    return mirror_point(o_bs, [0.0, 0.0, ground_z], [0.0, 0.0, 1.0])


def cluster_vbs(raw: Sequence[Tuple[np.ndarray, int]], min_cluster_size: int = 2,
                min_samples: int = 1, cluster_selection_epsilon: float = 1.0,
                keep_noise: bool = True, first_index: int = 2) -> List[VbsRecord]:
    """Merge nearby raw images into one record at the cluster centroid.

    Triangle ids of a record are the union over its members. Noise points
    become singleton records when ``keep_noise`` is set.
    """
    if not raw:
        return []
    locs = np.array([r[0] for r in raw], dtype=float)
    tids = [r[1] for r in raw]
    if len(raw) >= min_cluster_size:
        labels = hdbscan(locs, min_cluster_size, min_samples, allow_single_cluster=True,
                         cluster_selection_epsilon=cluster_selection_epsilon)
    else:
        labels = np.full(len(raw), -1)
    groups: List[List[int]] = []
    seen = {}
    for i, lab in enumerate(labels):
        if lab < 0:
            if keep_noise:
                groups.append([i])
            continue
        if lab not in seen:
            seen[lab] = len(groups)
            groups.append([])
        groups[seen[lab]].append(i)
    return [VbsRecord(1, first_index + k, locs[g].mean(axis=0), [tids[i] for i in g])
            for k, g in enumerate(groups)]


# ---------------------------------------------------------------------------
# coverage


def los_mask(o_bs, points: np.ndarray, tris: TriangleArrays) -> np.ndarray:
    return ~segments_occluded(np.broadcast_to(np.asarray(o_bs, float), points.shape), points, tris)


def vlos_mask(record: VbsRecord, tri_id: int, o_bs, points: np.ndarray,
              tris: TriangleArrays) -> np.ndarray:
    """Cells reachable from ``record`` through triangle ``tri_id``.

    The bounce point is where the segment VBS -> UE crosses the triangle
    (so it lies inside the triangle by construction); both legs BS -> bounce
    and bounce -> UE must be clear of every other triangle.
    """
    o_bs = np.asarray(o_bs, dtype=float)
    pts = np.atleast_2d(points)
    out = np.zeros(len(pts), dtype=bool)
    one = tris.subset([tri_id])
    d = pts - record.location
    hit, t, _, _ = batch_intersect(np.broadcast_to(record.location, pts.shape), d, one)
    hit = hit[:, 0] & (t[:, 0] > 0.0) & (t[:, 0] < 1.0)
    if not hit.any():
        return out
    idx = np.flatnonzero(hit)
    bounce = record.location + t[idx, 0][:, None] * d[idx]
    # discard bounces that land on the UE itself or the BS
    ok = (np.linalg.norm(bounce - pts[idx], axis=1) > EPS_T) & (np.linalg.norm(bounce - o_bs, axis=1) > EPS_T)
    idx, bounce = idx[ok], bounce[ok]
    if not len(idx):
        return out
    excl = np.zeros(len(tris), dtype=bool)
    excl[tri_id] = True
    clear = ~segments_occluded(np.broadcast_to(o_bs, bounce.shape), bounce, tris, excl)
    idx, bounce = idx[clear], bounce[clear]
    if len(idx):
        clear2 = ~segments_occluded(bounce, pts[idx], tris, excl)
        out[idx[clear2]] = True
    return out


def compute_coverage(records: Sequence[VbsRecord], tris: TriangleArrays, grid_spec: GridSpec,
                     o_bs) -> CoverageGrid:
    """Per-cell sets of serving record ids.

    The ground image (order 1, index 1) shares the LoS coverage of the BS.
    """
    pts = grid_spec.centers()
    cover = np.zeros((len(records), len(pts)), dtype=bool)
    los = los_mask(o_bs, pts, tris)
    for rid, rec in enumerate(records):
        if rec.order == 0 or rec.index == 1:
            cover[rid] = los
            continue
        for tid in rec.triangle_ids:
            todo = ~cover[rid]
            if not todo.any():
                break
            sub = np.flatnonzero(todo)
            cover[rid, sub] |= vlos_mask(rec, tid, o_bs, pts[sub], tris)
    cells = [np.flatnonzero(cover[:, k]).tolist() for k in range(len(pts))]
    return CoverageGrid(grid_spec.dx, grid_spec.dy, tuple(grid_spec.bounds), grid_spec.ue_height, cells)


def cell_is_sound(store: VbsStore, cell: int, vbs_id: int, tris: TriangleArrays) -> bool:
    """Re-run the coverage test for one stored (cell, id) pair."""
    p = store.grid.centers()[cell:cell + 1]
    rec = store.records[vbs_id]
    if rec.order == 0 or rec.index == 1:
        return bool(los_mask(store.bs_location, p, tris)[0])
    return any(vlos_mask(rec, t, store.bs_location, p, tris)[0] for t in rec.triangle_ids)


def ground_triangles(bounds, ground_z: float) -> List[Triangle]:
    xmin, ymin, xmax, ymax = bounds
    a, b, c, d = ([xmin, ymin, ground_z], [xmax, ymin, ground_z],
                  [xmax, ymax, ground_z], [xmin, ymax, ground_z])
    return [Triangle.from_vertices(a, b, c), Triangle.from_vertices(a, c, d)]


# ---------------------------------------------------------------------------
# persistence


def store_to_dict(store: VbsStore) -> dict:
    g = store.grid
    return {
        "bs_location": [float(x) for x in store.bs_location],
        "records": [{"order": r.order, "index": r.index,
                     "location": [float(x) for x in r.location],
                     "triangle_ids": list(r.triangle_ids)} for r in store.records],
        "grid": {"dx": g.dx, "dy": g.dy, "bounds": [float(b) for b in g.bounds],
                 "ue_height": float(g.ue_height), "cells": [list(c) for c in g.cells]},
    }


def save_store(store: VbsStore, path) -> None:
    text = json.dumps(store_to_dict(store), separators=(",", ":"))
    Path(path).write_text(text + "\n")


def _field(d, key, ctx):
    if not isinstance(d, dict) or key not in d:
        raise StoreFormatError(f"missing field '{ctx}{key}'")
    return d[key]


def _vec(v, ctx):
    if not isinstance(v, list) or len(v) != 3:
        raise StoreFormatError(f"field '{ctx}' must be a list of 3 numbers")
    try:
        return np.array([float(x) for x in v])
    except (TypeError, ValueError) as exc:
        raise StoreFormatError(f"field '{ctx}': {exc}") from exc


def store_from_dict(d: dict) -> VbsStore:
    bs = _vec(_field(d, "bs_location", ""), "bs_location")
    recs_raw = _field(d, "records", "")
    if not isinstance(recs_raw, list):
        raise StoreFormatError("field 'records' must be a list")
    records = []
    for i, r in enumerate(recs_raw):
        ctx = f"records[{i}]."
        try:
            records.append(VbsRecord(int(_field(r, "order", ctx)), int(_field(r, "index", ctx)),
                                     _vec(_field(r, "location", ctx), ctx + "location"),
                                     [int(t) for t in _field(r, "triangle_ids", ctx)]))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, StoreFormatError):
                raise
            raise StoreFormatError(f"{ctx[:-1]}: {exc}") from exc
    g = _field(d, "grid", "")
    try:
        cells = [[int(i) for i in c] for c in _field(g, "cells", "grid.")]
        bounds = tuple(float(b) for b in _field(g, "bounds", "grid."))
        if len(bounds) != 4:
            raise StoreFormatError("field 'grid.bounds' must have 4 numbers")
        grid = CoverageGrid(int(_field(g, "dx", "grid.")), int(_field(g, "dy", "grid.")), bounds,
                            float(_field(g, "ue_height", "grid.")), cells)
        return VbsStore(bs, records, grid)
    except StoreFormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise StoreFormatError(f"grid: {exc}") from exc


def load_store(path) -> VbsStore:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StoreFormatError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    return store_from_dict(d)
