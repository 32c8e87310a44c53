"""Ground-truth propagation for box-world scenes by exact image-method tracing.

Stands in for a full ray tracer: LoS plus specular paths with up to two
bounces off the ground and building faces, complex gains with phase
``-k * length``, and the per-cell channel knowledge map used by the
RCKM baseline.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.constants import speed_of_light as C

from .chan import ArrayConfig, PathParams, channel_from_paths, params_from_vectors, path_loss_free
from .scene import Scene
from .vbs import GridSpec

BOX_SHRINK = 1e-6
CONTAIN_TOL = 1e-9


@dataclass
class TruePath:
    order: int
    vertices: List[np.ndarray]          # BS, bounce points..., UE
    faces: Tuple[int, ...]
    gain: complex
    length: float

    def params(self, bs_cfg: Optional[ArrayConfig] = None, ue_cfg: Optional[ArrayConfig] = None) -> PathParams:
        bs_cfg = bs_cfg or ArrayConfig(1)
        ue_cfg = ue_cfg or ArrayConfig(1)
        p_bs = self.vertices[1] - self.vertices[0]
        p_ue = self.vertices[-2] - self.vertices[-1]
        pp = params_from_vectors(p_bs, p_ue, bs_cfg, ue_cfg, self.order, 1)
        pp.gain_mag = abs(self.gain)
        pp.phase = float(np.angle(self.gain))
        return pp


class FaceArrays:
    def __init__(self, scene: Scene):
        faces = scene.faces(include_ground=True)
        self.faces = faces
        self.c = np.array([f.center for f in faces])
        self.n = np.array([f.normal for f in faces])
        self.u = np.array([f.axis_u for f in faces])
        self.v = np.array([f.axis_v for f in faces])
        self.hu = np.array([f.half_u for f in faces])
        self.hv = np.array([f.half_v for f in faces])
        self.gamma = np.array([f.gamma_db for f in faces])

    def __len__(self):
        return len(self.faces)

    def contains(self, idx, pts) -> np.ndarray:
        rel = pts - self.c[idx]
        a = np.abs(np.sum(rel * self.u[idx], axis=-1))
        b = np.abs(np.sum(rel * self.v[idx], axis=-1))
        return (a <= self.hu[idx] + CONTAIN_TOL) & (b <= self.hv[idx] + CONTAIN_TOL)


def segments_hit_boxes(p1: np.ndarray, p2: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """True where the segment passes through the interior of any box (slab test)."""
    p1 = np.atleast_2d(p1)
    p2 = np.atleast_2d(p2)
    n = max(len(p1), len(p2))
    if len(lo) == 0 or n == 0:
        return np.zeros(n, dtype=bool)
    lo = lo + BOX_SHRINK
    hi = hi - BOX_SHRINK
    o = np.broadcast_to(p1, (n, 3))[:, None, :]
    d = (np.broadcast_to(p2, (n, 3)) - np.broadcast_to(p1, (n, 3)))[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (lo[None] - o) / d
        t1 = (hi[None] - o) / d
    par = d == 0
    inside_slab = (o > lo[None]) & (o < hi[None])
    tmin_ax = np.where(par, np.where(inside_slab, -np.inf, np.inf), np.minimum(t0, t1))
    tmax_ax = np.where(par, np.where(inside_slab, np.inf, -np.inf), np.maximum(t0, t1))
    tmin = np.maximum(tmin_ax.max(axis=2), 0.0)
    tmax = np.minimum(tmax_ax.min(axis=2), 1.0)
    return (tmax > tmin).any(axis=1)


def _path_gain(length: float, gammas: Sequence[float], f_c: float) -> complex:
    u = len(gammas)
    pl = path_loss_free(f_c, length) + float(sum(gammas)) + (10.0 * math.log10(u) if u else 0.0)
    k = 2.0 * math.pi * f_c / C
    return 10.0 ** (-pl / 20.0) * np.exp(-1j * k * length)


def trace_paths(scene: Scene, o_bs, o_ue, max_order: int = 2, f_c: float = 40e9,
                faces: Optional[FaceArrays] = None) -> List[TruePath]:
    """All specular paths BS -> UE with at most ``max_order`` bounces, sorted by (order, length)."""
    if max_order > 2:
        raise ValueError("max_order must be <= 2")
    bs = np.asarray(o_bs, dtype=float)
    ue = np.asarray(o_ue, dtype=float)
    fa = faces or FaceArrays(scene)
    lo, hi = scene.box_arrays()
    paths: List[TruePath] = []

    if not segments_hit_boxes(bs, ue, lo, hi)[0]:
        L = float(np.linalg.norm(ue - bs))
        paths.append(TruePath(0, [bs, ue], (), _path_gain(L, [], f_c), L))

    if max_order >= 1 and len(fa):
        sb = np.sum((bs - fa.c) * fa.n, axis=1)
        su = np.sum((ue - fa.c) * fa.n, axis=1)
        ok = (sb > 0) & (su > 0)
        idx = np.flatnonzero(ok)
        if len(idx):
            img = bs - 2.0 * sb[idx, None] * fa.n[idx]
            t = sb[idx] / (sb[idx] + su[idx])
            P = img + t[:, None] * (ue - img)
            keep = fa.contains(idx, P)
            idx, P, img = idx[keep], P[keep], img[keep]
            if len(idx):
                clear = ~segments_hit_boxes(np.broadcast_to(bs, P.shape), P, lo, hi)
                clear &= ~segments_hit_boxes(P, np.broadcast_to(ue, P.shape), lo, hi)
                for f, p, im in zip(idx[clear], P[clear], img[clear]):
                    L = float(np.linalg.norm(ue - im))
                    paths.append(TruePath(1, [bs, p, ue], (int(f),),
                                          _path_gain(L, [fa.gamma[f]], f_c), L))

    if max_order >= 2 and len(fa) > 1:
        # degenerate face pairs produce NaNs that the finiteness mask discards
        with np.errstate(divide="ignore", invalid="ignore"):
            paths.extend(_order2(fa, bs, ue, lo, hi, f_c))

    paths.sort(key=lambda p: (p.order, p.length, p.faces))
    return paths


def _order2(fa: FaceArrays, bs, ue, lo, hi, f_c) -> List[TruePath]:
    F = len(fa)
    sb = np.sum((bs - fa.c) * fa.n, axis=1)
    i_idx, j_idx = np.meshgrid(np.arange(F), np.arange(F), indexing="ij")
    i_idx, j_idx = i_idx.ravel(), j_idx.ravel()
    m = (i_idx != j_idx) & (sb[i_idx] > 0)
    i_idx, j_idx = i_idx[m], j_idx[m]
    su_j = np.sum((ue - fa.c[j_idx]) * fa.n[j_idx], axis=1)
    m = su_j > 0
    i_idx, j_idx, su_j = i_idx[m], j_idx[m], su_j[m]
    if not len(i_idx):
        return []
    I1 = bs - 2.0 * sb[i_idx, None] * fa.n[i_idx]
    s1 = np.sum((I1 - fa.c[j_idx]) * fa.n[j_idx], axis=1)
    I2 = I1 - 2.0 * s1[:, None] * fa.n[j_idx]
    sI2 = -s1
    m = sI2 < 0
    # P2: where the line I2 -> UE crosses plane j
    t2 = -sI2 / (su_j - sI2)
    P2 = I2 + t2[:, None] * (ue - I2)
    sP2 = np.sum((P2 - fa.c[i_idx]) * fa.n[i_idx], axis=1)
    m &= sP2 > 0
    t1 = sb[i_idx] / (sb[i_idx] + sP2)
    P1 = I1 + t1[:, None] * (P2 - I1)
    sP1 = np.sum((P1 - fa.c[j_idx]) * fa.n[j_idx], axis=1)
    m &= sP1 > 0
    m &= np.isfinite(P1).all(axis=1) & np.isfinite(P2).all(axis=1)
    k = np.flatnonzero(m)
    if not len(k):
        return []
    k = k[fa.contains(i_idx[k], P1[k]) & fa.contains(j_idx[k], P2[k])]
    if not len(k):
        return []
    clear = ~segments_hit_boxes(np.broadcast_to(bs, P1[k].shape), P1[k], lo, hi)
    clear &= ~segments_hit_boxes(P1[k], P2[k], lo, hi)
    clear &= ~segments_hit_boxes(P2[k], np.broadcast_to(ue, P2[k].shape), lo, hi)
    out = []
    for q in k[clear]:
        L = float(np.linalg.norm(ue - I2[q]))
        fi, fj = int(i_idx[q]), int(j_idx[q])
        out.append(TruePath(2, [bs, P1[q], P2[q], ue], (fi, fj),
                            _path_gain(L, [fa.gamma[fi], fa.gamma[fj]], f_c), L))
    return out


def ground_truth_channel(paths: Sequence[TruePath], bs_cfg: ArrayConfig, ue_cfg: ArrayConfig,
                         f_c: float) -> np.ndarray:
    """Complex-gain channel matrix (N_UE x N_BS); zero on outage."""
    return channel_from_paths([p.params(bs_cfg, ue_cfg) for p in paths], bs_cfg, ue_cfg, f_c,
                              complex_gain=True)


# ---------------------------------------------------------------------------
# channel knowledge map


@dataclass
class CkmTable:
    grid: GridSpec
    cells: List[List[PathParams]]
    bs_location: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def nearest_cell(self, o_ue) -> int:
        c = self.grid.centers()[:, :2]
        d2 = np.sum((c - np.asarray(o_ue, float)[:2]) ** 2, axis=1)
        return int(np.lexsort((np.arange(len(d2)), d2))[0])


def build_ckm(scene: Scene, o_bs, grid_spec: GridSpec, f_c: float = 40e9, max_order: int = 2,
              keep: int = 4) -> CkmTable:
    """Top-``keep`` strongest traced paths per grid cell centre (array offsets not applied)."""
    fa = FaceArrays(scene)
    cells = []
    for p in grid_spec.centers():
        paths = trace_paths(scene, o_bs, p, max_order, f_c, faces=fa)
        paths.sort(key=lambda q: -abs(q.gain))
        cells.append([q.params() for q in paths[:keep]])
    return CkmTable(grid_spec, cells, np.asarray(o_bs, float))


_CKM_KEYS = ("order", "aoa_az", "aoa_el", "aod_az", "aod_el", "r_rx", "r_tx", "gain_mag")


def save_ckm(table: CkmTable, path) -> None:
    g = table.grid
    d = {"bs_location": [float(x) for x in table.bs_location],
         "grid": {"dx": g.dx, "dy": g.dy, "bounds": [float(b) for b in g.bounds],
                  "ue_height": float(g.ue_height),
                  "cells": [[{k: (int(getattr(p, k)) if k == "order" else float(getattr(p, k)))
                              for k in _CKM_KEYS} for p in cell] for cell in table.cells]}}
    Path(path).write_text(json.dumps(d, separators=(",", ":")) + "\n")


def load_ckm(path) -> CkmTable:
    try:
        d = json.loads(Path(path).read_text())
        g = d["grid"]
        grid_def = GridSpec(int(g["dx"]), int(g["dy"]), tuple(float(b) for b in g["bounds"]),
                        float(g["ue_height"]))
        cells = [[PathParams(p["aoa_az"], p["aoa_el"], p["aod_az"], p["aod_el"], p["r_rx"],
                             p["r_tx"], p["gain_mag"], int(p["order"])) for p in cell]
                 for cell in g["cells"]]
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed CKM table ({exc})") from exc
    if len(cells) != grid_def.dx * grid_def.dy:
        raise ValueError(f"{path}: cell count does not match grid")
    return CkmTable(grid_def, cells, np.asarray(d.get("bs_location", [0, 0, 0]), float))
