"""Coarse channel reconstruction from VBS geometry.

ULAs lie along the global y axis, so a steering vector depends on the
direction only through ``sin(el) * sin(az)`` (the direction cosine along y).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.constants import speed_of_light as C

from .geom import EPS_DEN, GeometryError
from .vbs import VbsRecord, VbsStore


@dataclass(frozen=True)
class ArrayConfig:
    n_elements: int
    spacing: Optional[float] = None      # metres; None means half a wavelength
    az_offset: float = 0.0
    el_offset: float = 0.0

    def __post_init__(self):
        if self.n_elements < 1:
            raise ValueError("n_elements must be >= 1")
        if self.spacing is not None and self.spacing <= 0:
            raise ValueError("spacing must be positive")

    def d(self, f_c: float) -> float:
        return self.spacing if self.spacing is not None else C / f_c / 2.0

    def aperture(self, f_c: float) -> float:
        return (self.n_elements - 1) * self.d(f_c)


@dataclass
class PathParams:
    aoa_az: float
    aoa_el: float
    aod_az: float
    aod_el: float
    r_rx: float
    r_tx: float
    gain_mag: float = 0.0
    order: int = 0
    index: int = 1
    phase: float = 0.0

    def __post_init__(self):
        if not (self.r_rx > 0 and self.r_tx > 0):
            raise ValueError("path segment lengths must be positive")


def _angles(p: np.ndarray) -> Tuple[float, float]:
    az = math.atan2(p[1], p[0])
    el = math.acos(max(-1.0, min(1.0, p[2] / np.linalg.norm(p))))
    return az, el


def params_from_vectors(p_bs: np.ndarray, p_ue: np.ndarray, bs_cfg: ArrayConfig,
                        ue_cfg: ArrayConfig, order: int, index: int) -> PathParams:
    """``p_bs`` points from the BS toward the first interaction, ``p_ue`` from the UE toward the last."""
    aod_az, aod_el = _angles(p_bs)
    aoa_az, aoa_el = _angles(p_ue)
    return PathParams(aoa_az + ue_cfg.az_offset, aoa_el + ue_cfg.el_offset,
                      aod_az + bs_cfg.az_offset, aod_el + bs_cfg.el_offset,
                      float(np.linalg.norm(p_ue)), float(np.linalg.norm(p_bs)), 0.0, order, index)


def path_params(record: VbsRecord, o_bs, o_ue, bs_cfg: ArrayConfig,
                ue_cfg: ArrayConfig) -> Optional[PathParams]:
    """Geometric part of a path; ``None`` when the reflection geometry is invalid."""
    o_bs = np.asarray(o_bs, dtype=float)
    o_ue = np.asarray(o_ue, dtype=float)
    if record.order == 0:
        p_bs = o_ue - o_bs
        if not np.linalg.norm(p_bs) > 0:
            return None
        pp = params_from_vectors(p_bs, -p_bs, bs_cfg, ue_cfg, 0, record.index)
        pp.r_rx = pp.r_tx
        return pp
    a = o_bs - record.location
    b = o_ue - record.location
    den = 2.0 * float(a @ b)
    if abs(den) <= EPS_DEN:
        return None
    frac = float(a @ a) / den
    # the bounce must sit strictly between the image source and the UE
    if not 0.0 < frac < 1.0:
        return None
    o_ref = record.location + frac * b
    p_bs, p_ue = o_ref - o_bs, o_ref - o_ue
    if np.linalg.norm(p_bs) <= 0 or np.linalg.norm(p_ue) <= 0:
        return None
    return params_from_vectors(p_bs, p_ue, bs_cfg, ue_cfg, 1, record.index)


def path_loss_free(f_c: float, d: float) -> float:
    if not (d > 0 and f_c > 0):
        raise ValueError("distance and frequency must be positive")
    return 20.0 * math.log10(4.0 * math.pi * f_c / C) + 20.0 * math.log10(d)


def path_loss_reflect(f_c: float, d: float, u: int, gamma_db: float) -> float:
    if u < 1:
        raise ValueError("reflection count must be >= 1")
    return path_loss_free(f_c, d) + gamma_db + 10.0 * math.log10(u)


def path_gain(params: PathParams, f_c: float, gamma_db: float = 10.0) -> float:
    if params.order == 0:
        pl = path_loss_free(f_c, params.r_tx)
    else:
        pl = path_loss_reflect(f_c, params.r_rx + params.r_tx, 1, gamma_db)
    return 10.0 ** (-pl / 20.0)


def steering_from_cosine(s: float, r: float, n: int, d: float, f_c: float) -> np.ndarray:
    """Near-field ULA response for direction cosine ``s`` along the array and range ``r``."""
    if not r > 0:
        raise ValueError("range must be positive")
    k = 2.0 * math.pi * f_c / C
    delta = (np.arange(n) - (n - 1) / 2.0) * d
    rn = np.sqrt(r * r + delta * delta - 2.0 * r * s * delta)
    return np.exp(1j * k * (rn - r)) / math.sqrt(n)


def steering_vector(el: float, az: float, r: float, cfg: ArrayConfig, f_c: float) -> np.ndarray:
    return steering_from_cosine(math.sin(el) * math.sin(az), r, cfg.n_elements, cfg.d(f_c), f_c)


# ---------------------------------------------------------------------------
# polar-domain codebook


@dataclass
class Codebook:
    matrix: np.ndarray                          # (N, M) complex
    cosines: np.ndarray                         # (M,) direction cosine along the array
    distances: np.ndarray                       # (M,) metres

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def m(self) -> int:
        return self.matrix.shape[1]

    def angles(self) -> np.ndarray:
        """Azimuth (rad) of each column for broadside elevation."""
        return np.arcsin(self.cosines)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("column,cosine,distance_m," + ",".join(f"re{i},im{i}" for i in range(self.n)) + "\n")
            for j in range(self.m):
                col = self.matrix[:, j]
                vals = ",".join(f"{c.real:.12g},{c.imag:.12g}" for c in col)
                fh.write(f"{j},{self.cosines[j]:.12g},{self.distances[j]:.12g},{vals}\n")


def rayleigh_distance(cfg: ArrayConfig, f_c: float) -> float:
    return 2.0 * cfg.aperture(f_c) ** 2 / (C / f_c)


def _ring_ladder(inv_far, inv_min, step, max_rings):
    xs = [inv_far]
    while len(xs) < max_rings and xs[-1] + step <= inv_min:
        xs.append(xs[-1] + step)
    return xs


def _min_adjacent_corr(s, n, d, f_c, xs):
    vecs = [steering_from_cosine(s, 1.0 / x, n, d, f_c) for x in xs]
    return min((abs(np.vdot(a, b)) for a, b in zip(vecs, vecs[1:])), default=1.0)


def _rings_for_cosine(s, n, d, f_c, inv_far, inv_min, min_corr, max_rings):
    if max_rings <= 1 or n == 1:
        return [inv_far]
    if _min_adjacent_corr(s, n, d, f_c, [inv_far, inv_min]) >= min_corr:
        return [inv_far]     # no resolvable near-field structure at this angle
    lo, hi = 0.0, inv_min - inv_far
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if _min_adjacent_corr(s, n, d, f_c, _ring_ladder(inv_far, inv_min, mid, max_rings)) >= min_corr:
            lo = mid
        else:
            hi = mid
    return _ring_ladder(inv_far, inv_min, lo, max_rings) if lo > 0 else [inv_far]


def build_polar_codebook(cfg: ArrayConfig, f_c: float, r_min: float = 3.0,
                         max_rings: Optional[int] = None, min_corr: float = 0.95,
                         far_factor: float = 10.0) -> Codebook:
    """Angle x distance codebook.

    Angles: ``N`` direction cosines uniform over ``[-1, 1)``. Distances: a
    far-field ring at ``far_factor`` Rayleigh distances, then rings uniform in
    ``1/r`` down to ``r_min``, spaced per angle so that neighbouring codewords
    keep correlation ``>= min_corr``. ``max_rings=1`` yields a far-field
    (DFT-like) codebook.
    """
    n = cfg.n_elements
    d = cfg.d(f_c)
    r_far = far_factor * max(rayleigh_distance(cfg, f_c), r_min)
    inv_far, inv_min = 1.0 / r_far, 1.0 / r_min
    cap = max_rings if max_rings is not None else 10_000
    cols, cos, dist = [], [], []
    for s in -1.0 + 2.0 * np.arange(n) / n:
        for x in _rings_for_cosine(s, n, d, f_c, inv_far, inv_min, min_corr, cap):
            cols.append(steering_from_cosine(s, 1.0 / x, n, d, f_c))
            cos.append(s)
            dist.append(1.0 / x)
    return Codebook(np.column_stack(cols), np.array(cos), np.array(dist))


# ---------------------------------------------------------------------------
# coarse channel


def serving_vbs_set(o_ue, store: VbsStore, k: int = 3) -> Tuple[Set[int], bool]:
    """Union of VBS ids over the ``k`` cells nearest the UE; second value flags a UE outside the grid."""
    if k < 1:
        raise ValueError("k must be >= 1")
    g = store.grid
    centers = g.centers()[:, :2]
    ue = np.asarray(o_ue, dtype=float)[:2]
    d2 = np.sum((centers - ue) ** 2, axis=1)
    order = np.lexsort((np.arange(len(d2)), d2))[:k]
    ids = set()
    for c in order:
        ids.update(g.cells[c])
    xmin, ymin, xmax, ymax = g.bounds
    outside = not (xmin <= ue[0] <= xmax and ymin <= ue[1] <= ymax)
    return ids, outside


def channel_from_paths(paths: Sequence[PathParams], bs_cfg: ArrayConfig, ue_cfg: ArrayConfig,
                       f_c: float, complex_gain: bool = False) -> np.ndarray:
    """``sqrt(N_BS N_UE) * sum_l g_l a_r(l) a_t(l)^H``; real gains unless ``complex_gain``."""
    nb, nu = bs_cfg.n_elements, ue_cfg.n_elements
    H = np.zeros((nu, nb), dtype=complex)
    for p in paths:
        g = p.gain_mag * (np.exp(1j * p.phase) if complex_gain else 1.0)
        ar = steering_vector(p.aoa_el, p.aoa_az, p.r_rx, ue_cfg, f_c)
        at = steering_vector(p.aod_el, p.aod_az, p.r_tx, bs_cfg, f_c)
        H += g * np.outer(ar, at.conj())
    return math.sqrt(nb * nu) * H


def coarse_paths(serving: Iterable[int], store: VbsStore, o_bs, o_ue, bs_cfg: ArrayConfig,
                 ue_cfg: ArrayConfig, f_c: float, gamma_db: float) -> List[PathParams]:
    out = []
    for vid in sorted(serving):
        pp = path_params(store.records[vid], o_bs, o_ue, bs_cfg, ue_cfg)
        if pp is None:
            continue
        pp.gain_mag = path_gain(pp, f_c, gamma_db)
        out.append(pp)
    return out


def reconstruct_channel(serving: Iterable[int], store: VbsStore, o_bs, o_ue, bs_cfg: ArrayConfig,
                        ue_cfg: ArrayConfig, f_c: float, gamma_db: float = 10.0) -> Tuple[np.ndarray, bool]:
    """Coarse channel and a ``covered`` flag (False when no serving VBS yields a path)."""
    paths = coarse_paths(serving, store, o_bs, o_ue, bs_cfg, ue_cfg, f_c, gamma_db)
    H = channel_from_paths(paths, bs_cfg, ue_cfg, f_c)
    return H, bool(paths)
