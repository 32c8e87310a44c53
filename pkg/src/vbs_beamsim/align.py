"""Beamspace projection, top-S partial beam training and the comparison baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .chan import (ArrayConfig, Codebook, PathParams, channel_from_paths, params_from_vectors,
                   path_gain, reconstruct_channel, serving_vbs_set)
from .oracle import CkmTable
from .vbs import VbsStore

METHODS = ("vbs-ba", "loc-ba", "rckm-ba", "exhaustive")


@dataclass(frozen=True)
class BeamPair:
    b_bs: int
    b_ue: int


@dataclass
class AlignmentResult:
    pair: BeamPair
    gain: float
    se: float
    s: int
    method: str = ""
    covered: bool = True

    @property
    def pairs_trained(self) -> int:
        return self.s


@dataclass(frozen=True)
class LinkBudget:
    p_t_w: float = 10.0                    # 40 dBm
    n0_w_hz: float = 10 ** (-20.4)         # -174 dBm/Hz
    bandwidth_hz: float = 500e6

    @classmethod
    def from_db(cls, p_t_dbm: float, n0_dbm_hz: float, bandwidth_hz: float) -> "LinkBudget":
        return cls(10 ** ((p_t_dbm - 30) / 10), 10 ** ((n0_dbm_hz - 30) / 10), bandwidth_hz)


def spectral_efficiency(gain: float, p_t: float, n0: float, bandwidth: float) -> float:
    """``log2(1 + P_T g^2 / (N_0 W))`` in bps/Hz."""
    if gain < 0:
        raise ValueError("gain must be non-negative")
    return math.log2(1.0 + p_t * gain * gain / (n0 * bandwidth))


def beamspace(H: np.ndarray, U_bs: Codebook, U_ue: Codebook) -> np.ndarray:
    """``|U_ue^H H U_bs|``, shape ``(M_ue, M_bs)``."""
    H = np.asarray(H)
    if H.shape != (U_ue.n, U_bs.n):
        raise ValueError(f"channel shape {H.shape} does not match codebooks ({U_ue.n}, {U_bs.n})")
    return np.abs(U_ue.matrix.conj().T @ H @ U_bs.matrix)


def _ranking(G: np.ndarray) -> np.ndarray:
    # stable sort on -G keeps flat (b_ue, b_bs) order among ties
    return np.argsort(-G.ravel(), kind="stable")


def top_s(G: np.ndarray, S: int) -> List[BeamPair]:
    m_ue, m_bs = G.shape
    if not 1 <= S <= G.size:
        raise ValueError(f"S must lie in [1, {G.size}]")
    flat = _ranking(G)[:S]
    return [BeamPair(int(f % m_bs), int(f // m_bs)) for f in flat]


def partial_training(H_true: np.ndarray, candidates: Sequence[BeamPair], U_bs: Codebook,
                     U_ue: Codebook, link: LinkBudget = LinkBudget(), method: str = "",
                     G_true: Optional[np.ndarray] = None) -> AlignmentResult:
    """Measure every candidate on the true channel and keep the strongest (first on ties)."""
    if not candidates:
        raise ValueError("candidate list is empty")
    G = beamspace(H_true, U_bs, U_ue) if G_true is None else G_true
    gains = np.array([G[c.b_ue, c.b_bs] for c in candidates])
    k = int(np.argmax(gains))
    g = float(gains[k])
    return AlignmentResult(candidates[k], g, spectral_efficiency(g, link.p_t_w, link.n0_w_hz, link.bandwidth_hz),
                           len(candidates), method)


def run_exhaustive(H_true: np.ndarray, U_bs: Codebook, U_ue: Codebook,
                   link: LinkBudget = LinkBudget()) -> AlignmentResult:
    G = beamspace(H_true, U_bs, U_ue)
    return partial_training(H_true, top_s(G, G.size), U_bs, U_ue, link, "exhaustive", G)


# ---------------------------------------------------------------------------
# coarse channel estimates for each method


def los_params(o_bs, o_ue, bs_cfg: ArrayConfig, ue_cfg: ArrayConfig, f_c: float) -> PathParams:
    d = np.asarray(o_ue, float) - np.asarray(o_bs, float)
    pp = params_from_vectors(d, -d, bs_cfg, ue_cfg, 0, 1)
    pp.gain_mag = path_gain(pp, f_c)
    return pp


def loc_estimate(o_bs, o_ue, bs_cfg, ue_cfg, f_c) -> np.ndarray:
    return channel_from_paths([los_params(o_bs, o_ue, bs_cfg, ue_cfg, f_c)], bs_cfg, ue_cfg, f_c)


def vbs_estimate(store: VbsStore, o_ue, bs_cfg, ue_cfg, f_c, gamma_db: float = 10.0,
                 k: int = 3) -> Tuple[np.ndarray, bool]:
    serving, _ = serving_vbs_set(o_ue, store, k)
    return reconstruct_channel(serving, store, store.bs_location, o_ue, bs_cfg, ue_cfg, f_c, gamma_db)


def rckm_estimate(ckm: CkmTable, o_ue, bs_cfg, ue_cfg, f_c) -> Tuple[np.ndarray, bool]:
    """Channel from the nearest cell's stored paths (magnitudes only)."""
    recs = ckm.cells[ckm.nearest_cell(o_ue)]
    paths = [PathParams(p.aoa_az + ue_cfg.az_offset, p.aoa_el + ue_cfg.el_offset,
                        p.aod_az + bs_cfg.az_offset, p.aod_el + bs_cfg.el_offset,
                        p.r_rx, p.r_tx, p.gain_mag, p.order, p.index) for p in recs]
    return channel_from_paths(paths, bs_cfg, ue_cfg, f_c), bool(paths)


def with_fallback(est: Tuple[np.ndarray, bool], o_bs, o_ue, bs_cfg, ue_cfg, f_c) -> Tuple[np.ndarray, bool]:
    H, covered = est
    if covered and np.any(H):
        return H, True
    return loc_estimate(o_bs, o_ue, bs_cfg, ue_cfg, f_c), False


def run_vbs_ba(store: VbsStore, H_true, o_ue, bs_cfg, ue_cfg, U_bs, U_ue, S: int, f_c: float,
               gamma_db: float = 10.0, k: int = 3, link: LinkBudget = LinkBudget()) -> AlignmentResult:
    H, cov = with_fallback(vbs_estimate(store, o_ue, bs_cfg, ue_cfg, f_c, gamma_db, k),
                            store.bs_location, o_ue, bs_cfg, ue_cfg, f_c)
    res = partial_training(H_true, top_s(beamspace(H, U_bs, U_ue), S), U_bs, U_ue, link, "vbs-ba")
    res.covered = cov
    return res


def run_loc_ba(o_bs, H_true, o_ue, bs_cfg, ue_cfg, U_bs, U_ue, S: int, f_c: float,
               link: LinkBudget = LinkBudget()) -> AlignmentResult:
    H = loc_estimate(o_bs, o_ue, bs_cfg, ue_cfg, f_c)
    return partial_training(H_true, top_s(beamspace(H, U_bs, U_ue), S), U_bs, U_ue, link, "loc-ba")


def run_rckm_ba(ckm: CkmTable, H_true, o_ue, bs_cfg, ue_cfg, U_bs, U_ue, S: int, f_c: float,
                link: LinkBudget = LinkBudget()) -> AlignmentResult:
    H, cov = with_fallback(rckm_estimate(ckm, o_ue, bs_cfg, ue_cfg, f_c),
                            ckm.bs_location, o_ue, bs_cfg, ue_cfg, f_c)
    res = partial_training(H_true, top_s(beamspace(H, U_bs, U_ue), S), U_bs, U_ue, link, "rckm-ba")
    res.covered = cov
    return res


# ---------------------------------------------------------------------------
# S sweep


def sweep(H_true: np.ndarray, estimates: Dict[str, Tuple[np.ndarray, bool]], U_bs: Codebook,
          U_ue: Codebook, s_list: Sequence[int], link: LinkBudget = LinkBudget()) -> List[AlignmentResult]:
    """Results for every method and S in one pass.

    Each method's candidate list for S is a prefix of its full ranking, so
    the trained optimum is a running maximum over that ranking. The
    exhaustive row is reported once with ``S = M_bs * M_ue``.
    """
    G_true = beamspace(H_true, U_bs, U_ue)
    flat_true = G_true.ravel()
    m_bs = G_true.shape[1]
    s_max = max(s_list)
    if s_max > G_true.size:
        raise ValueError(f"S={s_max} exceeds the {G_true.size} available pairs")
    out: List[AlignmentResult] = []

    def emit(name, flat_order, S, covered):
        g = flat_true[flat_order[:S]]
        k = int(np.argmax(g))
        f = int(flat_order[k])
        gain = float(g[k])
        out.append(AlignmentResult(BeamPair(f % m_bs, f // m_bs), gain,
                                   spectral_efficiency(gain, link.p_t_w, link.n0_w_hz, link.bandwidth_hz),
                                   S, name, covered))

    for name, (H_est, covered) in estimates.items():
        order = _ranking(beamspace(H_est, U_bs, U_ue))
        for S in s_list:
            emit(name, order, S, covered)
    emit("exhaustive", _ranking(G_true), G_true.size, True)
    return out
