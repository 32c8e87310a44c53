import math

import numpy as np
import pytest

from vbs_beamsim.align import (BeamPair, LinkBudget, beamspace, loc_estimate, partial_training,
                               run_exhaustive, run_loc_ba, spectral_efficiency, sweep, top_s,
                               with_fallback)
from vbs_beamsim.chan import ArrayConfig, build_polar_codebook

FC = 40e9


def _random_channel(rng, n_ue, n_bs):
    return rng.normal(size=(n_ue, n_bs)) + 1j * rng.normal(size=(n_ue, n_bs))


def _books(n_bs=8, n_ue=2):
    return (build_polar_codebook(ArrayConfig(n_bs), FC, max_rings=2),
            build_polar_codebook(ArrayConfig(n_ue), FC, max_rings=2))


def test_spectral_efficiency_worked_value():
    link = LinkBudget()
    se = spectral_efficiency(math.sqrt(1e-10), link.p_t_w, link.n0_w_hz, link.bandwidth_hz)
    snr = 10.0 * 1e-10 / (10 ** (-20.4) * 500e6)
    assert se == pytest.approx(math.log2(1 + snr), rel=1e-12)
    assert se == pytest.approx(8.98, abs=0.01)
    assert spectral_efficiency(0.0, 1, 1, 1) == 0.0
    with pytest.raises(ValueError):
        spectral_efficiency(-1.0, 1, 1, 1)


def test_link_budget_from_db_matches_defaults():
    a, b = LinkBudget.from_db(40.0, -174.0, 500e6), LinkBudget()
    assert a.p_t_w == pytest.approx(b.p_t_w) and a.n0_w_hz == pytest.approx(b.n0_w_hz)


def test_beamspace_matches_bilinear_form(rng):
    U_bs, U_ue = _books()
    H = _random_channel(rng, U_ue.n, U_bs.n)
    G = beamspace(H, U_bs, U_ue)
    assert G.shape == (U_ue.m, U_bs.m)
    i, j = 1, 3
    assert G[i, j] == pytest.approx(abs(U_ue.matrix[:, i].conj() @ H @ U_bs.matrix[:, j]))
    with pytest.raises(ValueError):
        beamspace(H.T, U_bs, U_ue)


def test_top_s_prefix_and_order(rng):
    G = rng.uniform(size=(4, 6))
    full = top_s(G, G.size)
    assert len(set(full)) == G.size
    vals = [G[p.b_ue, p.b_bs] for p in full]
    assert vals == sorted(vals, reverse=True)
    for s in range(1, G.size):
        assert top_s(G, s) == full[:s]
    with pytest.raises(ValueError):
        top_s(G, 0)
    with pytest.raises(ValueError):
        top_s(G, G.size + 1)


def test_top_s_ties_break_by_flat_index():
    G = np.ones((2, 3))
    assert top_s(G, 3) == [BeamPair(0, 0), BeamPair(1, 0), BeamPair(2, 0)]


def test_partial_training_picks_best_candidate(rng):
    U_bs, U_ue = _books()
    H = _random_channel(rng, U_ue.n, U_bs.n)
    G = beamspace(H, U_bs, U_ue)
    cands = [BeamPair(0, 0), BeamPair(2, 1), BeamPair(5, 0)]
    res = partial_training(H, cands, U_bs, U_ue)
    assert res.gain == max(G[c.b_ue, c.b_bs] for c in cands)
    assert res.pairs_trained == 3
    with pytest.raises(ValueError):
        partial_training(H, [], U_bs, U_ue)


def test_exhaustive_is_global_max(rng):
    U_bs, U_ue = _books(8, 2)
    for _ in range(20):
        H = _random_channel(rng, U_ue.n, U_bs.n)
        G = beamspace(H, U_bs, U_ue)
        res = run_exhaustive(H, U_bs, U_ue)
        assert res.gain == G.max()
        assert G[res.pair.b_ue, res.pair.b_bs] == G.max()
        assert res.s == G.size


def test_partial_training_with_full_s_equals_exhaustive(rng):
    U_bs, U_ue = _books(8, 2)
    H = _random_channel(rng, U_ue.n, U_bs.n)
    est = _random_channel(rng, U_ue.n, U_bs.n)
    G_est = beamspace(est, U_bs, U_ue)
    full = partial_training(H, top_s(G_est, G_est.size), U_bs, U_ue)
    assert full.gain == run_exhaustive(H, U_bs, U_ue).gain


def test_sweep_matches_direct_training(rng):
    U_bs, U_ue = _books(8, 2)
    H = _random_channel(rng, U_ue.n, U_bs.n)
    est = _random_channel(rng, U_ue.n, U_bs.n)
    G_est = beamspace(est, U_bs, U_ue)
    m = G_est.size
    rows = sweep(H, {"x": (est, True)}, U_bs, U_ue, [1, 2, 5, m])
    assert [r.method for r in rows] == ["x"] * 4 + ["exhaustive"]
    for r in rows[:-1]:
        direct = partial_training(H, top_s(G_est, r.s), U_bs, U_ue)
        assert (r.gain, r.pair) == (direct.gain, direct.pair)
    gains = [r.gain for r in rows[:-1]]
    assert gains == sorted(gains)
    assert rows[-2].gain == rows[-1].gain and rows[-1].s == m
    with pytest.raises(ValueError):
        sweep(H, {"x": (est, True)}, U_bs, U_ue, [m + 1])


def test_los_estimate_finds_los_beam():
    bs, ue = np.array([0.0, 0.0, 4.0]), np.array([30.0, 12.0, 1.5])
    bs_cfg, ue_cfg = ArrayConfig(16), ArrayConfig(4)
    U_bs = build_polar_codebook(bs_cfg, FC)
    U_ue = build_polar_codebook(ue_cfg, FC)
    H = loc_estimate(bs, ue, bs_cfg, ue_cfg, FC)
    res = run_loc_ba(bs, H, ue, bs_cfg, ue_cfg, U_bs, U_ue, 1, FC)
    assert res.gain == pytest.approx(beamspace(H, U_bs, U_ue).max())


def test_fallback_when_estimate_empty():
    bs, ue = np.array([0.0, 0.0, 4.0]), np.array([30.0, 12.0, 1.5])
    cfg = ArrayConfig(8)
    H, cov = with_fallback((np.zeros((8, 8), complex), True), bs, ue, cfg, cfg, FC)
    assert not cov
    np.testing.assert_allclose(H, loc_estimate(bs, ue, cfg, cfg, FC))

