import math

import numpy as np
import pytest

from mcpcoop.channel import ArModel, ChannelMatrix, EstimatedChannel, sample_channel
from mcpcoop.information import mi_gaussian_sum
from mcpcoop.inputs import InputSpec
from mcpcoop.optimize import Multipliers, fixed_point_precoder, gaussian_power
from mcpcoop.sim import (BackhaulConfig, BsState, RowCsi, Scenario, SolverConfig, dl_round,
                         make_states, pilot_schedule, run_trace, simulate_dl, ul_round)

GAUSS = InputSpec.gaussian()
BPSK = InputSpec.bpsk()
GCFG = SolverConfig(inputs=(GAUSS, GAUSS), multipliers=Multipliers(0.3, 0.4),
                    method="closed-form")


def _states(seed=0, snr=1.0):
    return make_states([EstimatedChannel.perfect(sample_channel(seed, snr))])


def test_backhaul_threshold():
    assert not BackhaulConfig(0.5, 1.0).congested
    assert BackhaulConfig(1.0, 1.0).congested
    with pytest.raises(ValueError):
        BackhaulConfig(-1.0)
    with pytest.raises(ValueError):
        BackhaulConfig(0.0, 0.0)


def test_congested_round_never_reads_peer():
    bs1, bs2 = _states()
    res = ul_round(bs1, bs2, BackhaulConfig(2.5, 1.0), GCFG)
    assert not res.cooperative and res.outcome.selected_mac is None
    assert bs1.peer_reads == bs2.peer_reads == 0
    assert not bs1.has_peer and not bs2.has_peer


def test_no_coop_is_single_user_waterfilling():
    bs1, bs2 = _states(3)
    res = ul_round(bs1, bs2, BackhaulConfig(2.0, 1.0), GCFG)
    h = np.vstack([bs1.latest().gains, bs2.latest().gains])
    for k, lam in ((1, 0.3), (2, 0.4)):
        o = 3 - k
        noise = 1.0 + abs(h[k - 1, o - 1]) ** 2 * 2.0
        ref = min(2.0, max(0.0, 1 / lam - noise / abs(h[k - 1, k - 1]) ** 2))
        assert res.outcome.design.power(k) == pytest.approx(ref, abs=1e-14)


def test_cooperative_round_matches_closed_form():
    bs1, bs2 = _states(5)
    res = ul_round(bs1, bs2, BackhaulConfig(0.2, 1.0), GCFG)
    assert res.cooperative and res.handshake_ok
    assert bs1.has_peer and bs1.design == bs2.design
    est = bs1.merged()
    designs = {mac: gaussian_power(est, GCFG.multipliers, mac, GCFG.budgets) for mac in (1, 2)}
    rates = {mac: mi_gaussian_sum(est, designs[mac], mac).value for mac in (1, 2)}
    best = 1 if rates[1] <= rates[2] else 2
    assert res.outcome.selected_mac == best
    assert res.outcome.design == designs[best]


def test_handshake_is_symmetric_for_bpsk():
    bs1, bs2 = _states(6)
    cfg = SolverConfig(multipliers={1: Multipliers(0.2, 0.3), 2: Multipliers(0.3, 0.2)})
    res = ul_round(bs1, bs2, BackhaulConfig(), cfg)
    assert res.handshake_ok and len(res.candidates) == 2
    assert res.outcome.multipliers == cfg.mult(res.outcome.selected_mac)


def test_station_bookkeeping():
    bs = BsState(1)
    with pytest.raises(ValueError):
        bs.latest()
    with pytest.raises(ValueError):
        bs.add_pilot(RowCsi(2, [1.0, 0.0]))
    bs.add_pilot(RowCsi(1, [1.0, 0.5]))
    with pytest.raises(RuntimeError):
        bs.merged()
    bs.receive_peer(RowCsi(2, [0.2, 2.0]))
    assert np.array_equal(bs.merged().hat_h, [[1.0, 0.5], [0.2, 2.0]])
    with pytest.raises(ValueError):
        RowCsi(1, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        ul_round(BsState(1), BsState(2), BackhaulConfig())


def test_dl_transmissions_without_cross_links_are_direct_only():
    true = ChannelMatrix([[0.9, 0.0], [0.0, -1.3]])
    bs1, bs2 = make_states([true])
    cfg = SolverConfig(budgets=(1.0, 1.0))
    res = dl_round(bs1, bs2, Scenario().frame, ArModel(1, 0.9, "standard", 0.0), cfg,
                   true_channel=true)
    hh = res.predicted.hat_h
    p = res.outcome.design
    v11 = np.linalg.svd(np.atleast_2d(hh[0, 0]))[2].conj().T[0, 0]
    v22 = np.linalg.svd(np.atleast_2d(hh[1, 1]))[2].conj().T[0, 0]
    assert res.transmissions[1] == pytest.approx(0.9 * v11 * p.mat1[0, 0], abs=1e-14)
    assert res.transmissions[2] == pytest.approx(-1.3 * v22 * p.mat2[0, 0], abs=1e-14)


def test_noiseless_standard_prediction_gives_perfect_csi_design():
    ar = ArModel(1, 0.9, "standard", 0.0)
    h0 = sample_channel(11, 1.0, real_only=True)
    bs1, bs2 = make_states([h0])
    cfg = SolverConfig(budgets=(1.0, 1.0))
    res = dl_round(bs1, bs2, Scenario().frame, ar, cfg)
    truth = EstimatedChannel.perfect(ChannelMatrix(0.9 * h0.h))
    assert np.allclose(res.predicted.hat_h, truth.hat_h)
    assert res.predicted.sigma1_sq == 1.0
    mac = res.outcome.selected_mac
    ref = fixed_point_precoder(truth, cfg.inputs, cfg.mult(mac), mac, budgets=cfg.budgets)
    assert np.allclose(res.outcome.design.mat1, ref.precoders.mat1)
    assert np.allclose(res.outcome.design.mat2, ref.precoders.mat2)


def test_simulate_dl_logs_one_pilot_per_block():
    sc = Scenario(snr_grid=(1.0,), budgets=(1.0, 1.0))
    results, events = simulate_dl(4, sc, seed=2)
    assert len(results) == 4 and events == [(b, "pilot") for b in range(4)]
    again, _ = simulate_dl(4, sc, seed=2)
    assert [r.transmissions for r in again] == [r.transmissions for r in results]


def test_pilot_schedule_refresh_and_ceiling():
    ar = ArModel(1, 0.7, innovation_variance=0.5)
    path = [sample_channel(i) for i in range(7)]
    ests, events = pilot_schedule(path, ar, refresh_every=3)
    assert [e[0] for e in events] == ["pilot", "predict", "predict"] * 2 + ["pilot"]
    assert ests[0].sigma1_sq == 1.0 and ests[3].sigma1_sq == 1.0
    assert ests[2].sigma1_sq == pytest.approx(1 + 2 * ar.error_variance(2))
    # a ceiling below the one-step variance forces a pilot every block
    _, events = pilot_schedule(path, ar, refresh_every=3, sigma_ceiling=1.5)
    assert all(e == ("pilot",) for e in events)
    with pytest.raises(ValueError):
        pilot_schedule(path, ar, refresh_every=0)


def _fast_scenario(**kw):
    base = dict(snr_grid=(1.0, 10.0), inputs=(GAUSS, GAUSS))
    base.update(kw)
    return Scenario(**base)


def test_single_realization_average_is_instantaneous():
    tr = run_trace(1, _fast_scenario(), seed=4)
    for r in tr.records:
        assert r.mi_avg == r.mi_inst and r.mmse_avg == r.mmse_inst
    assert tr.events() == [(0, "pilot")]


def test_trace_averages_and_determinism():
    sc = _fast_scenario()
    a, b = run_trace(20, sc, seed=9), run_trace(20, sc, seed=9)
    assert a.trace_table() == b.trace_table()
    for snr in sc.snr_grid:
        inst = a.column("mi_inst", snr)
        assert a.column("mi_avg", snr)[-1] == math.fsum(inst) / len(inst)
    assert run_trace(20, sc, seed=10).trace_table() != a.trace_table()


def test_full_power_gaussian_trace_matches_closed_form():
    sc = _fast_scenario(snr_grid=(2.0,))
    tr = run_trace(5, sc, seed=1)
    for r, blk in zip(tr.records, tr.blocks):
        assert r.design.powers == (2.0, 2.0)
        est = blk.predicted.with_snr(2.0)
        ref = min(mi_gaussian_sum(est, r.design, l).value for l in (1, 2))
        assert r.mi_inst == pytest.approx(ref, rel=1e-12)


def test_independent_blocks_agree_across_seeds():
    # rho = 0 makes every block an independent draw
    sc = _fast_scenario(snr_grid=(1.0,), ar=ArModel(1, 0.0))
    means, ses = [], []
    for seed in (1, 2):
        x = np.array(run_trace(300, sc, seed=seed).column("mi_inst"))
        means.append(x.mean())
        ses.append(x.std(ddof=1) / math.sqrt(x.size))
    assert abs(means[0] - means[1]) < 3 * math.hypot(*ses)


def test_congested_trace_reports_no_cooperation():
    sc = _fast_scenario(backhaul=BackhaulConfig(2.0, 1.0), power_policy="closed-form",
                        multipliers=Multipliers(0.5, 0.5))
    tr = run_trace(3, sc, seed=0)
    assert not any(tr.column("cooperative"))
    assert all(m is None for m in tr.column("selected_mac"))
    coop = run_trace(3, _fast_scenario(power_policy="closed-form"), seed=0)
    assert all(coop.column("cooperative"))
