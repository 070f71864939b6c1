import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize as sopt

from mcpcoop.channel import EstimatedChannel, sample_channel
from mcpcoop.estimation import scalar_mmse
from mcpcoop.information import RateValue
from mcpcoop.inputs import InputSpec, PowerProfile
from mcpcoop.optimize import (DesignOutcome, IterationSchedule, Multipliers, PrecoderPair,
                              ensemble_kkt, fixed_point_power, fixed_point_precoder,
                              gaussian_power, kkt_certificate, mimo_precoder, select_design,
                              solve_mac, svd_init, tune_multipliers)
from mcpcoop.quadrature import IntegrationEngine
from mcpcoop.validation import brute_force_select

BPSK = InputSpec.bpsk()
GAUSS = InputSpec.gaussian()
GG = (GAUSS, GAUSS)
BB = (BPSK, BPSK)


def _lagrangian(P1, P2, g, lam):
    return np.log1p(g[0] * P1 + g[1] * P2) - lam[0] * P1 - lam[1] * P2


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), l1=st.floats(0.1, 1.5), l2=st.floats(0.1, 1.5),
       mac=st.sampled_from([1, 2]))
def test_closed_form_against_grid_oracle(seed, l1, l2, mac):
    ch = EstimatedChannel.perfect(sample_channel(seed, 1.0))
    g = np.abs(np.array([ch.link(mac, 1), ch.link(mac, 2)])) ** 2
    p = gaussian_power(ch, Multipliers(l1, l2), mac, (2.0, 2.0))
    x = np.arange(0.0, 2.0 + 5e-4, 1e-3)
    X, Y = np.meshgrid(x, x, indexing="ij")
    L = _lagrangian(X, Y, g, (l1, l2))
    i, j = np.unravel_index(np.argmax(L), L.shape)
    best = L[i, j]
    assert _lagrangian(p.p1, p.p2, g, (l1, l2)) >= best - 1e-12
    # away from a tie the maximizer is unique, so the grid point is within one step
    if abs(g[0] / l1 - g[1] / l2) > 1e-2:
        assert abs(p.p1 - x[i]) <= 1e-3 + 1e-12 and abs(p.p2 - x[j]) <= 1e-3 + 1e-12


def test_only_stronger_user_transmits():
    ch = EstimatedChannel.from_gains([[2.0, 1.0], [1.0, 1.0]], snr=1.0)
    p = gaussian_power(ch, Multipliers(0.2, 0.2), 1)
    assert p.p2 == 0.0 and math.isclose(p.p1, 1 / 0.2 - 1 / 4.0)
    with pytest.raises(ValueError):
        gaussian_power(ch, Multipliers(0.0, 0.2), 1)


def test_fixed_point_reproduces_closed_form():
    rng = np.random.default_rng(3)
    for i in range(4):
        ch = EstimatedChannel.perfect(sample_channel(200 + i, 1.0))
        m = Multipliers(*rng.uniform(0.1, 0.8, 2))
        cf = gaussian_power(ch, m, 1 + i % 2)
        fp = fixed_point_power(ch, GG, m, 1 + i % 2, IterationSchedule(max_iter=100_000))
        assert fp.converged
        assert abs(fp.powers.p1 - cf.p1) < 1e-4 and abs(fp.powers.p2 - cf.p2) < 1e-4


def test_kkt_detects_suboptimal_point():
    ch = EstimatedChannel.perfect(sample_channel(4, 1.0))
    m = Multipliers(0.3, 0.4)
    p = gaussian_power(ch, m, 1)
    assert kkt_certificate(ch, p, GG, m, 1).passed
    bad = p.with_powers(p.p1 + 0.1, p.p2 + 0.1)
    assert not kkt_certificate(ch, bad, GG, m, 1).passed
    over = kkt_certificate(ch, PowerProfile(3.0, 0.0), GG, m, 1, budgets=(2.0, 2.0))
    assert over.feasibility == pytest.approx(1.0)


def test_single_user_mercury_waterfilling():
    # with the other user silenced the fixed point satisfies lambda = g mmse(g P)
    ch = EstimatedChannel.from_gains([[1.3, 0.7], [1.0, 1.0]], snr=1.0)
    lam = 0.3
    sol = fixed_point_power(ch, BB, Multipliers(lam, lam), 1, fixed={2: 0.0})
    g = 1.69
    ref = sopt.brentq(lambda P: g * scalar_mmse(BPSK, g * P) - lam, 1e-9, 50.0, xtol=1e-14)
    assert sol.converged and sol.powers.p2 == 0.0
    assert abs(sol.powers.p1 - ref) < 1e-4


def test_bpsk_fixed_point_kkt():
    ch = EstimatedChannel.from_gains(np.ones((2, 2)), snr=1.0)
    for lam in (0.1, 0.2, 0.4):
        m = Multipliers(lam, lam)
        sol = fixed_point_power(ch, BB, m, 1, budgets=(2.0, 2.0))
        assert sol.converged
        assert kkt_certificate(ch, sol.powers, BB, m, 1, budgets=(2.0, 2.0)).passed


def test_oscillating_case_converges_with_decaying_step():
    ch = EstimatedChannel.from_gains(np.ones((2, 2)), snr=1.0)
    m = Multipliers(0.05, 0.05)
    plain = fixed_point_power(ch, BB, m, 1, budgets=(2.0, 2.0))
    assert not plain.converged  # reported, not raised
    sol = fixed_point_power(ch, BB, m, 1, IterationSchedule(decaying=True), budgets=(2.0, 2.0))
    assert sol.converged
    assert sol.powers.p1 == pytest.approx(sol.powers.p2, abs=1e-5)


def test_tune_multipliers_meets_budgets():
    ens = [EstimatedChannel.perfect(sample_channel(500 + i, 1.0)) for i in range(30)]
    for mac in (1, 2):
        r = tune_multipliers(ens, 2.0, 2.0, mac=mac)
        assert abs(r.average[0] - 2.0) < 1e-9 and abs(r.average[1] - 2.0) < 1e-9
        assert ensemble_kkt(ens, r, 2.0, 2.0, mac).passed
        assert isinstance(r.multipliers.lambda1, float)


def test_tune_single_channel_is_tie():
    ch = EstimatedChannel.perfect(sample_channel(1, 1.0))
    r = tune_multipliers([ch], 2.0, 2.0)
    assert r.method == "exact-tie"
    assert r.powers[0].p1 == pytest.approx(2.0) and r.powers[0].p2 == pytest.approx(2.0)


def test_tune_infeasible_user():
    ens = [EstimatedChannel.from_gains([[1.0, 0.0], [1.0, 1.0]]) for _ in range(3)]
    r = tune_multipliers(ens, 1.0, 1.0)
    assert r.method == "infeasible-slack" and r.feasible == (True, False)
    assert r.average[0] == pytest.approx(1.0)


def test_tune_with_allocator():
    # independent per-user waterfilling makes each average monotone in its own multiplier
    ens = [EstimatedChannel.perfect(sample_channel(700 + i, 1.0)) for i in range(6)]

    def alloc(ch, m):
        g = [abs(ch.link(1, k)) ** 2 for k in (1, 2)]
        return PowerProfile(*(min(10.0, max(0.0, 1 / m.lam(k) - 1 / g[k - 1])) for k in (1, 2)))

    r = tune_multipliers(ens, 1.0, 0.5, IterationSchedule(tol=1e-6, max_iter=50), 1, alloc)
    assert r.method == "alternating-bisection" and r.feasible == (True, True)
    assert r.average == pytest.approx((1.0, 0.5), abs=1e-6)


def test_scalar_precoder_matches_power_fixed_point():
    ch = EstimatedChannel.perfect(sample_channel(5, 2.0, real_only=True))
    m = Multipliers(0.05, 0.08)
    fp = fixed_point_power(ch, BB, m, 2, budgets=(2.0, 2.0))
    pc = fixed_point_precoder(ch, BB, m, 2, budgets=(2.0, 2.0))
    assert fp.converged and pc.converged and fp.iterations == pc.iterations
    assert abs(abs(pc.precoders.mat1[0, 0]) ** 2 - fp.powers.p1) < 1e-10
    assert abs(abs(pc.precoders.mat2[0, 0]) ** 2 - fp.powers.p2) < 1e-10


def test_budget_normalization_hits_budget():
    ch = EstimatedChannel.perfect(sample_channel(6, 1.0, real_only=True))
    sol = fixed_point_precoder(ch, BB, Multipliers(0.5, 0.5), 1, budgets=(1.5, 0.5),
                               normalization="budget")
    assert sol.precoders.power(1) == pytest.approx(1.5)
    assert sol.precoders.power(2) == pytest.approx(0.5)
    assert all(n > 0 for n in sol.nu)
    with pytest.raises(ValueError):
        fixed_point_precoder(ch, BB, Multipliers(1, 1), normalization="scale")


def test_svd_init_power():
    H = np.array([[1.0, 0.5j], [0.2, 2.0]])
    P, f = svd_init(H, 3.0)
    assert np.real(np.trace(P @ P.conj().T)) == pytest.approx(3.0)
    assert np.allclose(f["U"] @ np.diag(f["Lambda"]) @ f["V"].conj().T, H)


def test_mimo_precoder_diagonal_channel_is_mercury_waterfilling():
    H = np.diag([2.0, 0.5])
    eng = IntegrationEngine(order=24, check=False)
    # below the weak stream's slope the strong stream alone meets g mmse(g p) = nu
    P, _, res, ok = mimo_precoder(H, BPSK, nu=1.0, budget=2.0, engine=eng)
    ref = sopt.brentq(lambda p: 4 * scalar_mmse(BPSK, 4 * p) - 1.0, 1e-9, 2.0, xtol=1e-14)
    assert ok and abs(abs(P[0, 0]) ** 2 - ref) < 1e-4
    assert np.max(np.abs(P[1])) < 1e-5 and abs(P[0, 1]) < 1e-5
    # with the budget met exactly both streams share a common slope
    eng = IntegrationEngine(order=64, check=False)
    P, _, res, ok = mimo_precoder(H, BPSK, nu=0.5, budget=2.0, engine=eng, normalization="budget")
    p = np.abs(np.diag(P)) ** 2
    assert ok and p.sum() == pytest.approx(2.0)

    def gap(p1):
        return 4 * scalar_mmse(BPSK, 4 * p1) - 0.25 * scalar_mmse(BPSK, 0.25 * (2 - p1))

    ref = sopt.brentq(gap, 1e-6, 2.0 - 1e-6, xtol=1e-14)
    assert abs(p[0] - ref) < 1e-4


def _cand(mac, rate):
    return DesignOutcome(mac, PowerProfile(1.0, float(mac)), RateValue(rate), ((mac, RateValue(rate)),))


def test_select_min_rate_and_tie():
    a, b = _cand(1, 1.2), _cand(2, 0.8)
    assert select_design(a, b).selected_mac == 2
    assert select_design(b, a).selected_mac == 2
    assert select_design(a, b).rates == ((1, RateValue(1.2)), (2, RateValue(0.8)))
    t1, t2 = _cand(1, 1.0), _cand(2, 1.0)
    assert select_design(t1, t2).selected_mac == 1
    assert select_design(t2, t1).selected_mac == 1


@settings(max_examples=40)
@given(r1=st.floats(0, 5), r2=st.floats(0, 5))
def test_select_matches_brute_force_and_ignores_order(r1, r2):
    a, b = _cand(1, r1), _cand(2, r2)
    s = select_design(a, b)
    assert s == brute_force_select([a, b])
    assert select_design(b, a) == s


def test_solve_mac_methods():
    ch = EstimatedChannel.perfect(sample_channel(8, 1.0))
    m = Multipliers(0.3, 0.3)
    cf = solve_mac(ch, GG, m, 1, (2.0, 2.0), method="closed-form")
    assert cf.design == gaussian_power(ch, m, 1, (2.0, 2.0))
    full = solve_mac(ch, BB, m, 2, (2.0, 2.0), method="full")
    assert full.design.powers == (2.0, 2.0) and full.selected_mac == 2
    with pytest.raises(ValueError):
        solve_mac(ch, GG, m, 1, method="newton")
    with pytest.raises(ValueError):
        solve_mac(ch, GG, m, 1, None, method="full")


def test_precoder_pair_equality():
    a = PrecoderPair(np.eye(1), np.eye(1))
    assert a == PrecoderPair(np.eye(1), np.eye(1))
    assert a.power(1) == 1.0
