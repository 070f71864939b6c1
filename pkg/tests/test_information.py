import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcpcoop.channel import EstimatedChannel, FrameConfig
from mcpcoop.estimation import mmse_matrix, scalar_mi
from mcpcoop.information import (RateValue, gradient_scale, grad_power_conditional,
                                 grad_power_int_noise, grad_power_joint, mi_conditional,
                                 mi_discrete_sum, mi_gaussian_sum, mi_interference_as_noise,
                                 mi_mixed, mi_sum)
from mcpcoop.inputs import InputSpec, PowerProfile, qam
from mcpcoop.quadrature import IntegrationEngine

BPSK = InputSpec.bpsk()
GAUSS = InputSpec.gaussian()
BB = (BPSK, BPSK)
ENG = IntegrationEngine(order=96, check=False)


def _fd(f, a, k, rel=1e-4):
    e = np.zeros(2)
    e[k] = rel * a[k]
    return (f(PowerProfile(*(a + e) ** 2)) - f(PowerProfile(*(a - e) ** 2))) / (2 * e[k])


def _point(seed, complex_=False):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((2, 2))
    if complex_:
        h = h + 1j * rng.standard_normal((2, 2))
    return EstimatedChannel.from_gains(h, snr=1.3), np.sqrt(rng.uniform(0.3, 2.0, 2))


def test_gaussian_sum_closed_form():
    ch = EstimatedChannel.from_gains([[1.0, 0.5], [0.2, 1.0]], snr=2.0)
    r = mi_gaussian_sum(ch, PowerProfile(1.0, 2.0), receiver=1)
    assert r.unit == "bits"
    assert math.isclose(r.value, math.log2(1 + 2.0 * (1.0 + 0.25 * 2.0)), rel_tol=1e-14)
    r2 = mi_gaussian_sum(ch, PowerProfile(1.0, 2.0), receiver=2, unit="nats")
    assert math.isclose(r2.value, math.log1p(2.0 * (0.04 + 2.0)), rel_tol=1e-14)


def test_noise_variance_enters_rates():
    ch = EstimatedChannel.from_gains(np.ones((2, 2)), snr=1.0, sigma_sq=(2.0, 1.0))
    r = mi_gaussian_sum(ch, PowerProfile(1.0, 1.0), 1, "nats")
    assert math.isclose(r.value, math.log1p(2.0 / 2.0))


def test_rate_units_and_prefactor():
    r = RateValue(1.0, "nats")
    assert math.isclose(r.bits, 1 / math.log(2))
    assert r.to("nats") is r
    with pytest.raises(ValueError):
        RateValue(1.0, "bps")
    with pytest.raises(ValueError):
        RateValue(math.nan)
    assert RateValue(-1e-17).value == 0.0
    ch = EstimatedChannel.from_gains(np.ones((2, 2)))
    f = FrameConfig(K=10, M=1, L_pilots=1)
    a = mi_gaussian_sum(ch, PowerProfile(1, 1))
    b = mi_gaussian_sum(ch, PowerProfile(1, 1), frame=f)
    assert b.prefactor_applied and math.isclose(b.value, 0.9 * a.value)


def test_mi_sum_gaussian_matches_closed_form():
    ch, a = _point(1, complex_=True)
    pp = PowerProfile(*a ** 2)
    for l in (1, 2):
        assert math.isclose(mi_sum(ch, pp, (GAUSS, GAUSS), receiver=l).value,
                            mi_gaussian_sum(ch, pp, l).value, rel_tol=1e-12)


def test_bpsk_zero_power_reduces_to_single_user():
    ch = EstimatedChannel.from_gains([[0.8, 1.1], [1.0, 1.0]], snr=2.0)
    r = mi_sum(ch, PowerProfile(1.5, 0.0), BB, receiver=1, unit="nats")
    # default 64-point rule against the adaptive integral
    assert abs(r.value - scalar_mi(BPSK, 2.0 * 0.64 * 1.5)) < 1e-7


def test_discrete_sum_requires_discrete():
    ch = EstimatedChannel.from_gains(np.ones((2, 2)))
    with pytest.raises(ValueError):
        mi_discrete_sum(ch, PowerProfile(1, 1), (GAUSS, BPSK))
    with pytest.raises(TypeError):
        mi_sum(ch, (1.0, 1.0), BB)


def test_separable_path_matches_full_integration():
    q = qam(4)
    ch = EstimatedChannel.from_gains([[1.0, 0.6], [1.0, 1.0]], snr=1.5)
    pp = PowerProfile(1.2, 0.7)
    fast = mi_sum(ch, pp, (q, q), ENG).value
    # a tiny phase defeats the real-gain split and forces the complex integral
    rot = EstimatedChannel.from_gains([[1.0, 0.6 * np.exp(1e-9j)], [1.0, 1.0]], snr=1.5)
    slow = mi_sum(rot, pp, (q, q), IntegrationEngine(order=48, check=False)).value
    assert abs(fast - slow) < 1e-6


def test_mixed_is_chain_rule_of_gaussian_part():
    ch = EstimatedChannel.from_gains([[1.0, 0.7], [1.0, 1.0]], snr=2.0)
    pp = PowerProfile(1.0, 1.5)
    r = mi_mixed(ch, pp, 2, BPSK, receiver=1, unit="nats").value
    g2 = 2.0 * 0.49 * 1.5
    ref = math.log1p(g2) + scalar_mi(BPSK, 2.0 * 1.0 / (1 + g2))
    assert abs(r - ref) < 1e-8
    with pytest.raises(ValueError):
        mi_mixed(ch, pp, 1, GAUSS)


@settings(max_examples=20, deadline=None)
@given(p1=st.floats(0, 2), p2=st.floats(0, 2))
def test_gaussian_dominates_mixed_all_ones(p1, p2):
    ch = EstimatedChannel.from_gains(np.ones((2, 2)), snr=1.0)
    pp = PowerProfile(p1, p2)
    g = mi_gaussian_sum(ch, pp).value
    for gu in (1, 2):
        m = mi_mixed(ch, pp, gu, BPSK).value
        assert 0 <= m <= g + 1e-12


@pytest.mark.parametrize("model", ["gaussian", "exact"])
def test_chain_rule(model):
    ch, a = _point(4)
    pp = PowerProfile(*a ** 2)
    for l in (1, 2):
        joint = mi_sum(ch, pp, BB, ENG, l, "nats").value
        cond = mi_conditional(ch, pp, BB, ENG, l, model, "nats").value
        part = mi_interference_as_noise(ch, pp, BB, 3 - l, ENG, model, "nats").value
        assert abs(joint - cond - part) < 1e-12


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("complex_", [False, True])
def test_joint_gradient_finite_difference(seed, complex_):
    ch, a = _point(seed, complex_)
    eng = ENG if not complex_ else IntegrationEngine(order=80, check=False)
    pp = PowerProfile(*a ** 2)
    for l in (1, 2):
        G = grad_power_joint(ch, pp, mmse_matrix(ch, pp, BB, eng, receiver=l), l)
        for k in (0, 1):
            num = _fd(lambda q: mi_sum(ch, q, BB, eng, l, "nats").value, a, k)
            assert abs(num - G.nats()[k]) < 2e-5 * max(1.0, abs(num))


def test_gradient_scale():
    ch = EstimatedChannel.from_gains(np.ones((2, 2)), snr=3.0, sigma_sq=(2.0, 1.5))
    assert gradient_scale(ch, 1) == 3.0 and gradient_scale(ch, 2) == 4.0


def test_joint_gradient_needs_matching_receiver():
    ch, a = _point(0)
    pp = PowerProfile(*a ** 2)
    with pytest.raises(ValueError):
        grad_power_joint(ch, pp, mmse_matrix(ch, pp, BB), 1)


@pytest.mark.parametrize("model", ["gaussian", "exact"])
def test_interference_gradient_finite_difference(model):
    for seed in (0, 3):
        ch, a = _point(seed)
        pp = PowerProfile(*a ** 2)
        for l in (1, 2):
            g = grad_power_int_noise(ch, pp, BB, ENG, l, model) * gradient_scale(ch, l)
            num = _fd(lambda q: mi_interference_as_noise(ch, q, BB, 3 - l, ENG, model,
                                                         "nats").value, a, l - 1)
            assert num < 0  # more direct-user power means more interference for the other
            assert abs(num - g) < 1e-5 * max(1.0, abs(num))


def test_conditional_gradient_finite_difference():
    for seed in (1, 2):
        ch, a = _point(seed)
        pp = PowerProfile(*a ** 2)
        for l in (1, 2):
            g = grad_power_conditional(ch, pp, BB, ENG, l) * gradient_scale(ch, l)
            num = _fd(lambda q: mi_conditional(ch, q, BB, ENG, l, "exact", "nats").value,
                      a, l - 1)
            assert abs(num - g) < 1e-5 * max(1.0, abs(num))


def test_printed_interference_gradient_is_not_proportional():
    """The uncorrected form ``h11^2 h12^2 P2 E22 / (|h11|^2 P1 + 1)`` has the wrong sign
    and no constant ratio to the finite difference; the corrected form does."""
    printed, corrected = [], []
    for seed in range(8):
        ch, a = _point(seed)
        pp = PowerProfile(*a ** 2)
        h11, h12 = ch.link(1, 1).real, ch.link(1, 2).real
        num = _fd(lambda q: mi_interference_as_noise(ch, q, BB, 2, ENG, "gaussian",
                                                     "nats").value, a, 0)
        e22 = mmse_matrix(ch, pp, BB, ENG, receiver=1).e22
        printed.append(num / (h11 ** 2 * h12 ** 2 * pp.p2 * e22 / (h11 ** 2 * pp.p1 + 1)))
        corrected.append(num / grad_power_int_noise(ch, pp, BB, ENG, 1, "gaussian"))
    printed, corrected = np.array(printed), np.array(corrected)
    assert np.all(printed < 0)
    assert np.std(printed) / abs(np.mean(printed)) > 0.1
    assert np.std(corrected) / abs(np.mean(corrected)) < 1e-4
