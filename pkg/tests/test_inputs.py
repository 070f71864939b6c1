import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcpcoop.inputs import (InputSpec, PowerProfile, gaussian_quadrature_input, input_from_name,
                            load_constellation, pam, qam, save_constellation)


def _moments(spec):
    return np.sum(spec.probs * spec.points), np.sum(spec.probs * np.abs(spec.points) ** 2)


def test_bpsk_law():
    b = InputSpec.bpsk()
    assert set(b.points.real) == {-1.0, 1.0}
    assert np.allclose(b.probs, 0.5)
    assert b.axes is not None


def test_rejects_non_unit_power_or_biased():
    with pytest.raises(ValueError):
        InputSpec.discrete([2.0, -2.0])
    with pytest.raises(ValueError):
        InputSpec.discrete([1.0, 0.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        InputSpec.discrete([1.0, -1.0], [0.6, 0.5])
    with pytest.raises(ValueError):
        InputSpec("laplace")


def test_normalize_option():
    s = InputSpec.discrete([0.0, 3.0, 6.0], normalize=True)
    mean, power = _moments(s)
    assert abs(mean) < 1e-12 and abs(power - 1) < 1e-12


@given(st.sampled_from([2, 4, 8, 16]))
def test_pam_unit_power(m):
    mean, power = _moments(pam(m))
    assert abs(mean) < 1e-12 and abs(power - 1) < 1e-12
    assert np.all(pam(m).points.imag == 0)


@given(st.sampled_from([4, 16, 64]))
def test_qam_unit_power(m):
    s = qam(m)
    assert s.size == m
    mean, power = _moments(s)
    assert abs(mean) < 1e-12 and abs(power - 1) < 1e-12


@given(st.sampled_from([4, 9, 16, 25]))
def test_quadrature_input_matches_gaussian_moments(n):
    s = gaussian_quadrature_input(n)
    mean, power = _moments(s)
    assert abs(mean) < 1e-12 and abs(power - 1) < 1e-9
    # circular: E[x^2] = 0
    assert abs(np.sum(s.probs * s.points ** 2)) < 1e-12
    if n >= 9:
        # an m-point rule is exact to degree 2m-1: per-axis fourth moment 3/4 of N(0, 1/2)
        assert abs(np.sum(s.probs * s.points.real ** 4) - 0.75) < 1e-9


def test_quadrature_input_needs_square():
    with pytest.raises(ValueError):
        gaussian_quadrature_input(10)
    with pytest.raises(ValueError):
        gaussian_quadrature_input(1)  # a single point at zero has no power


def test_names():
    assert input_from_name("gaussian").is_gaussian
    assert input_from_name("BPSK") == InputSpec.bpsk()
    assert input_from_name("qpsk").size == 4
    assert input_from_name("4pam").size == 4
    assert input_from_name("gh16").size == 16
    with pytest.raises(ValueError):
        input_from_name("ofdm")


def test_constellation_file_round_trip(tmp_path):
    s = qam(16)
    p = tmp_path / "c.txt"
    save_constellation(s, p)
    back = load_constellation(p)
    assert np.array_equal(back.points, s.points) and np.array_equal(back.probs, s.probs)


def test_constellation_file_diagnostics(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("# header\n1 0 0.5\n-1 0\n")
    with pytest.raises(ValueError, match=r"bad.txt:3"):
        load_constellation(p)
    p.write_text("1 0 0.5\n1 0 0.5\n")
    with pytest.raises(ValueError, match="zero-mean"):
        load_constellation(p)


def test_power_profile():
    pp = PowerProfile(1.0, 4.0, 2.0, 5.0)
    assert np.allclose(pp.amplitudes, [1.0, 2.0])
    assert pp.power(2) == 4.0
    assert pp.with_powers(0.5, 0.5).q2 == 5.0
    for bad in ((-1, 0), (math.inf, 0), (math.nan, 0)):
        with pytest.raises(ValueError):
            PowerProfile(*bad)
    with pytest.raises(ValueError):
        PowerProfile(1, 1, 0, 1)
