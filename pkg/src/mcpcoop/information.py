"""Mutual information of the two-user channels and its power gradients.

All quantities use effective gains ``snr * |h_lk|**2``.  Gradients are
reported in a normalized form: the derivative of the rate in nats with
respect to the amplitude ``sqrt(P_k)`` equals ``gradient_scale(ch, l)``
times the returned value, with ``gradient_scale = 2 * snr / sigma_l**2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import EstimatedChannel, FrameConfig
from .estimation import (MmseMatrix, _law, mmse_matrix, receiver_columns,
                         scalar_mi, scalar_mmse)
from .inputs import InputSpec, PowerProfile
from .quadrature import DEFAULT_ENGINE, IntegrationEngine, analyze_mixture

LN2 = math.log(2.0)
_UNITS = ("bits", "nats")


@dataclass(frozen=True)
class RateValue:
    """A rate with its unit; ``prefactor_applied`` marks the pilot-overhead factor."""

    value: float
    unit: str = "bits"
    prefactor_applied: bool = False
    warning: str | None = None
    stderr: float = 0.0

    def __post_init__(self):
        if self.unit not in _UNITS:
            raise ValueError(f"unit must be one of {_UNITS}")
        if not math.isfinite(self.value):
            raise ValueError("rate must be finite")
        # round-off can leave a tiny negative value
        object.__setattr__(self, "value", max(0.0, float(self.value)))

    def to(self, unit: str) -> "RateValue":
        if unit == self.unit:
            return self
        f = 1.0 / LN2 if unit == "bits" else LN2
        return RateValue(self.value * f, unit, self.prefactor_applied, self.warning,
                         self.stderr * f)

    @property
    def bits(self) -> float:
        return self.to("bits").value

    @property
    def nats(self) -> float:
        return self.to("nats").value


def _rate(nats: float, unit: str, frame: FrameConfig | None, warning=None, stderr=0.0):
    if unit not in _UNITS:
        raise ValueError(f"unit must be one of {_UNITS}")
    pre = frame.rate_prefactor if frame is not None else 1.0
    f = pre / LN2 if unit == "bits" else pre
    return RateValue(nats * f, unit, frame is not None, warning, stderr * f)


def _check_powers(powers):
    if not (isinstance(powers, PowerProfile) or hasattr(powers, "mat1")):
        raise TypeError("powers must be a PowerProfile or a precoder pair")


def _gauss_logdet(cols, noise_var) -> float:
    A = np.hstack(cols)
    n = A.shape[0]
    sign, val = np.linalg.slogdet(np.eye(n) + A @ A.conj().T / noise_var)
    return float(val)


def _separable(cols, laws) -> bool:
    """Real scalar gains with product constellations split into two real problems."""
    if cols[0].shape != (1, 1):
        return False
    if any(np.any(c.imag != 0) for c in cols):
        return False
    return all(law is None or law[2] is not None for law in laws)


def _joint_mi(ch: EstimatedChannel, powers, inputs, receiver: int, engine,
              laws=None):
    """I(x1, x2; y_l) in nats for any mix of Gaussian and discrete users."""
    cols = receiver_columns(ch, powers, receiver)
    sig = ch.sigma_sq(receiver)
    if laws is None:
        laws = [_law(s) for s in inputs]
    gauss_cols = [c for c, law in zip(cols, laws) if law is None]
    gauss_part = _gauss_logdet(gauss_cols, sig) if gauss_cols else 0.0
    if all(law is None for law in laws):
        return gauss_part, None, 0.0
    ext = [None if law is None else law + (getattr(s, "axes", None),)
           for law, s in zip(laws, inputs)]
    if _separable(cols, ext):
        total, notes, err = 0.0, [], 0.0
        for ax in (0, 2):
            axis_laws = [None if e is None else (np.asarray(e[2][ax], complex), e[2][ax + 1])
                         for e in ext]
            r = analyze_mixture(cols, axis_laws, sig, engine, want_error=False)
            total += r.mi
            err += r.stderr
            if r.warning:
                notes.append(r.warning)
        return total + gauss_part, "; ".join(notes) or None, err
    r = analyze_mixture(cols, laws, sig, engine, want_error=False)
    return r.mi + gauss_part, r.warning, r.stderr


def mi_gaussian_sum(ch: EstimatedChannel, powers: PowerProfile, receiver: int = 1,
                    unit: str = "bits", frame: FrameConfig | None = None) -> RateValue:
    """Sum rate ``log(1 + (g_l1 P1 + g_l2 P2) / sigma_l**2)`` with Gaussian inputs."""
    _check_powers(powers)
    cols = receiver_columns(ch, powers, receiver)
    return _rate(_gauss_logdet(cols, ch.sigma_sq(receiver)), unit, frame)


def mi_sum(ch, powers, inputs, engine: IntegrationEngine = DEFAULT_ENGINE,
           receiver: int = 1, unit: str = "bits", frame=None) -> RateValue:
    """Joint ``I(x1, x2; y_l)`` for arbitrary input laws."""
    _check_powers(powers)
    nats, note, se = _joint_mi(ch, powers, inputs, receiver, engine)
    return _rate(nats, unit, frame, note, se)


def mi_discrete_sum(ch, powers, inputs, engine: IntegrationEngine = DEFAULT_ENGINE,
                    receiver: int = 1, unit: str = "bits", frame=None) -> RateValue:
    """Joint ``I(x1, x2; y_l)`` when both users have finite constellations."""
    if any(s.is_gaussian for s in inputs):
        raise ValueError("mi_discrete_sum needs two discrete inputs")
    return mi_sum(ch, powers, inputs, engine, receiver, unit, frame)


def mi_mixed(ch, powers, gaussian_user: int, other: InputSpec,
             engine: IntegrationEngine = DEFAULT_ENGINE, receiver: int = 1,
             unit: str = "bits", frame=None) -> RateValue:
    """Joint rate with one Gaussian and one discrete user.

    Evaluated as the discrete user's rate with the Gaussian user as noise
    plus ``log(1 + g_lG P_G / sigma_l**2)``.
    """
    if gaussian_user not in (1, 2):
        raise ValueError("gaussian_user must be 1 or 2")
    if other.is_gaussian:
        raise ValueError("the other user must be discrete")
    inputs = [other, other]
    inputs[gaussian_user - 1] = InputSpec.gaussian()
    return mi_sum(ch, powers, inputs, engine, receiver, unit, frame)


_MODELS = ("gaussian", "exact")


def _int_noise_nats(ch, powers, inputs, decoded_user, engine, model):
    if decoded_user not in (1, 2):
        raise ValueError("decoded_user must be 1 or 2")
    if model not in _MODELS:
        raise ValueError(f"model must be one of {_MODELS}")
    receiver = 3 - decoded_user
    d, i = decoded_user - 1, receiver - 1
    laws = [_law(s) for s in inputs]
    if model == "gaussian":
        laws[i] = None
    cols = receiver_columns(ch, powers, receiver)
    sig = ch.sigma_sq(receiver)
    if laws[i] is None:
        if laws[d] is None:
            noise = sig + float(np.sum(np.abs(cols[i]) ** 2))
            return math.log1p(float(np.sum(np.abs(cols[d]) ** 2)) / noise), None, 0.0
        r = analyze_mixture(cols, laws, sig, engine, want_error=False)
        return r.mi, r.warning, r.stderr
    # exact interferer law: chain rule through the joint rate
    joint, note, se = _joint_mi(ch, powers, inputs, receiver, engine, laws)
    snr_i = float(np.sum(np.abs(cols[i]) ** 2)) / sig
    return joint - scalar_mi(inputs[i], snr_i, engine), note, se


def mi_interference_as_noise(ch, powers, inputs, decoded_user: int,
                             engine: IntegrationEngine = DEFAULT_ENGINE,
                             model: str = "gaussian", unit: str = "bits",
                             frame=None) -> RateValue:
    """Rate of ``decoded_user`` at the other user's base station.

    ``decoded_user=2`` gives ``I(x2; y1)``, ``decoded_user=1`` gives
    ``I(x1; y2)``.  The undecoded user acts as noise: with
    ``model="gaussian"`` it is replaced by a Gaussian of the same power,
    with ``model="exact"`` its true law is kept.
    """
    _check_powers(powers)
    nats, note, se = _int_noise_nats(ch, powers, inputs, decoded_user, engine, model)
    return _rate(nats, unit, frame, note, se)


def mi_conditional(ch, powers, inputs, engine: IntegrationEngine = DEFAULT_ENGINE,
                   receiver: int = 1, model: str = "exact", unit: str = "bits",
                   frame=None) -> RateValue:
    """``I(x_l; y_l | x_other)`` by the chain rule.

    Equals the joint rate minus :func:`mi_interference_as_noise` of the
    other user with the same ``model``.
    """
    _check_powers(powers)
    joint, n1, se1 = _joint_mi(ch, powers, inputs, receiver, engine)
    part, n2, se2 = _int_noise_nats(ch, powers, inputs, 3 - receiver, engine, model)
    note = "; ".join(n for n in (n1, n2) if n) or None
    return _rate(joint - part, unit, frame, note, se1 + se2)


@dataclass(frozen=True)
class GradientPair:
    """Normalized gradients with respect to the amplitudes ``sqrt(P1), sqrt(P2)``.

    Multiply by ``scale`` to obtain derivatives of the rate in nats.
    """

    g1: float
    g2: float
    receiver: int = 1
    scale: float = 1.0

    def nats(self) -> tuple[float, float]:
        return (self.g1 * self.scale, self.g2 * self.scale)


def gradient_scale(ch: EstimatedChannel, receiver: int) -> float:
    """Factor ``2 snr / sigma_l**2`` from normalized gradients to nats per amplitude."""
    return 2.0 * ch.snr / ch.sigma_sq(receiver)


def _joint_component(ch, a, E, receiver, k):
    j = 3 - k
    hk, hj = ch.link(receiver, k), ch.link(receiver, j)
    val = abs(hk) ** 2 * a[k - 1] * E[k - 1, k - 1] + np.conj(hk) * hj * a[j - 1] * E[j - 1, k - 1]
    return float(np.real(val))


def grad_power_joint(ch: EstimatedChannel, powers: PowerProfile, mmse: MmseMatrix,
                     receiver: int) -> GradientPair:
    """Gradient of ``I(x1, x2; y_l)`` from the error matrix at receiver ``l``.

    ``g_k = Re(|h_lk|^2 sqrt(P_k) E_kk + conj(h_lk) h_lj sqrt(P_j) E_jk)``
    where ``E_jk = E[e_j conj(e_k)]`` is taken at receiver ``l``.  The
    matrix must come from ``mmse_matrix(..., receiver=l)``; the entries a
    system matrix lacks (the other receiver's row) are not substitutable.
    """
    if mmse.receiver != receiver:
        raise ValueError("grad_power_joint needs the error matrix of the same receiver "
                         "(mmse_matrix(..., receiver=receiver))")
    a = powers.amplitudes
    E = mmse.matrix
    g = [_joint_component(ch, a, E, receiver, k) for k in (1, 2)]
    return GradientPair(g[0], g[1], receiver, gradient_scale(ch, receiver))


def grad_power_int_noise(ch, powers, inputs, engine: IntegrationEngine = DEFAULT_ENGINE,
                         receiver: int = 1, model: str = "gaussian") -> float:
    """Normalized derivative of the interference-as-noise rate w.r.t. the interferer.

    At receiver 1 this is ``d I(x2; y1) / d sqrt(P1)`` (receiver 2:
    ``d I(x1; y2) / d sqrt(P2)``).  For the Gaussian noise model

        -sigma^2 snr |h_ll|^2 |h_lo|^2 sqrt(P_l) P_o E_oo / (snr |h_ll|^2 P_l + sigma^2)^2

    with ``E_oo`` the scalar mmse of the decoded user at its
    interference-plus-noise SNR.  The ``exact`` model subtracts the
    conditional term from the joint gradient.
    """
    if model not in _MODELS:
        raise ValueError(f"model must be one of {_MODELS}")
    l, o = receiver, 3 - receiver
    a = powers.amplitudes
    sig = ch.sigma_sq(l)
    gll = ch.snr * abs(ch.link(l, l)) ** 2
    glo = ch.snr * abs(ch.link(l, o)) ** 2
    p_l, p_o = powers.power(l), powers.power(o)
    if model == "gaussian" or inputs[l - 1].is_gaussian:
        if glo == 0 or p_o == 0 or gll == 0:
            return 0.0
        noise = gll * p_l + sig
        e_oo = scalar_mmse(inputs[o - 1], glo * p_o / noise, engine)
        return -sig * gll * abs(ch.link(l, o)) ** 2 * a[l - 1] * p_o * e_oo / noise ** 2
    E = mmse_matrix(ch, powers, inputs, engine, receiver=l)
    joint = _joint_component(ch, a, E.matrix, l, l)
    return joint - abs(ch.link(l, l)) ** 2 * a[l - 1] * scalar_mmse(inputs[l - 1], gll * p_l / sig,
                                                                      engine)


def grad_power_conditional(ch, powers, inputs, engine: IntegrationEngine = DEFAULT_ENGINE,
                           receiver: int = 1, model: str = "exact") -> float:
    """Normalized ``d I(x_l; y_l | x_o) / d sqrt(P_l)``: joint minus interference term."""
    E = mmse_matrix(ch, powers, inputs, engine, receiver=receiver)
    joint = grad_power_joint(ch, powers, E, receiver)
    g = joint.g1 if receiver == 1 else joint.g2
    return g - grad_power_int_noise(ch, powers, inputs, engine, receiver, model)
