"""Posterior-mean estimators and MMSE matrices of the two-user channels."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .channel import EstimatedChannel
from .inputs import InputSpec, PowerProfile
from .quadrature import (DEFAULT_ENGINE, IntegrationEngine, MixtureResult,
                         analyze_mixture, posterior_mean_mixture)


def _law(spec: InputSpec):
    return None if spec.is_gaussian else (spec.points, spec.probs)


def precoder_blocks(design, n: int) -> list[np.ndarray]:
    """Per-user transmit matrices from a PowerProfile or a pair of precoders."""
    if isinstance(design, PowerProfile):
        return [math.sqrt(design.p1) * np.eye(n), math.sqrt(design.p2) * np.eye(n)]
    mats = [design.mat1, design.mat2] if hasattr(design, "mat1") else list(design)
    return [np.atleast_2d(np.asarray(m, complex)) for m in mats]


def receiver_columns(ch: EstimatedChannel, design, receiver: int) -> list[np.ndarray]:
    """Effective gains ``sqrt(snr) H_lk P_k`` of both users at a receiver."""
    if receiver not in (1, 2):
        raise ValueError("receiver must be 1 or 2")
    blocks = precoder_blocks(design, ch.n_antennas)
    g = math.sqrt(ch.snr)
    return [g * ch.block(receiver, k) @ blocks[k - 1] for k in (1, 2)]


def receiver_analysis(ch: EstimatedChannel, design, inputs, receiver: int,
                      engine: IntegrationEngine = DEFAULT_ENGINE,
                      want_error: bool = True) -> MixtureResult:
    """Joint MI and full error covariance of both users at one receiver."""
    cols = receiver_columns(ch, design, receiver)
    return analyze_mixture(cols, [_law(s) for s in inputs], ch.sigma_sq(receiver),
                           engine, want_error)


@dataclass(frozen=True)
class MmseMatrix:
    """2x2 error matrix.

    With ``receiver`` equal to 1 or 2 all four entries are the error
    covariance ``E[(x_i - E[x_i|y_l])(x_j - E[x_j|y_l])^*]`` at that
    receiver.  With ``receiver=None`` it is the system matrix: the first
    row is taken at receiver 1 and the second row at receiver 2.
    """

    e11: complex
    e12: complex
    e21: complex
    e22: complex
    receiver: int | None = None
    warning: str | None = None

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.e11, self.e12], [self.e21, self.e22]])

    def entry(self, i: int, j: int):
        return self.matrix[i - 1, j - 1]

    @classmethod
    def from_array(cls, arr, receiver=None, warning=None) -> "MmseMatrix":
        arr = np.asarray(arr, complex)
        # diagonal entries are variances of unit-power inputs; clip round-off
        d = np.clip(arr.real.diagonal(), 0.0, 1.0)
        arr = arr.copy()
        arr[0, 0], arr[1, 1] = d[0], d[1]
        if np.all(np.abs(arr.imag) <= 1e-15 * max(1.0, np.abs(arr).max())):
            vals = [float(v) for v in arr.real.ravel()]
        else:
            vals = [complex(v) for v in arr.ravel()]
        return cls(*vals, receiver=receiver, warning=warning)


def _join(*notes):
    notes = [n for n in notes if n]
    return "; ".join(notes) if notes else None


def mmse_matrix(ch: EstimatedChannel, powers: PowerProfile, inputs,
                engine: IntegrationEngine = DEFAULT_ENGINE, receiver: int | None = None
                ) -> MmseMatrix:
    """Error matrix of the inputs given the channel outputs.

    Parameters
    ----------
    ch : EstimatedChannel
        Scalar channel estimate.
    powers : PowerProfile
    inputs : pair of InputSpec
    engine : IntegrationEngine
    receiver : {None, 1, 2}
        None returns the system matrix (rows from receivers 1 and 2); 1 or 2
        returns the full error covariance at that receiver, the form the
        gradient identities need.
    """
    if ch.n_antennas != 1:
        raise ValueError("mmse_matrix expects the scalar channel model")
    if receiver is not None:
        r = receiver_analysis(ch, powers, inputs, receiver, engine)
        return MmseMatrix.from_array(r.error, receiver, r.warning)
    r1 = receiver_analysis(ch, powers, inputs, 1, engine)
    r2 = receiver_analysis(ch, powers, inputs, 2, engine)
    arr = np.vstack([r1.error[0], r2.error[1]])
    return MmseMatrix.from_array(arr, None, _join(r1.warning, r2.warning))


def posterior_mean(y, ch: EstimatedChannel, powers: PowerProfile, inputs,
                   receiver: int) -> tuple[complex, complex]:
    """``(E[x1|y_l], E[x2|y_l])`` for a single observation at receiver ``l``."""
    cols = receiver_columns(ch, powers, receiver)
    est = posterior_mean_mixture(y, cols, [_law(s) for s in inputs], ch.sigma_sq(receiver))
    return complex(est[0]), complex(est[1])


def _bpsk_integrals(snr_eff: float):
    """BPSK mmse and MI (nats) on the real axis; LLR is ``2a`` with ``a = 2s + sqrt(2s) z``."""
    r = math.sqrt(2.0 * snr_eff)
    phi = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    # centre the adaptive rule on the region where the error term lives
    lo, hi = -r - 12.0, 12.0
    mm = integrate.quad(lambda z: phi(z) * 2.0 * special.expit(-2.0 * (2 * snr_eff + r * z)),
                        lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    loss = integrate.quad(lambda z: phi(z) * np.logaddexp(0.0, -2.0 * (2 * snr_eff + r * z)),
                          lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    return mm, math.log(2.0) - loss


def _single_user(spec: InputSpec, snr_eff: float, engine: IntegrationEngine | None):
    eng = engine if engine is not None else IntegrationEngine(order=128, check=False)
    return analyze_mixture([[[math.sqrt(snr_eff)]]], [_law(spec)], 1.0, eng)


def scalar_mmse(kind: InputSpec, snr_eff: float, engine: IntegrationEngine | None = None) -> float:
    """MMSE of a unit-power input over ``y = sqrt(snr_eff) x + CN(0, 1)``.

    Gaussian and BPSK inputs use closed-form and adaptive one-dimensional
    integrals; other constellations use the integration engine (128-point
    Gauss-Hermite unless ``engine`` is given).
    """
    if not snr_eff >= 0:
        raise ValueError("snr_eff must be >= 0")
    if snr_eff == 0:
        return 1.0
    if kind.is_gaussian:
        return 1.0 / (1.0 + snr_eff)
    if kind.kind == "bpsk" and engine is None:
        return _bpsk_integrals(snr_eff)[0]
    return float(_single_user(kind, snr_eff, engine).error[0, 0].real)


def scalar_mi(kind: InputSpec, snr_eff: float, engine: IntegrationEngine | None = None) -> float:
    """Mutual information in nats of the scalar channel used by :func:`scalar_mmse`."""
    if not snr_eff >= 0:
        raise ValueError("snr_eff must be >= 0")
    if snr_eff == 0:
        return 0.0
    if kind.is_gaussian:
        return math.log1p(snr_eff)
    if kind.kind == "bpsk" and engine is None:
        return _bpsk_integrals(snr_eff)[1]
    return float(_single_user(kind, snr_eff, engine).mi)
