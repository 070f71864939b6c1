"""Rayleigh fading links and transmitter-side autoregressive prediction.

Channel gains are stored in a 2x2 array ``h`` where ``h[l-1, k-1]`` is the
gain from user terminal ``k`` into base station ``l``.  The received signal
at base station ``l`` is therefore

    y_l = sqrt(snr) * (h[l,1] sqrt(P1) x1 + h[l,2] sqrt(P2) x2) + n_l

so row 1 holds ``h11, h12`` and row 2 holds ``h21, h22``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def _as_gain_array(h, real_only: bool) -> np.ndarray:
    arr = np.array(h, dtype=complex)
    if arr.ndim < 2 or arr.shape[:2] != (2, 2):
        raise ValueError(f"channel must have leading shape (2, 2), got {arr.shape}")
    if real_only:
        if np.any(arr.imag != 0):
            raise ValueError("real_only channel has non-zero imaginary parts")
    return arr


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """True link gains of the two-cell network.

    Parameters
    ----------
    h : array_like, shape (2, 2) or (2, 2, N, N)
        ``h[l-1, k-1]`` is the gain from terminal k into base station l.
        Matrix-valued blocks are allowed for the multi-antenna precoders.
    snr : float
        Common linear SNR scaling, ``snr >= 0``.
    real_only : bool
        Restrict gains to the real axis.
    """

    h: np.ndarray
    snr: float = 1.0
    real_only: bool = False

    def __post_init__(self):
        arr = _as_gain_array(self.h, self.real_only)
        if not np.all(np.isfinite(arr)):
            raise ValueError("channel entries must be finite")
        if not self.snr >= 0:
            raise ValueError(f"snr must be >= 0, got {self.snr}")
        arr.setflags(write=False)
        object.__setattr__(self, "h", arr)
        object.__setattr__(self, "snr", float(self.snr))

    def link(self, l: int, k: int):
        """Gain from terminal ``k`` into base station ``l`` (1-based)."""
        return self.h[l - 1, k - 1]

    def __eq__(self, other):
        if not isinstance(other, ChannelMatrix):
            return NotImplemented
        return (self.snr == other.snr and self.real_only == other.real_only
                and np.array_equal(self.h, other.h))

    __hash__ = None


@dataclass(frozen=True)
class ArModel:
    """Autoregressive fading model ``H(t) = s*rho*sum_i H(t-i) + Omega(t)``.

    ``sign_convention`` selects ``s = -1`` ("as-written") or ``s = +1``
    ("standard").  Omega has i.i.d. zero-mean Gaussian entries with variance
    ``innovation_variance`` (circular complex unless the channel is real).
    """

    order: int = 1
    rho: float = 1.0
    sign_convention: str = "as-written"
    innovation_variance: float = 1.0

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"AR order must be a positive integer, got {self.order}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.sign_convention not in ("as-written", "standard"):
            raise ValueError(f"unknown sign convention {self.sign_convention!r}")
        if not self.innovation_variance >= 0:
            raise ValueError("innovation_variance must be >= 0")

    @property
    def sign(self) -> float:
        return -1.0 if self.sign_convention == "as-written" else 1.0

    @property
    def coefficient(self) -> float:
        return self.sign * self.rho

    def impulse_response(self, n: int) -> np.ndarray:
        """First ``n`` coefficients psi_m of the moving-average expansion."""
        psi = np.zeros(n)
        if n == 0:
            return psi
        psi[0] = 1.0
        for m in range(1, n):
            lo = max(0, m - self.order)
            psi[m] = self.coefficient * psi[lo:m].sum()
        return psi

    def error_variance(self, horizon: int) -> float:
        """Per-link variance of the prediction error ``horizon`` steps ahead."""
        psi = self.impulse_response(horizon)
        return float(self.innovation_variance * np.sum(psi ** 2))


@dataclass(frozen=True, eq=False)
class EstimatedChannel:
    """Channel estimate together with the per-receiver noise variances.

    ``sigma_sq[l-1]`` is the thermal noise (unit) plus the prediction-error
    variance of the two links entering base station l.  A fresh pilot has
    ``horizon == 0`` and unit noise.
    """

    hat_h: np.ndarray
    sigma1_sq: float = 1.0
    sigma2_sq: float = 1.0
    horizon: int = 0
    snr: float = 1.0

    def __post_init__(self):
        arr = np.array(self.hat_h, dtype=complex)
        if arr.ndim < 2 or arr.shape[:2] != (2, 2):
            raise ValueError(f"channel must have leading shape (2, 2), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "hat_h", arr)
        if not self.snr >= 0:
            raise ValueError(f"snr must be >= 0, got {self.snr}")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        for s in (self.sigma1_sq, self.sigma2_sq):
            if not s >= 1.0:
                raise ValueError(f"noise variance must be >= 1, got {s}")
        if self.horizon == 0 and (self.sigma1_sq != 1.0 or self.sigma2_sq != 1.0):
            raise ValueError("a zero-horizon estimate must have unit noise variance")
        object.__setattr__(self, "sigma1_sq", float(self.sigma1_sq))
        object.__setattr__(self, "sigma2_sq", float(self.sigma2_sq))
        object.__setattr__(self, "snr", float(self.snr))

    @classmethod
    def perfect(cls, ch: ChannelMatrix) -> "EstimatedChannel":
        """Noise-free knowledge of a true channel."""
        return cls(ch.h, snr=ch.snr)

    @classmethod
    def from_gains(cls, h, snr: float = 1.0, sigma_sq=(1.0, 1.0), horizon=None):
        """Convenience constructor; ``horizon`` defaults to 0 for unit noise."""
        if horizon is None:
            horizon = 0 if tuple(sigma_sq) == (1.0, 1.0) else 1
        return cls(h, sigma_sq[0], sigma_sq[1], horizon, snr)

    def link(self, l: int, k: int):
        return self.hat_h[l - 1, k - 1]

    def sigma_sq(self, receiver: int) -> float:
        return self.sigma1_sq if receiver == 1 else self.sigma2_sq

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.hat_h.imag == 0))

    @property
    def n_antennas(self) -> int:
        return 1 if self.hat_h.ndim == 2 else self.hat_h.shape[-1]

    def block(self, l: int, k: int) -> np.ndarray:
        """Link ``(l, k)`` as an N x N matrix (1 x 1 in the scalar model)."""
        b = self.hat_h[l - 1, k - 1]
        return np.atleast_2d(b)

    def with_snr(self, snr: float) -> "EstimatedChannel":
        return EstimatedChannel(self.hat_h, self.sigma1_sq, self.sigma2_sq,
                                self.horizon, snr)

    def __eq__(self, other):
        if not isinstance(other, EstimatedChannel):
            return NotImplemented
        return (np.array_equal(self.hat_h, other.hat_h, equal_nan=True)
                and (self.sigma1_sq, self.sigma2_sq, self.horizon, self.snr)
                == (other.sigma1_sq, other.sigma2_sq, other.horizon, other.snr))

    __hash__ = None


@dataclass(frozen=True)
class FrameConfig:
    """Block structure: K symbols per block, M antennas, L pilots per block."""

    K: int = 100
    M: int = 1
    L_pilots: int = 1
    T: int = 1
    n_blocks: int = 1

    def __post_init__(self):
        if self.M * self.L_pilots < 1 or not self.K > self.M * self.L_pilots:
            raise ValueError("need K > M * L_pilots >= 1")
        if self.T < 1 or self.n_blocks < 1:
            raise ValueError("T and n_blocks must be >= 1")

    @property
    def rate_prefactor(self) -> float:
        return (self.K - self.M * self.L_pilots) / self.K


def _draw(rng: np.random.Generator, shape, variance: float, real: bool) -> np.ndarray:
    if real:
        return np.sqrt(variance) * rng.standard_normal(shape) + 0j
    z = rng.standard_normal(shape + (2,))
    return np.sqrt(variance / 2.0) * (z[..., 0] + 1j * z[..., 1])


def sample_channel(rng_seed: int, snr: float = 1.0, real_only: bool = False) -> ChannelMatrix:
    """Draw an i.i.d. unit-variance Rayleigh channel (real Gaussian if ``real_only``)."""
    if not snr >= 0:
        raise ValueError(f"snr must be >= 0, got {snr}")
    rng = np.random.default_rng(rng_seed)
    return ChannelMatrix(_draw(rng, (2, 2), 1.0, real_only), snr=snr, real_only=real_only)


def _ar_next(history: Sequence[ChannelMatrix], model: ArModel, rng) -> ChannelMatrix:
    last = history[-1]
    acc = np.zeros_like(last.h)
    for past in history[-model.order:]:
        acc = acc + past.h
    omega = _draw(rng, last.h.shape, model.innovation_variance, last.real_only)
    return ChannelMatrix(model.coefficient * acc + omega, snr=last.snr,
                         real_only=last.real_only)


def ar_step(history: Sequence[ChannelMatrix], model: ArModel,
            innovation_seed: int) -> ChannelMatrix:
    """One step of the AR recursion.

    ``history`` is ordered oldest first, so ``history[-1]`` is H(t-1).
    """
    if len(history) != model.order:
        raise ValueError(f"history length {len(history)} != AR order {model.order}")
    return _ar_next(history, model, np.random.default_rng(innovation_seed))


def ar_path(initial: Sequence[ChannelMatrix], model: ArModel, n_steps: int,
            seed) -> list[ChannelMatrix]:
    """Simulate ``n_steps`` further channel states from an initial history."""
    if len(initial) < model.order:
        raise ValueError("initial history shorter than the AR order")
    rng = np.random.default_rng(seed)
    hist = list(initial)
    out = []
    for _ in range(n_steps):
        nxt = _ar_next(hist[-model.order:], model, rng)
        hist.append(nxt)
        out.append(nxt)
    return out


def predict_block(pilot, model: ArModel, horizon: int, seed=None) -> list[EstimatedChannel]:
    """Predict the channel ``1..horizon`` steps past the last pilot.

    Parameters
    ----------
    pilot : ChannelMatrix or sequence of ChannelMatrix
        Noise-free pilot observation(s), oldest first.  A single matrix is
        repeated to fill the AR memory.
    model : ArModel
    horizon : int
        Number of steps to predict, ``>= 1``.
    seed : int, optional
        When given, the recursion is iterated with random innovations (a
        sampled continuation).  By default the innovations are replaced by
        their mean, giving the minimum mean-square error prediction.

    Returns
    -------
    list of EstimatedChannel
        Element ``j-1`` has ``horizon == j`` and per-receiver noise
        ``1 + 2 * v * sum_{m<j} psi_m**2``, the two incoming links each
        contributing their prediction-error variance.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    hist = [pilot] if isinstance(pilot, ChannelMatrix) else list(pilot)
    if not hist:
        raise ValueError("empty pilot history")
    while len(hist) < model.order:
        hist.insert(0, hist[0])
    if seed is None:
        mean_model = ArModel(model.order, model.rho, model.sign_convention, 0.0)
        rng = np.random.default_rng(0)
    else:
        mean_model = model
        rng = np.random.default_rng(seed)
    out = []
    for j in range(1, horizon + 1):
        nxt = _ar_next(hist[-model.order:], mean_model, rng)
        hist.append(nxt)
        sig = 1.0 + 2.0 * model.error_variance(j)
        out.append(EstimatedChannel(nxt.h, sig, sig, j, nxt.snr))
    return out


TRACE_COLUMNS = ("block", "k", "l", "re", "im")


def write_channel_trace(path, channels: Sequence) -> None:
    """Write scalar channels to CSV.

    Column ``k`` is the first gain subscript (receiving base station) and
    ``l`` the second (transmitting terminal), i.e. the row and column of
    the stored array.
    """
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for b, ch in enumerate(channels):
            h = ch.h if isinstance(ch, ChannelMatrix) else ch.hat_h
            for r in range(2):
                for c in range(2):
                    w.writerow([b, r + 1, c + 1, repr(float(h[r, c].real)),
                                repr(float(h[r, c].imag))])


def read_channel_trace(path, snr: float = 1.0) -> list[ChannelMatrix]:
    """Read a CSV written by :func:`write_channel_trace`."""
    blocks: dict[int, np.ndarray] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"{path}: expected header {TRACE_COLUMNS}")
        for row in reader:
            b = int(row["block"])
            h = blocks.setdefault(b, np.zeros((2, 2), dtype=complex))
            h[int(row["k"]) - 1, int(row["l"]) - 1] = complex(float(row["re"]), float(row["im"]))
    out = []
    for b in sorted(blocks):
        h = blocks[b]
        out.append(ChannelMatrix(h, snr=snr, real_only=bool(np.all(h.imag == 0))))
    return out
