"""Input laws (Gaussian, BPSK, finite constellations) and power profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_KINDS = ("gaussian", "bpsk", "discrete")


@dataclass(frozen=True, eq=False)
class InputSpec:
    """Law of one user's unit-power input symbol.

    Use the constructors :meth:`gaussian`, :meth:`bpsk` and
    :meth:`discrete` rather than building the dataclass directly.

    Attributes
    ----------
    kind : {"gaussian", "bpsk", "discrete"}
    points, probs : ndarray or None
        Constellation and point masses for non-Gaussian inputs.
    axes : tuple or None
        ``(re_points, re_probs, im_points, im_probs)`` when the
        constellation is a product of independent in-phase and quadrature
        laws.  Used to split real-channel computations per axis.
    """

    kind: str
    points: np.ndarray | None = None
    probs: np.ndarray | None = None
    axes: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown input kind {self.kind!r}")
        if self.kind == "gaussian":
            return
        pts = np.asarray(self.points, dtype=complex).ravel()
        pr = np.asarray(self.probs, dtype=float).ravel()
        if pts.size == 0 or pts.shape != pr.shape:
            raise ValueError("points and probs must be non-empty and of equal length")
        if np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be non-negative and sum to 1")
        mean = np.sum(pr * pts)
        power = np.sum(pr * np.abs(pts) ** 2)
        if abs(mean) > 1e-9 or abs(power - 1.0) > 1e-9:
            raise ValueError(f"constellation must be zero-mean, unit-power "
                             f"(mean={mean:.3g}, power={power:.12g})")
        pts.setflags(write=False)
        pr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", pr)

    @classmethod
    def gaussian(cls) -> "InputSpec":
        return cls("gaussian")

    @classmethod
    def bpsk(cls) -> "InputSpec":
        pts = np.array([1.0, -1.0])
        pr = np.array([0.5, 0.5])
        return cls("bpsk", pts, pr, axes=(pts.real, pr, np.zeros(1), np.ones(1)))

    @classmethod
    def discrete(cls, points, probs=None, normalize: bool = False) -> "InputSpec":
        """Finite constellation; ``normalize`` rescales to zero mean, unit power."""
        pts = np.asarray(points, dtype=complex).ravel()
        pr = (np.full(pts.size, 1.0 / pts.size) if probs is None
              else np.asarray(probs, dtype=float).ravel())
        if normalize:
            pr = pr / pr.sum()
            pts = pts - np.sum(pr * pts)
            pts = pts / np.sqrt(np.sum(pr * np.abs(pts) ** 2))
        return cls("discrete", pts, pr)

    @property
    def is_gaussian(self) -> bool:
        return self.kind == "gaussian"

    @property
    def size(self) -> int:
        return 0 if self.points is None else self.points.size

    def __eq__(self, other):
        if not isinstance(other, InputSpec):
            return NotImplemented
        if self.kind != other.kind:
            return False
        if self.is_gaussian:
            return True
        return (np.array_equal(self.points, other.points)
                and np.array_equal(self.probs, other.probs))

    __hash__ = None

    def __repr__(self):
        if self.is_gaussian:
            return "InputSpec('gaussian')"
        return f"InputSpec({self.kind!r}, {self.size} points)"


def product_constellation(re_points, re_probs, im_points, im_probs) -> InputSpec:
    """Constellation with independent in-phase and quadrature components."""
    re_points = np.asarray(re_points, float)
    im_points = np.asarray(im_points, float)
    re_probs = np.asarray(re_probs, float)
    im_probs = np.asarray(im_probs, float)
    pts = (re_points[:, None] + 1j * im_points[None, :]).ravel()
    pr = (re_probs[:, None] * im_probs[None, :]).ravel()
    return InputSpec("discrete", pts, pr, axes=(re_points, re_probs, im_points, im_probs))


def gaussian_quadrature_input(n_points: int = 16) -> InputSpec:
    """Discrete approximation of a unit-power circular Gaussian input.

    ``n_points`` must be a perfect square ``m*m``; each real axis carries
    the m-point Gauss-Hermite rule for a N(0, 1/2) variable.
    """
    m = math.isqrt(n_points)
    if m * m != n_points or m < 1:
        raise ValueError("n_points must be a perfect square")
    t, w = np.polynomial.hermite.hermgauss(m)
    w = w / w.sum()
    return product_constellation(t, w, t, w)


def pam(m: int) -> InputSpec:
    """Real, equiprobable m-PAM with unit power."""
    pts = np.arange(m) * 2.0 - (m - 1)
    pts = pts / np.sqrt(np.mean(pts ** 2))
    pr = np.full(m, 1.0 / m)
    return product_constellation(pts, pr, np.zeros(1), np.ones(1))


def qam(m: int) -> InputSpec:
    """Square m-QAM with unit power."""
    r = math.isqrt(m)
    if r * r != m:
        raise ValueError("m must be a perfect square")
    ax = np.arange(r) * 2.0 - (r - 1)
    ax = ax / np.sqrt(2.0 * np.mean(ax ** 2))
    pr = np.full(r, 1.0 / r)
    return product_constellation(ax, pr, ax, pr)


def load_constellation(path) -> InputSpec:
    """Read ``re, im, prob`` rows (whitespace or comma separated, '#' comments)."""
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 're im prob', got {line!r}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no constellation points")
    arr = np.array(rows)
    try:
        return InputSpec.discrete(arr[:, 0] + 1j * arr[:, 1], arr[:, 2])
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def save_constellation(spec: InputSpec, path) -> None:
    with open(path, "w") as f:
        f.write("# re im prob\n")
        for p, q in zip(spec.points, spec.probs):
            f.write(f"{float(p.real)!r} {float(p.imag)!r} {float(q)!r}\n")


def input_from_name(name: str) -> InputSpec:
    """Resolve ``gaussian``, ``bpsk``, ``qpsk``, ``<m>pam``, ``<m>qam`` or ``gh<n>``."""
    key = name.strip().lower()
    if key == "gaussian":
        return InputSpec.gaussian()
    if key == "bpsk":
        return InputSpec.bpsk()
    if key == "qpsk":
        return qam(4)
    if key.endswith("pam") and key[:-3].isdigit():
        return pam(int(key[:-3]))
    if key.endswith("qam") and key[:-3].isdigit():
        return qam(int(key[:-3]))
    if key.startswith("gh") and key[2:].isdigit():
        return gaussian_quadrature_input(int(key[2:]))
    raise ValueError(f"unknown input name {name!r}")


@dataclass(frozen=True)
class PowerProfile:
    """Transmit powers of the two terminals with their average budgets."""

    p1: float
    p2: float
    q1: float = math.inf
    q2: float = math.inf

    def __post_init__(self):
        for name in ("p1", "p2"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, float(v))
        for name in ("q1", "q2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def powers(self) -> tuple[float, float]:
        return (self.p1, self.p2)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.sqrt(np.array([self.p1, self.p2]))

    def power(self, k: int) -> float:
        return self.p1 if k == 1 else self.p2

    def with_powers(self, p1, p2) -> "PowerProfile":
        return PowerProfile(p1, p2, self.q1, self.q2)
