"""Power allocation, precoding and design selection for the two MAC problems.

MAC ``l`` is the multiple-access channel seen by base station ``l``: both
terminals transmit and the objective is ``I(x1, x2; y_l)``.  Multipliers
``lambda_k`` price power in the same units as ``P_k`` (nats per unit power).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import optimize as sopt

from .channel import EstimatedChannel
from .estimation import _law, mmse_matrix, receiver_analysis
from .information import RateValue, gradient_scale, mi_sum
from .inputs import InputSpec, PowerProfile
from .quadrature import DEFAULT_ENGINE, IntegrationEngine, analyze_mixture


@dataclass(frozen=True)
class Multipliers:
    """Dual variables: power prices ``lambda``, non-negativity duals ``mu``,
    precoder prices ``nu`` (None falls back to the matching ``lambda``)."""

    lambda1: float
    lambda2: float
    mu1: float = 0.0
    mu2: float = 0.0
    nu1: float | None = None
    nu2: float | None = None

    def __post_init__(self):
        if not (self.lambda1 >= 0 and self.lambda2 >= 0 and self.mu1 >= 0 and self.mu2 >= 0):
            raise ValueError("multipliers lambda and mu must be >= 0")
        for nu in (self.nu1, self.nu2):
            if nu is not None and not nu > 0:
                raise ValueError("precoder multipliers nu must be > 0")

    def lam(self, k: int) -> float:
        return self.lambda1 if k == 1 else self.lambda2

    def nu(self, k: int) -> float:
        v = self.nu1 if k == 1 else self.nu2
        return self.lam(k) if v is None else v


@dataclass(frozen=True)
class IterationSchedule:
    """Damping ``alpha`` (constant, or ``1/(k+1)`` when ``decaying``), limits."""

    alpha: float = 0.5
    max_iter: int = 500
    tol: float = 1e-6
    decaying: bool = False

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.max_iter < 1 or not self.tol > 0:
            raise ValueError("max_iter must be >= 1 and tol > 0")

    def step(self, k: int) -> float:
        return min(self.alpha, 1.0 / (k + 1)) if self.decaying else self.alpha


def _gains(ch: EstimatedChannel, mac: int) -> tuple[np.ndarray, float]:
    if mac not in (1, 2):
        raise ValueError("mac must be 1 or 2")
    g = ch.snr * np.abs(np.array([ch.link(mac, 1), ch.link(mac, 2)])) ** 2
    return g, ch.sigma_sq(mac)


def _budgets(budgets):
    if budgets is None:
        return (math.inf, math.inf)
    q = tuple(float(b) for b in budgets)
    if any(not b > 0 for b in q):
        raise ValueError("budgets must be > 0")
    return q


# ---------------------------------------------------------------- Gaussian inputs

def _gauss_lagrangian(P, g, sig, lam):
    return np.log1p((g[0] * P[..., 0] + g[1] * P[..., 1]) / sig) - lam[0] * P[..., 0] - lam[1] * P[..., 1]


def _grid_maximizer(g, sig, lam, caps):
    hi = [min(c, 1.0 / l) if l > 0 else c for c, l in zip(caps, lam)]
    hi = [h if math.isfinite(h) else 1e3 for h in hi]
    x = np.linspace(0, hi[0], 201)
    y = np.linspace(0, hi[1], 201)
    X, Y = np.meshgrid(x, y, indexing="ij")
    L = _gauss_lagrangian(np.stack([X, Y], axis=-1), g, sig, lam)
    i, j = np.unravel_index(np.argmax(L), L.shape)
    res = sopt.minimize(lambda p: -_gauss_lagrangian(np.asarray(p), g, sig, lam),
                        [x[i], y[j]], method="L-BFGS-B",
                        bounds=[(0, hi[0]), (0, hi[1])], options={"ftol": 1e-15, "gtol": 1e-12})
    return np.clip(res.x, 0, hi)


def gaussian_power(ch: EstimatedChannel, mult: Multipliers, mac: int = 1, budgets=None,
                   max_sweeps: int = 10_000) -> PowerProfile:
    """Power pair maximizing ``log(1 + (g1 P1 + g2 P2)/sigma^2) - lambda . P``.

    Each user's best response is the waterfilling branch
    ``P_k = 1/lambda_k - (g_j P_j + sigma^2)/g_k`` projected onto
    ``[0, Q_k]``.  Best responses are alternated from zero power until they
    stop changing; if that does not settle within ``max_sweeps`` the
    maximizer is found by grid search with a local polish.  At the optimum
    only the user with the larger ``g_k/lambda_k`` transmits (both can when
    the ratios tie, in which case any split of the face is optimal).
    """
    if not (mult.lambda1 > 0 and mult.lambda2 > 0):
        raise ValueError("gaussian_power needs lambda1, lambda2 > 0")
    g, sig = _gains(ch, mac)
    lam = (mult.lambda1, mult.lambda2)
    caps = _budgets(budgets)
    P = np.zeros(2)
    for _ in range(max_sweeps):
        prev = P.copy()
        for k in (0, 1):
            j = 1 - k
            if g[k] > 0:
                P[k] = min(caps[k], max(0.0, 1.0 / lam[k] - (g[j] * P[j] + sig) / g[k]))
            else:
                P[k] = 0.0
        if np.max(np.abs(P - prev)) <= 1e-14 * max(1.0, P.max()):
            break
    else:
        P = _grid_maximizer(g, sig, lam, caps)
    return PowerProfile(P[0], P[1], *(_default_q(caps)))


def _default_q(caps):
    return tuple(c if math.isfinite(c) else math.inf for c in caps)


def gaussian_power_derivative(ch: EstimatedChannel, powers: PowerProfile, mac: int) -> np.ndarray:
    """``dI/dP_k`` in nats for Gaussian inputs at MAC ``mac``."""
    g, sig = _gains(ch, mac)
    return g / (sig + g[0] * powers.p1 + g[1] * powers.p2)


# ---------------------------------------------------------------- multiplier tuning

@dataclass
class TuningResult:
    """Outcome of :func:`tune_multipliers`.

    ``powers`` holds the per-channel allocation consistent with the
    multipliers; on a tie channel the power split is part of the solution
    and cannot be recovered from the multipliers alone.
    """

    multipliers: Multipliers
    powers: list[PowerProfile]
    average: tuple[float, float]
    feasible: tuple[bool, bool]
    iterations: int
    method: str


def _waterfill_level(g, sig, target_total, tol=1e-13):
    """lambda with ``sum_n (1/lambda - sig_n/g_n)^+ = target_total`` (bisection)."""
    if len(g) == 0 or target_total <= 0:
        return math.inf
    base = sig / g
    lo_level, hi_level = 0.0, base.max() + target_total + 1.0
    for _ in range(200):
        mid = 0.5 * (lo_level + hi_level)
        tot = np.sum(np.maximum(0.0, mid - base))
        if tot > target_total:
            hi_level = mid
        else:
            lo_level = mid
        if hi_level - lo_level <= tol * max(1.0, hi_level):
            break
    return 1.0 / (0.5 * (lo_level + hi_level))


_LAMBDA_EDGE = 1e-12


def _alloc(g, sig, lam):
    if not math.isfinite(lam):
        return np.zeros_like(g)
    with np.errstate(divide="ignore"):
        return np.maximum(0.0, 1.0 / lam - sig / g)


def _tune_gaussian(ensemble, q, mac):
    n = len(ensemble)
    G = np.array([_gains(ch, mac)[0] for ch in ensemble])
    sig = np.array([_gains(ch, mac)[1] for ch in ensemble])
    feasible = tuple(bool(np.any(G[:, k] > 0)) for k in (0, 1))
    # user 1 gets channel n when g1/lambda1 > g2/lambda2, i.e. rho_n > r = lambda1/lambda2
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(G[:, 1] > 0, G[:, 0] / G[:, 1], np.inf)
    rho = np.where((G[:, 0] == 0) & (G[:, 1] == 0), np.nan, rho)
    valid = ~np.isnan(rho)
    order = np.argsort(np.where(valid, rho, -np.inf))
    order = order[valid[order]]
    rs = rho[order]

    def levels(set1, set2):
        s1 = set1[G[set1, 0] > 0]
        s2 = set2[G[set2, 1] > 0]
        l1 = _waterfill_level(G[s1, 0], sig[s1], n * q[0])
        l2 = _waterfill_level(G[s2, 1], sig[s2], n * q[1])
        return l1, l2

    def finish(l1, l2, P, method, iters):
        prof = [PowerProfile(P[i, 0], P[i, 1], q[0], q[1]) for i in range(n)]
        avg = (float(np.mean(P[:, 0])), float(np.mean(P[:, 1])))
        lam1 = l1 if math.isfinite(l1) else 0.0
        lam2 = l2 if math.isfinite(l2) else 0.0
        return TuningResult(Multipliers(float(lam1), float(lam2)), prof, avg, feasible, iters, method)

    if not all(feasible):
        # a user with no usable channel: its price sits at the bracket edge
        P = np.zeros((n, 2))
        lam = [_LAMBDA_EDGE, _LAMBDA_EDGE]
        for k in (0, 1):
            if feasible[k]:
                idx = np.flatnonzero(G[:, k] > 0)
                lam[k] = _waterfill_level(G[idx, k], sig[idx], n * q[k])
                P[idx, k] = _alloc(G[idx, k], sig[idx], lam[k])
        if all(not f for f in feasible):
            return finish(lam[0], lam[1], P, "infeasible", 0)
        return finish(lam[0], lam[1], P, "infeasible-slack", 1)

    iters = 0
    m = len(order)
    # intervals between breakpoints: index c = number of channels assigned to user 2
    for c in range(m + 1):
        iters += 1
        set2, set1 = order[:c], order[c:]
        l1, l2 = levels(set1, set2)
        r = l1 / l2 if math.isfinite(l1) and math.isfinite(l2) and l2 > 0 else (
            math.inf if not math.isfinite(l1) else 0.0)
        lo = rs[c - 1] if c > 0 else -math.inf
        hi = rs[c] if c < m else math.inf
        if lo <= r <= hi and math.isfinite(l1) and math.isfinite(l2):
            P = np.zeros((n, 2))
            P[set1, 0] = _alloc(G[set1, 0], sig[set1], l1)
            P[set2, 1] = _alloc(G[set2, 1], sig[set2], l2)
            return finish(l1, l2, P, "exact-interval", iters)
    # tie: breakpoint channel t shared, lambda1 = rho_t * lambda2
    for c in range(m):
        iters += 1
        t = order[c]
        set2, set1 = order[:c], order[c + 1:]
        rt = rs[c]

        def excess(l2):
            l1 = rt * l2
            d1 = n * q[0] - np.sum(_alloc(G[set1, 0], sig[set1], l1))
            d2 = n * q[1] - np.sum(_alloc(G[set2, 1], sig[set2], l2))
            face = G[t, 0] / l1 - sig[t]
            return G[t, 0] * d1 + G[t, 1] * d2 - face, d1, d2

        lo, hi = _LAMBDA_EDGE, 1e12
        for _ in range(400):
            mid = math.sqrt(lo * hi)
            if excess(mid)[0] < 0:
                lo = mid
            else:
                hi = mid
            if hi / lo - 1 < 1e-15:
                break
        l2 = math.sqrt(lo * hi)
        val, d1, d2 = excess(l2)
        if d1 >= -1e-9 and d2 >= -1e-9 and abs(val) <= 1e-6 * max(1.0, abs(G[t, 0] / (rt * l2))):
            P = np.zeros((n, 2))
            P[set1, 0] = _alloc(G[set1, 0], sig[set1], rt * l2)
            P[set2, 1] = _alloc(G[set2, 1], sig[set2], l2)
            P[t] = [max(d1, 0.0), max(d2, 0.0)]
            return finish(rt * l2, l2, P, "exact-tie", iters)
    raise RuntimeError("multiplier search failed to bracket a solution")


def _bisect_lambda(avg_fn, target, tol, max_iter=200):
    lo, hi = 1e-12, 1e12
    for it in range(max_iter):
        mid = math.sqrt(lo * hi)
        if avg_fn(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1 < 1e-13:
            break
    return math.sqrt(lo * hi)


def tune_multipliers(ensemble: Sequence[EstimatedChannel], q1: float, q2: float,
                     solver: IterationSchedule = IterationSchedule(), mac: int = 1,
                     allocator: Callable | None = None) -> TuningResult:
    """Multipliers meeting the ensemble-average budgets ``Q1, Q2``.

    Without ``allocator`` the Gaussian-input allocation is tuned exactly:
    the channels are ordered by ``g1/g2``, each candidate split gives each
    user a waterfilling level found by bisection, and the consistent split
    (or the tie channel whose power is shared) is selected.  With an
    ``allocator(ch, multipliers) -> PowerProfile`` each ``lambda_k`` is
    bisected in turn with the other held fixed, until both averages are
    within ``solver.tol`` of the budgets or ``solver.max_iter`` rounds.
    """
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    if not (q1 > 0 and q2 > 0):
        raise ValueError("budgets must be > 0")
    q = (float(q1), float(q2))
    if allocator is None:
        return _tune_gaussian(list(ensemble), q, mac)

    lam = [1.0, 1.0]

    def average(l1, l2):
        m = Multipliers(l1, l2)
        ps = [allocator(ch, m) for ch in ensemble]
        return ps, (float(np.mean([p.p1 for p in ps])), float(np.mean([p.p2 for p in ps])))

    ps, avg = average(*lam)
    it = 0
    for it in range(1, solver.max_iter + 1):
        lam[0] = _bisect_lambda(lambda l: average(l, lam[1])[1][0], q[0], solver.tol)
        lam[1] = _bisect_lambda(lambda l: average(lam[0], l)[1][1], q[1], solver.tol)
        ps, avg = average(*lam)
        if max(abs(avg[0] - q[0]), abs(avg[1] - q[1])) <= solver.tol:
            break
    feasible = tuple(avg[k] >= q[k] - solver.tol for k in (0, 1))
    return TuningResult(Multipliers(*lam), ps, avg, feasible, it, "alternating-bisection")


# ---------------------------------------------------------------- fixed points

@dataclass
class PowerSolution:
    """Fixed-point power allocation with convergence diagnostics."""

    powers: PowerProfile
    iterations: int
    residual: float
    converged: bool
    multipliers: Multipliers
    mac: int
    warning: str | None = None


def _mac_gradient(ch, powers, inputs, mac, engine):
    """Normalized amplitude gradient ``G`` of the MAC objective."""
    a = powers.amplitudes
    if all(s.is_gaussian for s in inputs):
        # Wiener error matrix in closed form
        g, sig = _gains(ch, mac)
        S = sig + g[0] * powers.p1 + g[1] * powers.p2
        return a * np.abs(np.array([ch.link(mac, 1), ch.link(mac, 2)])) ** 2 * sig / S, None
    E = mmse_matrix(ch, powers, inputs, engine, receiver=mac)
    h = np.array([ch.link(mac, 1), ch.link(mac, 2)])
    M = E.matrix
    G = np.array([np.real(abs(h[k]) ** 2 * a[k] * M[k, k]
                          + np.conj(h[k]) * h[1 - k] * a[1 - k] * M[1 - k, k]) for k in (0, 1)])
    return G, E.warning


def fixed_point_power(ch: EstimatedChannel, inputs, mult: Multipliers, mac: int = 1,
                      schedule: IterationSchedule = IterationSchedule(),
                      engine: IntegrationEngine = DEFAULT_ENGINE, budgets=None,
                      fixed: dict | None = None, init=None) -> PowerSolution:
    """Damped fixed-point iteration on the amplitudes ``a_k = sqrt(P_k)``.

    ``a_k <- (1 - alpha) a_k + alpha * snr / (sigma_l^2 lambda_k) * G_k``
    where ``G_k = Re(|h_lk|^2 a_k E_kk + conj(h_lk) h_lj a_j E_jk)`` uses the
    error matrix at receiver ``l = mac`` recomputed every sweep.  Amplitudes
    are projected onto ``[0, sqrt(Q_k)]`` when ``budgets`` are given.
    ``fixed`` maps a user index to a power held constant.

    The residual is ``max_k |a_k - proj(T(a))_k|``.  Hitting ``max_iter``
    returns a non-converged solution rather than raising.
    """
    inputs = list(inputs)
    caps = _budgets(budgets)
    fixed = dict(fixed or {})
    lam = np.array([mult.lambda1, mult.lambda2])
    if np.any(lam <= 0):
        raise ValueError("fixed_point_power needs lambda1, lambda2 > 0")
    if init is None:
        a = np.sqrt(np.minimum(caps, 1.0 / lam))
    else:
        a = np.sqrt(np.asarray(init, float))
    for k, p in fixed.items():
        a[k - 1] = math.sqrt(p)
    upper = np.sqrt(np.array(caps))
    coef = ch.snr / (ch.sigma_sq(mac) * lam)
    free = np.array([k not in fixed for k in (1, 2)])
    residual = math.inf
    note = None
    it = 0
    q = _default_q(caps)
    for it in range(1, schedule.max_iter + 1):
        G, note = _mac_gradient(ch, PowerProfile(*(a ** 2)), inputs, mac, engine)
        target = np.clip(coef * G, 0.0, upper)
        residual = float(np.max(np.abs(np.where(free, a - target, 0.0))))
        if residual <= schedule.tol:
            break
        alpha = schedule.step(it - 1)
        a = np.where(free, np.clip((1 - alpha) * a + alpha * coef * G, 0.0, upper), a)
    converged = residual <= schedule.tol
    return PowerSolution(PowerProfile(a[0] ** 2, a[1] ** 2, *q), it, residual, converged,
                         mult, mac, note)


@dataclass(frozen=True, eq=False)
class PrecoderPair:
    """Per-user transmit matrices; ``init_from`` records the SVD used to start."""

    mat1: np.ndarray
    mat2: np.ndarray
    init_from: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("mat1", "mat2"):
            m = np.atleast_2d(np.asarray(getattr(self, name), complex))
            if not np.all(np.isfinite(m)):
                raise ValueError("precoder entries must be finite")
            object.__setattr__(self, name, m)

    def power(self, k: int) -> float:
        m = self.mat1 if k == 1 else self.mat2
        return float(np.real(np.trace(m @ m.conj().T)))

    def __eq__(self, other):
        if not isinstance(other, PrecoderPair):
            return NotImplemented
        return np.array_equal(self.mat1, other.mat1) and np.array_equal(self.mat2, other.mat2)

    __hash__ = None


def svd_init(block: np.ndarray, budget: float) -> tuple[np.ndarray, dict]:
    """Start precoder ``V sqrt(Q/N)`` from the SVD ``H = U Lambda V^H`` of a link."""
    H = np.atleast_2d(np.asarray(block, complex))
    U, s, Vh = np.linalg.svd(H)
    n = H.shape[1]
    V = Vh.conj().T
    return V * math.sqrt(budget / n), {"U": U, "Lambda": s, "V": V}


@dataclass
class PrecoderSolution:
    """Fixed-point precoders with diagnostics; ``nu`` is the effective price per user."""

    precoders: PrecoderPair
    iterations: int
    residual: float
    converged: bool
    nu: tuple[float, float]
    mac: int
    warning: str | None = None


_NORMALIZATIONS = ("project", "budget")


def _normalize(P, q, mode):
    pw = float(np.real(np.trace(P @ P.conj().T)))
    if mode == "budget":
        return P * math.sqrt(q / pw) if pw > 0 else P
    if pw > q:
        return P * math.sqrt(q / pw)
    return P


def _precoder_gradient(ch, mats, inputs, mac, engine):
    """``G_k = H_lk^H sum_j H_lj P_j E_jk`` with block error covariances at receiver ``l``."""
    n = ch.n_antennas
    r = receiver_analysis(ch, list(mats), inputs, mac, engine)
    E = r.error
    blocks = [ch.block(mac, k) for k in (1, 2)]
    out = []
    for k in (0, 1):
        acc = np.zeros((n, n), complex)
        for j in (0, 1):
            acc += blocks[j] @ mats[j] @ E[j * n:(j + 1) * n, k * n:(k + 1) * n]
        out.append(blocks[k].conj().T @ acc)
    return out, r.warning


def fixed_point_precoder(ch: EstimatedChannel, inputs, mult: Multipliers, mac: int = 1,
                         init: PrecoderPair | None = None,
                         schedule: IterationSchedule = IterationSchedule(),
                         engine: IntegrationEngine = DEFAULT_ENGINE, budgets=(1.0, 1.0),
                         normalization: str = "project") -> PrecoderSolution:
    """Damped fixed point ``P_k <- (1-alpha) P_k + alpha snr/(sigma^2 nu_k) G_k``.

    After each sweep a precoder whose power exceeds ``Q_k`` is scaled back
    (``normalization="project"``), or every precoder is scaled to exactly
    ``Q_k`` (``"budget"``, the effective price is then reported in ``nu``).
    The default start is ``V sqrt(Q_k / N)`` from the SVD of the direct link.
    """
    if normalization not in _NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {_NORMALIZATIONS}")
    q = _budgets(budgets)
    if init is None:
        m1, f1 = svd_init(ch.block(mac, 1), q[0])
        m2, f2 = svd_init(ch.block(mac, 2), q[1])
        init = PrecoderPair(m1, m2, {"user1": f1, "user2": f2})
    mats = [init.mat1.copy(), init.mat2.copy()]
    nu = np.array([mult.nu(1), mult.nu(2)])
    coef = ch.snr / (ch.sigma_sq(mac) * nu)
    residual, note, it = math.inf, None, 0
    for it in range(1, schedule.max_iter + 1):
        G, note = _precoder_gradient(ch, mats, inputs, mac, engine)
        target = [_normalize(coef[k] * G[k], q[k], normalization) for k in (0, 1)]
        residual = max(float(np.max(np.abs(mats[k] - target[k]))) for k in (0, 1))
        if residual <= schedule.tol:
            break
        alpha = schedule.step(it - 1)
        mats = [_normalize((1 - alpha) * mats[k] + alpha * coef[k] * G[k], q[k], normalization)
                for k in (0, 1)]
    G, _ = _precoder_gradient(ch, mats, inputs, mac, engine)
    eff = []
    for k in (0, 1):
        pw = float(np.real(np.trace(mats[k] @ mats[k].conj().T)))
        num = float(np.real(np.trace(G[k] @ mats[k].conj().T)))
        eff.append(ch.snr / ch.sigma_sq(mac) * num / pw if pw > 0 else float(nu[k]))
    pair = PrecoderPair(mats[0], mats[1], init.init_from)
    return PrecoderSolution(pair, it, residual, residual <= schedule.tol, tuple(eff), mac, note)


def mimo_precoder(h, inputs: InputSpec, nu: float, budget: float = 1.0,
                  schedule: IterationSchedule = IterationSchedule(),
                  engine: IntegrationEngine = DEFAULT_ENGINE, snr: float = 1.0,
                  sigma_sq: float = 1.0, normalization: str = "project"):
    """Single-link fixed point ``P <- (1-alpha) P + alpha snr/(sigma^2 nu) H^H H P E``.

    Returns ``(P, iterations, residual, converged)``.
    """
    if normalization not in _NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {_NORMALIZATIONS}")
    if not nu > 0:
        raise ValueError("nu must be > 0")
    H = np.atleast_2d(np.asarray(h, complex))
    P, _ = svd_init(H, budget)
    law = _law(inputs)
    coef = snr / (sigma_sq * nu)
    residual, it = math.inf, 0
    for it in range(1, schedule.max_iter + 1):
        E = analyze_mixture([math.sqrt(snr) * H @ P], [law], sigma_sq, engine).error
        G = H.conj().T @ H @ P @ E
        target = _normalize(coef * G, budget, normalization)
        residual = float(np.max(np.abs(P - target)))
        if residual <= schedule.tol:
            break
        alpha = schedule.step(it - 1)
        P = _normalize((1 - alpha) * P + alpha * coef * G, budget, normalization)
    return P, it, residual, residual <= schedule.tol


# ---------------------------------------------------------------- certificates

@dataclass
class KktReport:
    """First-order optimality residuals (all in nats per unit power)."""

    stationarity: float
    feasibility: float
    slackness: float
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.stationarity, self.feasibility, self.slackness) <= self.tol


def power_derivative(ch, powers: PowerProfile, inputs, mac, engine=DEFAULT_ENGINE,
                     fd_step: float = 1e-7) -> np.ndarray:
    """``dI(x1, x2; y_mac)/dP_k`` in nats.

    Active users use the error-matrix gradient; a user at zero power uses a
    forward difference, where the amplitude form is singular.
    """
    if all(s.is_gaussian for s in inputs):
        return gaussian_power_derivative(ch, powers, mac)
    G, _ = _mac_gradient(ch, powers, inputs, mac, engine)
    scale = gradient_scale(ch, mac)
    out = np.zeros(2)
    for k in (0, 1):
        p = powers.power(k + 1)
        if p > fd_step:
            out[k] = scale * G[k] / (2.0 * math.sqrt(p))
        else:
            up = [powers.p1, powers.p2]
            up[k] += fd_step
            f1 = mi_sum(ch, PowerProfile(*up), inputs, engine, mac, "nats").value
            f0 = mi_sum(ch, powers, inputs, engine, mac, "nats").value
            out[k] = (f1 - f0) / fd_step
    return out


def kkt_certificate(ch, powers: PowerProfile, inputs, mult: Multipliers, mac: int,
                    engine=DEFAULT_ENGINE, budgets=None, tol: float = 1e-6,
                    active_tol: float = 1e-6) -> KktReport:
    """KKT residuals of one realization with prices ``lambda`` and optional caps.

    Users with ``P_k <= active_tol`` are inactive: their non-negativity dual
    ``mu_k = max(0, lambda_k - dI/dP_k)`` must absorb the gap.  Users at a
    cap need ``dI/dP_k >= lambda_k``.
    """
    caps = _budgets(budgets)
    d = power_derivative(ch, powers, inputs, mac, engine)
    lam = np.array([mult.lambda1, mult.lambda2])
    stat, slack = 0.0, 0.0
    for k in (0, 1):
        p = powers.power(k + 1)
        if p <= active_tol:
            stat = max(stat, d[k] - lam[k])
            slack = max(slack, max(0.0, lam[k] - d[k]) * p)
        elif p >= caps[k] - active_tol:
            stat = max(stat, lam[k] - d[k])
        else:
            stat = max(stat, abs(d[k] - lam[k]))
    feas = max(0.0, -powers.p1, -powers.p2, powers.p1 - caps[0], powers.p2 - caps[1])
    return KktReport(max(stat, 0.0), feas, slack, tol)


def ensemble_kkt(ensemble, result: TuningResult, q1: float, q2: float, mac: int = 1,
                 tol: float = 1e-6, active_tol: float = 1e-6) -> KktReport:
    """KKT residuals of a tuned Gaussian allocation over a channel ensemble."""
    lam = np.array([result.multipliers.lambda1, result.multipliers.lambda2])
    stat, slack = 0.0, 0.0
    for ch, p in zip(ensemble, result.powers):
        d = gaussian_power_derivative(ch, p, mac)
        for k in (0, 1):
            pk = p.power(k + 1)
            if pk <= active_tol:
                stat = max(stat, d[k] - lam[k])
            else:
                stat = max(stat, abs(d[k] - lam[k]))
    avg = result.average
    feas = max(0.0, avg[0] - q1, avg[1] - q2,
               -min(min(p.p1, p.p2) for p in result.powers))
    slack = max(slack, abs(lam[0] * (q1 - avg[0])), abs(lam[1] * (q2 - avg[1])))
    return KktReport(stat, feas, slack, tol)


# ---------------------------------------------------------------- selection

@dataclass(frozen=True, eq=False)
class DesignOutcome:
    """A solved MAC candidate, or the selected design after :func:`select_design`.

    ``rate`` is the maximized rate of ``selected_mac``; ``rates`` maps every
    MAC considered to its maximized rate.  ``selected_mac`` is None for the
    non-cooperative fallback.
    """

    selected_mac: int | None
    design: object
    rate: RateValue
    rates: tuple = ()
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    multipliers: Multipliers | None = None
    cooperative: bool = True
    warnings: tuple = ()

    def __eq__(self, other):
        if not isinstance(other, DesignOutcome):
            return NotImplemented
        return (self.selected_mac == other.selected_mac and self.design == other.design
                and self.rate == other.rate and self.rates == other.rates
                and self.iterations == other.iterations and self.residual == other.residual
                and self.converged == other.converged and self.multipliers == other.multipliers
                and self.cooperative == other.cooperative and self.warnings == other.warnings)

    __hash__ = None

    def rate_of(self, mac: int) -> RateValue | None:
        return dict(self.rates).get(mac)


def select_design(outcome_mac1: DesignOutcome, outcome_mac2: DesignOutcome) -> DesignOutcome:
    """Keep the candidate whose maximized rate is the smaller (min-max rule).

    Equal rates go to the MAC-1 candidate (the first argument when both
    carry the same index).
    """
    a, b = outcome_mac1, outcome_mac2
    ra, rb = a.rate.bits, b.rate.bits
    if ra < rb:
        win = a
    elif rb < ra:
        win = b
    else:
        win = b if (b.selected_mac == 1 and a.selected_mac != 1) else a
    rates = tuple(sorted({a.selected_mac: a.rate, b.selected_mac: b.rate}.items()))
    return replace(win, rates=rates)


def solve_mac(ch: EstimatedChannel, inputs, mult: Multipliers, mac: int,
              budgets=None, schedule: IterationSchedule = IterationSchedule(),
              engine: IntegrationEngine = DEFAULT_ENGINE, method: str = "fixed-point",
              unit: str = "bits") -> DesignOutcome:
    """Solve one MAC problem and wrap it as a selection candidate.

    ``method`` is ``"fixed-point"``, ``"closed-form"`` (Gaussian inputs) or
    ``"full"`` (transmit at the budgets).
    """
    inputs = list(inputs)
    if method == "closed-form":
        p = gaussian_power(ch, mult, mac, budgets)
        it, res, conv, note = 0, 0.0, True, None
    elif method == "full":
        q = _budgets(budgets)
        if not all(math.isfinite(x) for x in q):
            raise ValueError("method 'full' needs finite budgets")
        p = PowerProfile(q[0], q[1], q[0], q[1])
        it, res, conv, note = 0, 0.0, True, None
    elif method == "fixed-point":
        sol = fixed_point_power(ch, inputs, mult, mac, schedule, engine, budgets)
        p, it, res, conv, note = sol.powers, sol.iterations, sol.residual, sol.converged, sol.warning
    else:
        raise ValueError(f"unknown method {method!r}")
    rate = mi_sum(ch, p, inputs, engine, mac, unit)
    warns = tuple(w for w in (note, rate.warning) if w)
    return DesignOutcome(mac, p, rate, ((mac, rate),), it, res, conv, mult, True, warns)
