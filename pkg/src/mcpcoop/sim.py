"""Two-base-station simulation of the uplink and downlink design rounds.

Each base station measures the two links into its own receiver (its row
of the channel array).  Cooperation exchanges these rows over the backhaul
so both stations hold the full estimate; user data is never exchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import (ArModel, ChannelMatrix, EstimatedChannel, FrameConfig, ar_path,
                      predict_block, sample_channel)
from .estimation import mmse_matrix, scalar_mi, scalar_mmse
from .information import RateValue, mi_sum
from .inputs import InputSpec, PowerProfile
from .optimize import (DesignOutcome, IterationSchedule, Multipliers,
                       fixed_point_precoder, select_design, solve_mac, svd_init)
from .quadrature import DEFAULT_ENGINE, IntegrationEngine


@dataclass(frozen=True)
class BackhaulConfig:
    """Scalar backhaul load and congestion threshold ``tau``."""

    bandwidth_load: float = 0.0
    threshold: float = 1.0

    def __post_init__(self):
        if not self.bandwidth_load >= 0:
            raise ValueError("bandwidth_load must be >= 0")
        if not self.threshold > 0:
            raise ValueError("threshold must be > 0")

    @property
    def congested(self) -> bool:
        return self.bandwidth_load >= self.threshold


@dataclass(frozen=True, eq=False)
class RowCsi:
    """One station's estimate of the two links into its receiver."""

    receiver: int
    gains: np.ndarray
    sigma_sq: float = 1.0
    horizon: int = 0
    snr: float = 1.0

    def __post_init__(self):
        g = np.array(self.gains, dtype=complex)
        if g.shape[0] != 2:
            raise ValueError("a CSI row holds the two incoming links")
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)

    @classmethod
    def from_channel(cls, ch, receiver: int) -> "RowCsi":
        if isinstance(ch, ChannelMatrix):
            return cls(receiver, ch.h[receiver - 1], 1.0, 0, ch.snr)
        return cls(receiver, ch.hat_h[receiver - 1], ch.sigma_sq(receiver), ch.horizon, ch.snr)


class BsState:
    """Mutable state of one base station.

    ``peer_csi`` is None until an exchange; every access through the
    property is counted in ``peer_reads`` so tests can assert that a
    round never consulted it.
    """

    def __init__(self, index: int, local_csi=()):
        if index not in (1, 2):
            raise ValueError("base station index must be 1 or 2")
        self.index = index
        self.local_csi: list[RowCsi] = list(local_csi)
        self._peer: RowCsi | None = None
        self.peer_reads = 0
        self.design = None
        self.estimator = None

    @property
    def peer_csi(self) -> RowCsi | None:
        self.peer_reads += 1
        return self._peer

    @property
    def has_peer(self) -> bool:
        return self._peer is not None

    def add_pilot(self, csi: RowCsi) -> None:
        if csi.receiver != self.index:
            raise ValueError("local CSI must describe this station's receiver")
        self.local_csi.append(csi)

    def latest(self) -> RowCsi:
        if not self.local_csi:
            raise ValueError(f"base station {self.index} has no CSI")
        return self.local_csi[-1]

    def receive_peer(self, csi: RowCsi) -> None:
        self._peer = csi

    def clear_peer(self) -> None:
        self._peer = None

    def merged(self, own: RowCsi | None = None) -> EstimatedChannel:
        """Full estimate from the local row and the exchanged peer row."""
        own = self.latest() if own is None else own
        peer = self.peer_csi
        if peer is None:
            raise RuntimeError("no peer CSI has been exchanged")
        rows = {own.receiver: own, peer.receiver: peer}
        h = np.vstack([rows[1].gains, rows[2].gains])
        horizon = max(own.horizon, peer.horizon)
        s1, s2 = rows[1].sigma_sq, rows[2].sigma_sq
        if horizon > 0 and s1 == 1.0 and s2 == 1.0:
            horizon = 0
        return EstimatedChannel(h, s1, s2, horizon, own.snr)


def make_states(estimates) -> tuple[BsState, BsState]:
    """Two stations whose pilot histories are the rows of ``estimates``."""
    estimates = list(estimates)
    bs = (BsState(1), BsState(2))
    for est in estimates:
        for b in bs:
            b.add_pilot(RowCsi.from_channel(est, b.index))
    return bs


@dataclass(frozen=True)
class SolverConfig:
    """Settings shared by the uplink and downlink rounds.

    ``method`` is ``"fixed-point"``, ``"closed-form"`` (Gaussian inputs) or
    ``"full"`` (transmit at the budgets).  ``multipliers`` may be one
    :class:`Multipliers` or a mapping from MAC index to multipliers.
    """

    inputs: tuple = (InputSpec.bpsk(), InputSpec.bpsk())
    multipliers: object = Multipliers(0.1, 0.1)
    budgets: tuple = (2.0, 2.0)
    schedule: IterationSchedule = IterationSchedule()
    engine: IntegrationEngine = DEFAULT_ENGINE
    method: str = "fixed-point"
    normalization: str = "project"

    def mult(self, mac: int) -> Multipliers:
        m = self.multipliers
        return m[mac] if isinstance(m, dict) else m


@dataclass
class UlRoundResult:
    outcome: DesignOutcome
    cooperative: bool
    handshake_ok: bool
    candidates: tuple = ()


def _single_user_power(g, noise, spec, lam, cap, cfg: SolverConfig):
    """Best single-user power against Gaussian interference plus noise."""
    if cfg.method == "full":
        return cap, 0, 0.0
    if g <= 0:
        return 0.0, 0, 0.0
    if spec.is_gaussian:
        return min(cap, max(0.0, 1.0 / lam - noise / g)), 0, 0.0
    sched = cfg.schedule
    a = math.sqrt(min(cap, 1.0 / lam))
    coef = g / (noise * lam)
    res, it = math.inf, 0
    for it in range(1, sched.max_iter + 1):
        t = min(math.sqrt(cap), coef * a * scalar_mmse(spec, g * a * a / noise, cfg.engine))
        res = abs(a - t)
        if res <= sched.tol:
            break
        al = sched.step(it - 1)
        a = min(math.sqrt(cap), max(0.0, (1 - al) * a + al * coef * a
                                    * scalar_mmse(spec, g * a * a / noise, cfg.engine)))
    return a * a, it, res


def _no_coop(bs1: BsState, bs2: BsState, cfg: SolverConfig) -> DesignOutcome:
    powers, rates, iters, resid = [0.0, 0.0], [], 0, 0.0
    for bs in (bs1, bs2):
        own = bs.latest()
        k, o = bs.index - 1, 2 - bs.index
        g = own.snr * abs(own.gains[k]) ** 2
        # the other terminal's power is unknown here: assume its full budget
        noise = own.sigma_sq + own.snr * abs(own.gains[o]) ** 2 * cfg.budgets[o]
        lam = cfg.mult(bs.index).lam(bs.index)
        p, it, res = _single_user_power(g, noise, cfg.inputs[k], lam, cfg.budgets[k], cfg)
        powers[k] = p
        iters, resid = max(iters, it), max(resid, res)
        rates.append((bs.index, RateValue(scalar_mi(cfg.inputs[k], g * p / noise, cfg.engine)
                                          / math.log(2.0))))
    design = PowerProfile(powers[0], powers[1], *cfg.budgets)
    worst = min(rates, key=lambda kv: kv[1].value)[1]
    conv = resid <= cfg.schedule.tol or cfg.method != "fixed-point"
    return DesignOutcome(None, design, worst, tuple(rates), iters, resid, conv,
                         None, cooperative=False)


def ul_round(bs1: BsState, bs2: BsState, backhaul: BackhaulConfig,
             cfg: SolverConfig = SolverConfig()) -> UlRoundResult:
    """One uplink power-allocation round.

    Under congestion each station designs its own terminal's power from its
    local row only, treating the other terminal as Gaussian noise at full
    budget.  Otherwise the rows are exchanged, each station solves both MAC
    problems, the candidate sets are compared (the handshake) and the
    min-max rule picks the design, which both stations record.
    """
    if not bs1.local_csi or not bs2.local_csi:
        raise ValueError("both base stations need at least one CSI estimate")
    if backhaul.congested:
        out = _no_coop(bs1, bs2, cfg)
        bs1.design = bs2.design = out.design
        return UlRoundResult(out, False, True)
    bs1.receive_peer(bs2.latest())
    bs2.receive_peer(bs1.latest())
    sets = []
    for bs in (bs1, bs2):
        full = bs.merged()
        sets.append(tuple(solve_mac(full, cfg.inputs, cfg.mult(mac), mac, cfg.budgets,
                                    cfg.schedule, cfg.engine, cfg.method) for mac in (1, 2)))
    handshake = all(a == b for a, b in zip(sets[0], sets[1]))
    out = select_design(*sets[0])
    bs1.design = bs2.design = out.design
    return UlRoundResult(out, True, handshake, sets[0])


@dataclass
class DlRoundResult:
    outcome: DesignOutcome
    transmissions: dict
    predicted: EstimatedChannel
    candidates: tuple = ()


def _predict_row(bs: BsState, ar: ArModel, horizon: int) -> RowCsi:
    hist = bs.local_csi[-ar.order:]
    snr = hist[-1].snr
    mats = []
    for row in hist:
        h = np.zeros((2, 2), complex)
        h[bs.index - 1] = row.gains
        mats.append(ChannelMatrix(h, snr=snr))
    pred = predict_block(mats, ar, horizon)[-1]
    return RowCsi(bs.index, pred.hat_h[bs.index - 1], pred.sigma_sq(bs.index), pred.horizon, snr)


def _vec(block) -> complex:
    """Right-singular-vector entry of a scalar link."""
    _, f = svd_init(np.atleast_2d(block), 1.0)
    return complex(f["V"][0, 0])


def dl_round(bs1: BsState, bs2: BsState, frame: FrameConfig, ar: ArModel,
             cfg: SolverConfig = SolverConfig(), horizon: int = 1,
             true_channel: ChannelMatrix | None = None) -> DlRoundResult:
    """One downlink precoding round.

    Each station predicts its row ``horizon`` blocks ahead with the AR
    model, the predictions are exchanged, both MAC precoder problems are
    solved from the SVD start and the min-max rule selects.  The returned
    transmissions are the complex coefficients multiplying ``x1`` at
    station 1 and ``x2`` at station 2, built from the true links (the
    estimate when ``true_channel`` is omitted) and the singular vectors of
    the estimated links.
    """
    for bs in (bs1, bs2):
        if len(bs.local_csi) < ar.order:
            raise ValueError(f"base station {bs.index} needs {ar.order} pilots")
    rows = (_predict_row(bs1, ar, horizon), _predict_row(bs2, ar, horizon))
    bs1.receive_peer(rows[1])
    bs2.receive_peer(rows[0])
    est = bs1.merged(rows[0])
    cands = []
    for mac in (1, 2):
        sol = fixed_point_precoder(est, cfg.inputs, cfg.mult(mac), mac, None, cfg.schedule,
                                   cfg.engine, cfg.budgets, cfg.normalization)
        rate = mi_sum(est, sol.precoders, cfg.inputs, cfg.engine, mac, frame=frame)
        cands.append(DesignOutcome(mac, sol.precoders, rate, ((mac, rate),), sol.iterations,
                                   sol.residual, sol.converged, cfg.mult(mac)))
    out = select_design(*cands)
    bs1.design = bs2.design = out.design
    h = est.hat_h if true_channel is None else true_channel.h
    hh = est.hat_h
    p1 = complex(out.design.mat1[0, 0])
    p2 = complex(out.design.mat2[0, 0])
    tx = {
        1: complex((h[0, 0] * _vec(hh[0, 0]) + h[0, 1] * _vec(hh[1, 0])) * p1),
        2: complex((h[1, 1] * _vec(hh[1, 1]) + h[1, 0] * _vec(hh[0, 1])) * p2),
    }
    return DlRoundResult(out, tx, est, tuple(cands))


@dataclass(frozen=True)
class Scenario:
    """Parameters of a simulated trace."""

    snr_grid: tuple = (0.1, 0.3, 1.0, 3.0, 10.0)
    inputs: tuple = (InputSpec.bpsk(), InputSpec.bpsk())
    ar: ArModel = ArModel(1, 1.0)
    budgets: tuple = (2.0, 2.0)
    backhaul: BackhaulConfig = BackhaulConfig()
    multipliers: object = Multipliers(0.1, 0.1)
    schedule: IterationSchedule = IterationSchedule()
    engine: IntegrationEngine = DEFAULT_ENGINE
    power_policy: str = "full"
    refresh_every: int = 1
    sigma_ceiling: float = math.inf
    real_only: bool = True
    frame: FrameConfig = FrameConfig()

    def solver(self) -> SolverConfig:
        return SolverConfig(tuple(self.inputs), self.multipliers, tuple(self.budgets),
                            self.schedule, self.engine, self.power_policy)


@dataclass
class TraceRecord:
    realization: int
    snr: float
    mi_inst: float
    mi_avg: float
    mmse_inst: float
    mmse_avg: float
    selected_mac: int | None
    cooperative: bool
    design: PowerProfile


@dataclass
class BlockRecord:
    block: int
    true_channel: ChannelMatrix
    predicted: EstimatedChannel
    events: tuple


@dataclass
class SimTrace:
    """Per-(realization, snr) records plus per-block channel bookkeeping."""

    records: list
    blocks: list
    snr_grid: tuple

    def column(self, name: str, snr: float | None = None) -> list:
        return [getattr(r, name) for r in self.records if snr is None or r.snr == snr]

    def events(self) -> list[tuple[int, str]]:
        return [(b.block, e) for b in self.blocks for e in b.events]

    def trace_table(self):
        cols = ["realization", "snr", "mi_inst", "mi_avg", "mmse_inst", "mmse_avg"]
        return cols, [[getattr(r, c) for c in cols] for r in self.records]

    def events_table(self):
        return ["block", "event_type"], [list(e) for e in self.events()]


def pilot_schedule(true_path, ar: ArModel, refresh_every: int = 1,
                   sigma_ceiling: float = math.inf):
    """Estimates seen by the stations along a true channel path.

    A pilot (perfect feedback, ``horizon 0``) is sent every
    ``refresh_every`` blocks or as soon as the predicted noise variance would
    exceed ``sigma_ceiling``; in between the last pilot is extrapolated.
    Returns ``(estimates, events)``.
    """
    if refresh_every < 1:
        raise ValueError("refresh_every must be >= 1")
    ests, events = [], []
    last = None
    for t, ch in enumerate(true_path):
        due = last is None or (t - last) % refresh_every == 0
        if not due:
            j = t - last
            sig = 1.0 + 2.0 * ar.error_variance(j)
            due = sig > sigma_ceiling
        if due:
            last = t
            ests.append(EstimatedChannel.perfect(ch))
            events.append(("pilot",))
        else:
            j = t - last
            hist = list(true_path[max(0, last - ar.order + 1):last + 1])
            ests.append(predict_block(hist, ar, j)[-1])
            events.append(("predict",))
    return ests, events


def _channel_path(n: int, ar: ArModel, seed, real_only: bool):
    ss = np.random.SeedSequence(seed)
    s0, s1 = ss.spawn(2)
    h0 = sample_channel(s0, 1.0, real_only)
    return [h0] + ar_path([h0] * ar.order, ar, n - 1, s1)


def run_trace(n_realizations: int, scenario: Scenario = Scenario(), seed: int = 0) -> SimTrace:
    """Instantaneous and running-average rate and MMSE along an AR channel path.

    Realization ``t`` is block ``t`` of one AR path; every snr in the grid
    sees the same path.  Each block runs an uplink round with the scenario's
    backhaul and power policy, then records the min-max sum rate (bits) and
    the mean system MMSE ``(e11 + e22)/2`` at the chosen powers.  Running
    averages are ``fsum`` means of the instantaneous values so far.
    """
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")
    path = _channel_path(n_realizations, scenario.ar, seed, scenario.real_only)
    ests, events = pilot_schedule(path, scenario.ar, scenario.refresh_every,
                                  scenario.sigma_ceiling)
    cfg = scenario.solver()
    blocks = [BlockRecord(t, path[t], ests[t], events[t]) for t in range(n_realizations)]
    series: dict[float, tuple[list, list]] = {s: ([], []) for s in scenario.snr_grid}
    records = []
    for t in range(n_realizations):
        for snr in scenario.snr_grid:
            est = ests[t].with_snr(snr)
            bs1, bs2 = make_states([est])
            res = ul_round(bs1, bs2, scenario.backhaul, cfg)
            design = res.outcome.design
            mi = min(mi_sum(est, design, cfg.inputs, cfg.engine, l).bits for l in (1, 2))
            E = mmse_matrix(est, design, cfg.inputs, cfg.engine)
            mm = 0.5 * (float(np.real(E.e11)) + float(np.real(E.e22)))
            mis, mms = series[snr]
            mis.append(mi)
            mms.append(mm)
            k = len(mis)
            records.append(TraceRecord(t, snr, mi, math.fsum(mis) / k, mm, math.fsum(mms) / k,
                                       res.outcome.selected_mac, res.cooperative, design))
    return SimTrace(records, blocks, tuple(scenario.snr_grid))


def simulate_dl(n_blocks: int, scenario: Scenario = Scenario(), seed: int = 0,
                horizon: int = 1) -> tuple[list[DlRoundResult], list[tuple[int, str]]]:
    """Downlink rounds over ``n_blocks`` coherence blocks.

    A pilot is fed back at every block boundary (``refresh_every`` blocks);
    between pilots the stations keep extrapolating from their history.
    Returns the round results and the ``(block, event_type)`` log.
    """
    ar = scenario.ar
    path = _channel_path(n_blocks + ar.order, ar, seed, scenario.real_only)
    cfg = replace(scenario.solver(), method="fixed-point")
    bs1, bs2 = make_states(path[:ar.order])
    results, events = [], []
    for b in range(n_blocks):
        true = path[ar.order + b]
        res = dl_round(bs1, bs2, scenario.frame, ar, cfg, horizon, true)
        results.append(res)
        if (b + 1) % scenario.refresh_every == 0:
            for bs in (bs1, bs2):
                bs.add_pilot(RowCsi.from_channel(true, bs.index))
                bs.clear_peer()
            events.append((b, "pilot"))
    return results, events
