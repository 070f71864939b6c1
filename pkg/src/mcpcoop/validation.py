"""Acceptance checks shared by the test suite and the ``validate`` command.

Each ``criterion_N`` function runs one check at its stated tolerance and
returns a :class:`CriterionResult`; nothing here is loosened to make a
check pass.
"""
from __future__ import annotations

import math
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import EstimatedChannel, sample_channel
from .estimation import mmse_matrix
from .information import (grad_power_conditional, grad_power_int_noise, grad_power_joint,
                          mi_conditional, mi_discrete_sum, mi_gaussian_sum,
                          mi_interference_as_noise, mi_mixed, mi_sum)
from .inputs import InputSpec, PowerProfile, gaussian_quadrature_input
from .io import emit_csv
from .optimize import (DesignOutcome, IterationSchedule, Multipliers, ensemble_kkt,
                       fixed_point_power, gaussian_power, kkt_certificate, select_design,
                       solve_mac, tune_multipliers)
from .quadrature import AccuracyWarning, IntegrationEngine
from .sim import BackhaulConfig, Scenario, SolverConfig, make_states, run_trace, ul_round

ALL_ONES = np.ones((2, 2))


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        info = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"criterion {self.number:2d} [{tag}] {self.name}: {info} ({self.elapsed:.1f} s)"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    return str(v)


def _grid(n=5, top=2.0):
    return np.linspace(0.0, top, n)


def lmmse_system_matrix(h, snr, p1, p2, sigma_sq=(1.0, 1.0)) -> np.ndarray:
    """Linear-MMSE error matrix with row ``l`` taken at receiver ``l``."""
    out = np.zeros((2, 2), complex)
    for l in (0, 1):
        a = np.sqrt(snr) * np.array([h[l, 0] * math.sqrt(p1), h[l, 1] * math.sqrt(p2)])
        A = a.reshape(1, 2)
        cov = np.eye(2) - A.conj().T @ A / (sigma_sq[l] + float(np.real(a @ a.conj())))
        out[l] = cov[l]
    return out


def criterion_1() -> CriterionResult:
    """16-point quadrature input vs Gaussian MI (1e-2 bits); Gaussian MMSE vs LMMSE (1e-6)."""
    t0 = time.perf_counter()
    gh = gaussian_quadrature_input(16)
    gauss = (InputSpec.gaussian(), InputSpec.gaussian())
    mi_gap = {}
    mmse_err = 0.0
    for snr in (0.1, 1.0, 10.0):
        ch = EstimatedChannel.from_gains(ALL_ONES, snr=snr)
        worst = 0.0
        for p1 in _grid():
            for p2 in _grid():
                pp = PowerProfile(p1, p2)
                ref = mi_gaussian_sum(ch, pp)
                val = mi_discrete_sum(ch, pp, (gh, gh))
                worst = max(worst, abs(ref.bits - val.bits))
                E = mmse_matrix(ch, pp, gauss).matrix
                mmse_err = max(mmse_err, float(np.max(np.abs(
                    E - lmmse_system_matrix(ALL_ONES, snr, p1, p2)))))
        mi_gap[snr] = worst
    el = time.perf_counter() - t0
    worst_mi = max(mi_gap.values())
    ok = worst_mi <= 1e-2 and mmse_err <= 1e-6 and el < 30
    det = {f"mi_gap_snr{s:g}": v for s, v in mi_gap.items()}
    det.update(mmse_err=mmse_err, runtime_s=el)
    return CriterionResult(1, "quadrature input vs Gaussian closed forms", ok, det, el)


def criterion_2(n_points: int = 20) -> CriterionResult:
    """Central-difference dI/dsnr of BPSK vs its mmse at 20 log-spaced snr."""
    from .estimation import scalar_mi, scalar_mmse
    t0 = time.perf_counter()
    b = InputSpec.bpsk()
    worst = 0.0
    for s in np.logspace(-2, 2, n_points):
        d = 1e-4 * s
        fd = (scalar_mi(b, s + d) - scalar_mi(b, s - d)) / (2 * d)
        worst = max(worst, abs(fd - scalar_mmse(b, s)))
    el = time.perf_counter() - t0
    return CriterionResult(2, "I-MMSE identity (BPSK)", worst <= 1e-4 and el < 5,
                           {"max_abs_err_nats": worst, "runtime_s": el}, el)


def criterion_3() -> CriterionResult:
    """0.5-bit interference loss of two BPSK users at effective SNR 100."""
    t0 = time.perf_counter()
    b = (InputSpec.bpsk(), InputSpec.bpsk())
    pp = PowerProfile(1.0, 1.0)
    joint = mi_sum(EstimatedChannel.from_gains(ALL_ONES, snr=100.0), pp, b).bits
    # interference links removed: each receiver sees only its own user
    diag = EstimatedChannel.from_gains(np.eye(2), snr=100.0)
    decoupled = mi_sum(diag, pp, b, receiver=1).bits + mi_sum(diag, pp, b, receiver=2).bits
    ok = abs(joint - 1.5) <= 0.02 and abs(decoupled - 2.0) <= 0.02
    el = time.perf_counter() - t0
    return CriterionResult(3, "0.5-bit interference loss", ok,
                           {"interfering_sum_bits": joint, "decoupled_sum_bits": decoupled}, el)


def criterion_4(n_channels: int = 20) -> CriterionResult:
    """Gaussian-input fixed point reproduces the closed-form allocation."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    g = (InputSpec.gaussian(), InputSpec.gaussian())
    worst, worst_res = 0.0, 0.0
    for i in range(n_channels):
        ch = EstimatedChannel.perfect(sample_channel(100 + i, 1.0))
        m = Multipliers(*rng.uniform(0.1, 0.8, 2))
        mac = 1 + i % 2
        cf = gaussian_power(ch, m, mac)
        fp = fixed_point_power(ch, g, m, mac, IterationSchedule(max_iter=100_000))
        worst_res = max(worst_res, fp.residual)
        worst = max(worst, abs(cf.p1 - fp.powers.p1), abs(cf.p2 - fp.powers.p2))
    el = time.perf_counter() - t0
    return CriterionResult(4, "fixed point vs closed form (Gaussian)",
                           worst <= 1e-4 and worst_res <= 1e-6,
                           {"max_power_err": worst, "max_residual": worst_res}, el)


def _cv(r) -> float:
    r = np.asarray(r, float)
    return float(np.std(r) / abs(np.mean(r)))


def criterion_5(n_points: int = 10, order: int = 32, seed: int = 0) -> CriterionResult:
    """Analytic gradients over central differences: constant ratio (CV < 1%)."""
    t0 = time.perf_counter()
    eng = IntegrationEngine(order=order, check=False)
    b = (InputSpec.bpsk(), InputSpec.bpsk())
    rng = np.random.default_rng(seed)
    ratios: dict[str, list] = {}

    def fd(f, a, k):
        e = np.zeros(2)
        e[k] = 1e-4 * a[k]
        P = lambda x: PowerProfile(*(x ** 2))
        return (f(P(a + e)) - f(P(a - e))) / (2 * e[k])

    for _ in range(n_points):
        h = rng.standard_normal((2, 2))
        ch = EstimatedChannel.from_gains(h, snr=1.0)
        P = rng.uniform(0.2, 2.0, 2)
        pp = PowerProfile(*P)
        a = np.sqrt(P)
        for l in (1, 2):
            o = 3 - l
            G = grad_power_joint(ch, pp, mmse_matrix(ch, pp, b, eng, receiver=l), l)
            for k in (0, 1):
                num = fd(lambda q: mi_sum(ch, q, b, eng, l, "nats").value, a, k)
                ratios.setdefault(f"joint_rx{l}_u{k + 1}", []).append(num / (G.g1, G.g2)[k])
            # rate of the other user decoded at receiver l, w.r.t. sqrt(P_l)
            for model in ("gaussian", "exact"):
                gi = grad_power_int_noise(ch, pp, b, eng, l, model)
                num = fd(lambda q: mi_interference_as_noise(ch, q, b, o, eng, model,
                                                            "nats").value, a, l - 1)
                ratios.setdefault(f"int_noise_{model}_rx{l}", []).append(num / gi)
            gc = grad_power_conditional(ch, pp, b, eng, l)
            num = fd(lambda q: mi_conditional(ch, q, b, eng, l, "exact", "nats").value, a, l - 1)
            ratios.setdefault(f"conditional_rx{l}", []).append(num / gc)
    cvs = {k: _cv(v) for k, v in ratios.items()}
    el = time.perf_counter() - t0
    worst = max(cvs.values())
    det = {"max_cv": worst, "worst_expr": max(cvs, key=cvs.get)}
    det.update({f"cv_{k}": v for k, v in cvs.items()})
    return CriterionResult(5, "gradient identities vs finite differences", worst < 0.01, det, el)


def criterion_6(n_ensemble: int = 100) -> CriterionResult:
    """KKT residuals of solver outputs and multiplier tuning to Q1=Q2=2."""
    t0 = time.perf_counter()
    g = (InputSpec.gaussian(), InputSpec.gaussian())
    b = (InputSpec.bpsk(), InputSpec.bpsk())
    rng = np.random.default_rng(0)
    worst_kkt = 0.0
    for i in range(20):
        ch = EstimatedChannel.perfect(sample_channel(100 + i, 1.0))
        m = Multipliers(*rng.uniform(0.1, 0.8, 2))
        mac = 1 + i % 2
        fp = fixed_point_power(ch, g, m, mac, IterationSchedule(max_iter=100_000))
        r = kkt_certificate(ch, fp.powers, g, m, mac)
        worst_kkt = max(worst_kkt, r.stationarity, r.feasibility, r.slackness)
        r = kkt_certificate(ch, gaussian_power(ch, m, mac), g, m, mac)
        worst_kkt = max(worst_kkt, r.stationarity, r.feasibility, r.slackness)
    ones = EstimatedChannel.from_gains(ALL_ONES, snr=1.0)
    for lam in (0.1, 0.2, 0.4):
        m = Multipliers(lam, lam)
        fp = fixed_point_power(ones, b, m, 1, budgets=(2.0, 2.0))
        r = kkt_certificate(ones, fp.powers, b, m, 1, budgets=(2.0, 2.0))
        worst_kkt = max(worst_kkt, r.stationarity, r.feasibility, r.slackness)
    ens = [EstimatedChannel.perfect(sample_channel(1000 + i, 1.0)) for i in range(n_ensemble)]
    avg_err, ens_kkt = 0.0, 0.0
    for mac in (1, 2):
        res = tune_multipliers(ens, 2.0, 2.0, mac=mac)
        avg_err = max(avg_err, abs(res.average[0] - 2.0), abs(res.average[1] - 2.0))
        r = ensemble_kkt(ens, res, 2.0, 2.0, mac)
        ens_kkt = max(ens_kkt, r.stationarity, r.feasibility, r.slackness)
    el = time.perf_counter() - t0
    ok = worst_kkt <= 1e-6 and ens_kkt <= 1e-6 and avg_err <= 1e-3
    return CriterionResult(6, "KKT certificates and budget tuning", ok,
                           {"solver_kkt": worst_kkt, "ensemble_kkt": ens_kkt,
                            "avg_power_err": avg_err}, el)


def brute_force_select(candidates) -> DesignOutcome:
    """Reference selection: enumerate the candidates, keep the smallest rate, MAC 1 on ties."""
    best = None
    for c in sorted(candidates, key=lambda c: c.selected_mac):
        if best is None or c.rate.bits < best.rate.bits:
            best = c
    rates = tuple((c.selected_mac, c.rate) for c in sorted(candidates,
                                                            key=lambda c: c.selected_mac))
    return DesignOutcome(best.selected_mac, best.design, best.rate, rates, best.iterations,
                         best.residual, best.converged, best.multipliers, best.cooperative,
                         best.warnings)


def criterion_7(n_scenarios: int = 50) -> CriterionResult:
    """select_design against brute-force enumeration."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    kinds = [(InputSpec.gaussian(), InputSpec.gaussian(), "closed-form"),
             (InputSpec.bpsk(), InputSpec.bpsk(), "full"),
             (InputSpec.gaussian(), InputSpec.bpsk(), "full")]
    mismatches = ties = 0
    for i in range(n_scenarios):
        h = ALL_ONES if i % 10 == 0 else rng.standard_normal((2, 2))
        ch = EstimatedChannel.from_gains(h, snr=float(rng.uniform(0.5, 5.0)))
        u1, u2, method = kinds[i % 3]
        m = Multipliers(*rng.uniform(0.1, 0.8, 2))
        c1 = solve_mac(ch, (u1, u2), m, 1, (2.0, 2.0), method=method)
        c2 = solve_mac(ch, (u1, u2), m, 2, (2.0, 2.0), method=method)
        ties += c1.rate.bits == c2.rate.bits
        for a, bb in ((c1, c2), (c2, c1)):
            if select_design(a, bb) != brute_force_select([a, bb]):
                mismatches += 1
    el = time.perf_counter() - t0
    return CriterionResult(7, "selection rule vs brute force", mismatches == 0,
                           {"mismatches": mismatches, "ties": ties}, el)


def criterion_8(snr_order: float = 1.0, snr_dip: float = 10.0) -> CriterionResult:
    """Gaussian >= mixed >= 0 on the power grid; BPSK dip on the equal-power line."""
    t0 = time.perf_counter()
    grid = [round(0.1 * i, 10) for i in range(21)]
    b = InputSpec.bpsk()
    viol = 0
    for snr in sorted({snr_order, snr_dip}):
        ch = EstimatedChannel.from_gains(ALL_ONES, snr=snr)
        for p1 in grid:
            for p2 in grid:
                pp = PowerProfile(p1, p2)
                gs = mi_gaussian_sum(ch, pp).bits
                for gu in (1, 2):
                    mx = mi_mixed(ch, pp, gu, b).bits
                    if not (gs >= mx - 1e-12 and mx >= 0):
                        viol += 1
    ch = EstimatedChannel.from_gains(ALL_ONES, snr=snr_dip)
    bb = (b, b)
    dips, checked = 0, 0
    for p in grid:
        if p < 1.0:
            continue
        c = mi_sum(ch, PowerProfile(p, p), bb).bits
        n1 = mi_sum(ch, PowerProfile(p, p - 0.1), bb).bits
        n2 = mi_sum(ch, PowerProfile(p - 0.1, p), bb).bits
        checked += 1
        dips += c < n1 and c < n2
    el = time.perf_counter() - t0
    ok = viol == 0 and dips == checked and checked > 0
    return CriterionResult(8, "ordering and equal-power dip", ok,
                           {"order_violations": viol, "dips": f"{dips}/{checked}",
                            "dip_snr": snr_dip}, el)


def trace_files(out_dir, n_realizations: int = 250, seed: int = 0,
                scenario: Scenario | None = None):
    """Run a trace and write its trace and events CSVs; returns (trace, paths)."""
    scenario = Scenario() if scenario is None else scenario
    tr = run_trace(n_realizations, scenario, seed)
    out = Path(out_dir)
    p1 = emit_csv(*tr.trace_table(), out / "trace.csv")
    p2 = emit_csv(*tr.events_table(), out / "events.csv")
    return tr, (p1, p2)


def criterion_9(n_realizations: int = 250) -> CriterionResult:
    """250-realization BPSK trace: exact running means, monotone MMSE, byte-stable files."""
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as d:
        da, db = Path(d, "a"), Path(d, "b")
        da.mkdir()
        db.mkdir()
        tr, pa = trace_files(da, n_realizations, 0)
        _, pb = trace_files(db, n_realizations, 0)
        identical = all(x.read_bytes() == y.read_bytes() for x, y in zip(pa, pb))
    exact = True
    for s in tr.snr_grid:
        for name, avg in (("mi_inst", "mi_avg"), ("mmse_inst", "mmse_avg")):
            inst, av = tr.column(name, s), tr.column(avg, s)
            exact &= all(av[k] == math.fsum(inst[:k + 1]) / (k + 1) for k in range(len(inst)))
    final = [tr.column("mmse_avg", s)[-1] for s in tr.snr_grid]
    mono = all(final[i + 1] <= final[i] for i in range(len(final) - 1))
    el = time.perf_counter() - t0
    ok = exact and mono and identical and el < 300
    return CriterionResult(9, "trace reproduction", ok,
                           {"running_means_exact": exact, "mmse_nonincreasing": mono,
                            "byte_identical": identical, "runtime_s": el}, el)


def criterion_10() -> CriterionResult:
    """Congested backhaul: no-cooperation outcome without touching peer CSI."""
    t0 = time.perf_counter()
    ok = True
    for i, load in enumerate((1.0, 2.5)):
        est = EstimatedChannel.perfect(sample_channel(50 + i, 1.0, real_only=True))
        bs1, bs2 = make_states([est])
        res = ul_round(bs1, bs2, BackhaulConfig(load, 1.0), SolverConfig())
        ok &= (not res.cooperative and res.outcome.selected_mac is None
               and not res.outcome.cooperative and bs1.peer_reads == 0
               and bs2.peer_reads == 0 and not bs1.has_peer and not bs2.has_peer)
    el = time.perf_counter() - t0
    return CriterionResult(10, "congestion gate", ok, {"no_coop_without_peer_reads": ok}, el)


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10}


def run_validation(numbers=None, echo=None) -> list[CriterionResult]:
    """Run the selected criteria (all by default); ``echo`` receives each report line."""
    out = []
    for n in sorted(numbers or CRITERIA):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AccuracyWarning)
            r = CRITERIA[n]()
        out.append(r)
        if echo is not None:
            echo(r.line())
    return out
