"""Command-line front end: ``mcpcoop <command> [--config PATH] [--seed N] [--out DIR] [--unit U]``."""
from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .estimation import mmse_matrix
from .information import mi_sum
from .inputs import PowerProfile
from .io import emit_csv, write_manifest
from .optimize import fixed_point_power, fixed_point_precoder, kkt_certificate
from .quadrature import AccuracyWarning
from .sim import simulate_dl
from .validation import run_validation, trace_files

COMMANDS = ("mi-surface", "mmse", "power", "precode", "sim-ul", "sim-dl", "validate")


def _mi_surface(cfg: ExperimentConfig, out: Path, unit: str):
    s = cfg.surface
    ch, inputs, eng = s.channel.build(), s.input_specs(), s.engine.build()
    rows = []
    for p1 in s.grid():
        for p2 in s.grid():
            r = mi_sum(ch, PowerProfile(p1, p2), inputs, eng, s.receiver, unit)
            rows.append([p1, p2, r.value])
    return [emit_csv(["p1", "p2", f"mi_{unit}"], rows, out / "mi_surface.csv")], []


def _mmse(cfg: ExperimentConfig, out: Path, unit: str):
    s = cfg.mmse
    ch, inputs, eng = s.channel.build(), s.input_specs(), s.engine.build()
    rows = []
    for p1 in s.grid():
        for p2 in s.grid():
            E = mmse_matrix(ch, PowerProfile(p1, p2), inputs, eng)
            rows.append([p1, p2] + [float(np.real(E.entry(i, j))) for i in (1, 2) for j in (1, 2)])
    cols = ["p1", "p2", "e11", "e12", "e21", "e22"]
    return [emit_csv(cols, rows, out / "mmse_surface.csv")], []


def _power(cfg: ExperimentConfig, out: Path, unit: str):
    s = cfg.power
    ch, inputs, eng = s.channel.build(), s.input_specs(), s.engine.build()
    m = s.multipliers.build()
    sol = fixed_point_power(ch, inputs, m, s.mac, s.schedule.build(), eng, s.budgets)
    kkt = kkt_certificate(ch, sol.powers, inputs, m, s.mac, eng, s.budgets)
    rate = mi_sum(ch, sol.powers, inputs, eng, s.mac, unit)
    warns = []
    if not sol.converged:
        warns.append(f"power fixed point not converged: residual {sol.residual!r} "
                     f"after {sol.iterations} iterations")
    if sol.warning:
        warns.append(sol.warning)
    row = [s.mac, sol.powers.p1, sol.powers.p2, rate.value, sol.iterations, sol.residual,
           sol.converged, kkt.stationarity, kkt.passed]
    cols = ["mac", "p1", "p2", f"rate_{unit}", "iterations", "residual", "converged",
            "kkt_stationarity", "kkt_passed"]
    return [emit_csv(cols, [row], out / "power.csv")], warns


def _precode(cfg: ExperimentConfig, out: Path, unit: str):
    s = cfg.precode
    ch, inputs, eng = s.channel.build(), s.input_specs(), s.engine.build()
    sol = fixed_point_precoder(ch, inputs, s.multipliers.build(), s.mac, None,
                               s.schedule.build(), eng, s.budgets, s.normalization)
    rate = mi_sum(ch, sol.precoders, inputs, eng, s.mac, unit)
    warns = [] if sol.converged else [f"precoder fixed point not converged: residual "
                                      f"{sol.residual!r}"]
    rows = []
    for k, mat in ((1, sol.precoders.mat1), (2, sol.precoders.mat2)):
        v = complex(np.asarray(mat).ravel()[0])
        rows.append([k, v.real, v.imag, sol.precoders.power(k), sol.nu[k - 1], rate.value,
                     sol.iterations, sol.residual, sol.converged])
    cols = ["user", "re", "im", "power", "nu_effective", f"rate_{unit}", "iterations",
            "residual", "converged"]
    return [emit_csv(cols, rows, out / "precoders.csv")], warns


def _sim_ul(cfg: ExperimentConfig, out: Path, unit: str, seed: int):
    sc = cfg.scenario
    tr, paths = trace_files(out, sc.n_realizations, seed, sc.build())
    return list(paths), []


def _sim_dl(cfg: ExperimentConfig, out: Path, unit: str, seed: int):
    sc = cfg.scenario
    res, events = simulate_dl(sc.n_blocks, sc.build(), seed)
    rows, warns = [], []
    for b, r in enumerate(res):
        o = r.outcome
        rows.append([b, o.selected_mac, o.rate.to(unit).value, o.design.power(1),
                     o.design.power(2), r.transmissions[1].real, r.transmissions[1].imag,
                     r.transmissions[2].real, r.transmissions[2].imag, o.converged])
        if not o.converged:
            warns.append(f"block {b}: precoder fixed point not converged "
                         f"(residual {o.residual!r})")
    cols = ["block", "selected_mac", f"rate_{unit}", "power1", "power2", "tx1_re", "tx1_im",
            "tx2_re", "tx2_im", "converged"]
    p1 = emit_csv(cols, rows, out / "dl_rounds.csv")
    p2 = emit_csv(["block", "event_type"], [list(e) for e in events], out / "events.csv")
    return [p1, p2], warns


def _validate(cfg: ExperimentConfig, out: Path, unit: str, echo):
    results = run_validation(cfg.validate_.criteria, echo)
    rows = [[r.number, r.name, "pass" if r.passed else "fail", r.elapsed,
             "; ".join(f"{k}={v}" for k, v in r.details.items())] for r in results]
    p = emit_csv(["criterion", "name", "status", "seconds", "details"], rows,
                 out / "validation.csv")
    return [p], [], all(r.passed for r in results)


def run_experiment(command: str, cfg: ExperimentConfig, out_dir, seed: int | None = None,
                   unit: str | None = None, echo=None) -> tuple[Path, bool]:
    """Run one pipeline, write its CSVs and ``manifest.json``; returns (manifest, ok)."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if seed is None:
        sc_seed = cfg.scenario.seed
        seed = sc_seed if command.startswith("sim") and sc_seed is not None else cfg.seed
    unit = unit or cfg.unit
    ok = True
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", AccuracyWarning)
        if command == "mi-surface":
            files, warns = _mi_surface(cfg, out, unit)
        elif command == "mmse":
            files, warns = _mmse(cfg, out, unit)
        elif command == "power":
            files, warns = _power(cfg, out, unit)
        elif command == "precode":
            files, warns = _precode(cfg, out, unit)
        elif command == "sim-ul":
            files, warns = _sim_ul(cfg, out, unit, seed)
        elif command == "sim-dl":
            files, warns = _sim_dl(cfg, out, unit, seed)
        else:
            files, warns, ok = _validate(cfg, out, unit, echo)
    warns = list(warns) + sorted({str(w.message) for w in caught})
    man = write_manifest(out, command, files, warns, {"seed": seed, "unit": unit})
    return man, ok


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mcpcoop", description=__doc__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="YAML experiment file")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--out", type=Path, help="output directory (default: config 'out' or ./out)")
    ap.add_argument("--unit", choices=("bits", "nats"), help="rate unit")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
    except ConfigError as exc:
        for m in exc.messages:
            print(f"error: {m}", file=sys.stderr)
        return 2
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return 2
    out = args.out or Path(cfg.out or "out")
    try:
        man, ok = run_experiment(args.command, cfg, out, args.seed, args.unit, echo=print)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"manifest: {man}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
