"""``qtensorflow {run|relax|verify|analyze}`` command-line front end.

Exit codes: 0 success, 1 configuration error or missing artifacts, 2
instability abort, 3 I/O error, 4 relaxation not converged, 5 analysis not
converged (or a failed verification suite).
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .algebra import uniaxial
from .config import ConfigError, RunConfig, load_config, parse_config
from .dynamics import InstabilityError, SimState, resolve, run, symmetry_drift, trace_drift
from .equilibrium import DegenerateFitError, critical_point_residual, omega_limit_check
from .energy import phase_energy
from .grid import Grid, l2_norm, read_snapshot, velocity_divergence, velocity_norm, velocity_to_cells, write_snapshot
from .rng import random_qtensor_field

__all__ = ["main", "cmd_run", "cmd_relax", "cmd_verify", "cmd_analyze", "initial_q"]

EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_IO, EXIT_RELAX, EXIT_ANALYZE = 0, 1, 2, 3, 4, 5

SNAPSHOT_INDEX = "snapshots.csv"


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def initial_q(cfg: RunConfig, grid: Grid) -> np.ndarray:
    if cfg.init == "zero":
        return np.zeros(grid.dims + (3, 3))
    if cfg.init == "uniaxial":
        n = np.asarray(cfg.init_director, dtype=float)
        Q0 = uniaxial(cfg.resolved_s(), n / np.linalg.norm(n))
        return np.broadcast_to(Q0, grid.dims + (3, 3)).copy()
    return random_qtensor_field(grid, cfg.seed, cfg.init_amplitude, cfg.init_max_norm)


def _dump_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _simulate(cfg: RunConfig, flow: bool, command: str):
    """Shared body of ``run`` and ``relax``; returns ``(exit_code, final_state)``."""
    out = Path(cfg.out)
    grid = cfg.grid()
    Q = initial_q(cfg, grid)
    stepper = resolve(cfg.stepper(flow), Q)
    state = SimState.initial(grid, Q)
    nsteps = math.ceil(cfg.t_end / cfg.dt - 1e-9) if cfg.t_end > 0 else 0
    every = max(1, math.ceil(nsteps / cfg.snapshots)) if cfg.snapshots > 0 else max(nsteps, 1)
    index = []

    def snapshot(s: SimState) -> None:
        name = f"snap_{len(index):05d}.qtf"
        write_snapshot(out / name, grid, {"Q": s.Q, "u": velocity_to_cells(grid, s.u), "p": s.p})
        index.append((len(index), s.t, s.step, name))

    try:
        out.mkdir(parents=True, exist_ok=True)
        snapshot(state)
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO, None

    verdict, code, message = "stable", EXIT_OK, None
    try:
        final, ledger = run(state, stepper, cfg.t_end, callbacks=[snapshot], every=every)
    except InstabilityError as exc:
        verdict, code, message = "unstable", EXIT_UNSTABLE, str(exc)
        final, ledger = None, exc.ledger
        _err(f"instability abort: {exc}")
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO, None

    echo = cfg.effective()
    echo["stabilization"] = stepper.stabilization
    report = {
        "command": command,
        "config": echo,
        "flow": flow,
        "steps": len(ledger),
        "t_final": ledger.rows[-1].t if len(ledger) else 0.0,
        "stability": verdict,
    }
    if message:
        report["diagnostic"] = message
    if final is not None:
        report["final"] = {
            "u_norm": velocity_norm(grid, final.u),
            "divergence_norm": l2_norm(grid, velocity_divergence(grid, final.u)),
            "q_max_norm": float(np.max(np.sqrt(np.einsum("...ij,...ij->...", final.Q, final.Q)))),
            "trace_drift": trace_drift(final.Q),
            "symmetry_drift": symmetry_drift(final.Q),
            "critical_residual": critical_point_residual(grid, final.Q, stepper.params, stepper.bulk),
            "total_energy": ledger.rows[-1].total if len(ledger) else phase_energy(grid, final.Q, stepper.params),
        }
    report["snapshots"] = [name for *_, name in index]
    try:
        ledger.to_csv(out / "energy.csv")
        with open(out / SNAPSHOT_INDEX, "w") as fh:
            fh.write("index,t,step,file\n")
            for i, t, step, name in index:
                fh.write(f"{i},{t!r},{step},{name}\n")
        _dump_json(out / "report.json", report)
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO, None
    return code, final


def cmd_run(cfg: RunConfig) -> int:
    code, _ = _simulate(cfg, flow=True, command="run")
    return code


def cmd_relax(cfg: RunConfig) -> int:
    code, final = _simulate(cfg, flow=False, command="relax")
    if code != EXIT_OK:
        return code
    residual = critical_point_residual(final.grid, final.Q, cfg.params(), cfg.bulk)
    if residual <= cfg.threshold_residual:
        print(f"relaxed: critical residual {residual:.3e} <= {cfg.threshold_residual:.1e}")
        return EXIT_OK
    print(f"not converged by t_end={cfg.t_end!r}: critical residual {residual:.3e} "
          f"> {cfg.threshold_residual:.1e}")
    return EXIT_RELAX


def cmd_verify(seed: int = 0) -> int:
    from .verify import format_table, run_suites

    results = run_suites(seed)
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_ANALYZE


def _load_run(directory: Path):
    report = json.loads((directory / "report.json").read_text())
    from .dynamics import EnergyLedger

    ledger = EnergyLedger.from_csv(directory / "energy.csv")
    with open(directory / SNAPSHOT_INDEX) as fh:
        fh.readline()
        entries = [line.strip().split(",") for line in fh if line.strip()]
    snaps = [read_snapshot(directory / e[3])[2]["Q"] for e in entries]
    return report, ledger, snaps


def cmd_analyze(directory, cfg: RunConfig | None = None) -> int:
    """Write ``equilibrium.json`` and ``decay.csv`` for a finished run directory."""
    directory = Path(directory)
    try:
        report, ledger, snaps = _load_run(directory)
    except (OSError, KeyError, ValueError, IndexError) as exc:
        _err(f"missing or unreadable run artifacts in {directory}: {exc}")
        return EXIT_CONFIG
    if len(snaps) < 3 or len(ledger) == 0:
        _err(f"need energy.csv rows and at least 3 snapshots in {directory}")
        return EXIT_CONFIG
    # the run's own configuration decides the grid and coefficients
    run_cfg = parse_config("", {k: (tuple(v) if isinstance(v, list) else v)
                                for k, v in report["config"].items()})
    grid = run_cfg.grid()
    params = run_cfg.params()
    thresholds = (cfg or run_cfg).thresholds()
    u_final = math.sqrt(max(2.0 * ledger.rows[-1].kinetic, 0.0))
    eq = omega_limit_check(grid, ledger, snaps, u_final, params, thresholds, run_cfg.bulk)

    t = ledger.column("t")
    gap = ledger.column("total") - eq.e_infinity
    try:
        with open(directory / "decay.csv", "w") as fh:
            fh.write("t,gap,log_gap\n")
            for ti, gi in zip(t, gap):
                if gi > 0:
                    fh.write(f"{float(ti)!r},{float(gi)!r},{math.log(gi)!r}\n")
        _dump_json(directory / "equilibrium.json", {"config": report["config"], **eq.to_dict()})
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO
    failing = [k for k, ok in eq.criteria.items() if not ok]
    if eq.converged:
        print(f"converged: E_inf={eq.e_infinity!r}, residual {eq.critical_residual:.3e}")
        return EXIT_OK
    print("not converged; failing criteria: " + ", ".join(failing))
    return EXIT_ANALYZE


@contextlib.contextmanager
def _thread_cap():
    cap = os.environ.get("QTF_THREADS")
    if not cap:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=int(cap)):
        yield


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtensorflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "coupled flow + order-parameter simulation"),
        ("relax", "order-parameter gradient flow with u = 0"),
        ("verify", "run the verification suites"),
        ("analyze", "equilibrium diagnostics for a finished run directory"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="flat key = value configuration file")
        p.add_argument("--seed", type=int, help="seed for random data (overrides config)")
        p.add_argument("--out", help="output or run directory (overrides config)")
        p.add_argument("--snapshots", type=int, help="number of snapshots (overrides config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        with _thread_cap():
            return cmd_verify(args.seed or 0)
    overrides = {"seed": args.seed, "out": args.out, "snapshots": args.snapshots}
    try:
        cfg = load_config(args.config, overrides) if args.config else parse_config("", overrides)
    except (ConfigError, OSError) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    with _thread_cap():
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "relax":
            return cmd_relax(cfg)
        return cmd_analyze(cfg.out, cfg)


if __name__ == "__main__":
    sys.exit(main())
