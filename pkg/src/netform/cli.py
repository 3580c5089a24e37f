"""Command line front end.

Exit codes: 0 success, 1 malformed input or missing file, 2 blow-up detected,
3 solver failure, 4 a property check (lemma suite or calibration) failed.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from . import artifacts, bounds, calibration, dynamics, elliptic, energy, lemma_suites
from . import config as cfgmod
from .artifacts import RunDirectory, RunManifest
from .errors import ConfigError
from .grid import ScalarField

logger = logging.getLogger("netform")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_BLOWUP = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4

OUTCOME_EXIT = {dynamics.COMPLETED: EXIT_OK, dynamics.BLOWUP: EXIT_BLOWUP, dynamics.SOLVER_FAILURE: EXIT_SOLVER}

# exponents used by the heat-run calibration (two space dimensions)
CALIBRATION_EXPONENTS = (2, 3.0, 4.0, 1.0)


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 so that 2 stays reserved for blow-up."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _trials(text: str) -> int:
    v = float(text)
    if not (v >= 1 and v == int(v)):
        raise argparse.ArgumentTypeError("trials must be a positive integer")
    return int(v)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_INPUT


# ---------------------------------------------------------------------------
# simulate


def run_simulation(raw: dict, out: Path, seed: int | None, tol: float | None) -> dict:
    """Run one simulation into ``out``; returns a summary with the exit code."""
    if tol is not None:
        raw = {**raw, "elliptic_tol": tol}
    cfg = cfgmod.load_sim_config(raw)
    rd = RunDirectory(out)
    manifest = RunManifest("simulate", cfgmod.sim_config_to_dict(cfg), seed=seed)
    t0 = time.perf_counter()
    try:
        traj = dynamics.simulate(cfg)
    except ConfigError as exc:
        manifest.outcome = "config_error"
        manifest.results = {"error": str(exc), "field": exc.field}
        manifest.wall_time_s = time.perf_counter() - t0
        rd.finish(manifest)
        raise
    manifest.wall_time_s = time.perf_counter() - t0
    artifacts.write_series(rd.file("series.csv"), traj)
    for snap in traj.snapshots:
        m_name, p_name = artifacts.snapshot_names(snap.index)
        artifacts.write_field(rd.file(m_name), snap.m)
        artifacts.write_field(rd.file(p_name), snap.p)
    s = traj.series
    manifest.outcome = traj.outcome
    manifest.outcome_time = traj.outcome_time
    manifest.results = {
        "steps": traj.n_steps,
        "t_last": float(traj.times[-1]),
        "message": traj.message,
        "max_m_inf": float(np.max(s["m_inf"])),
        "max_grad_m_inf": float(np.max(s["grad_m_inf"])),
        "max_grad_p_inf": float(np.max(s["grad_p_inf"])),
        "grad_p_4q": {str(q): dynamics.measure_grad_p_4q(traj, q) for q in cfg.record_q},
        "snapshots": [snap.index for snap in traj.snapshots],
    }
    manifest.wall_time_s = time.perf_counter() - t0
    rd.finish(manifest)
    return {"outcome": traj.outcome, "outcome_time": traj.outcome_time, "exit_code": OUTCOME_EXIT[traj.outcome]}


def cmd_simulate(args: argparse.Namespace) -> int:
    raw = cfgmod.read_json(args.config)
    out = artifacts.resolve_out(args.out, Path(args.config).stem)
    summary = run_simulation(raw, out, args.seed, args.tol)
    when = "" if summary["outcome_time"] is None else f" at t={summary['outcome_time']:.6g}"
    print(f"{summary['outcome']}{when}; artifacts in {out}")
    return summary["exit_code"]


# ---------------------------------------------------------------------------
# tmax


def tmax_document(inp: bounds.EstimateInputs, tol: float) -> dict:
    res = bounds.tmax_solve(inp, tol)
    return {
        "T_max": res.T,
        "log_T": res.log_T,
        "log10_T": res.log10_T,
        "phi_residual": res.phi_residual,
        "evaluations": res.evaluations,
        "exponents": inp.exps.to_dict(),
        "inputs": inp.to_dict(),
    }


def cmd_tmax(args: argparse.Namespace) -> int:
    raw = cfgmod.read_json(args.inputs)
    inp = cfgmod.load_estimate_inputs(raw)
    tol = args.tol if args.tol is not None else 1e-12
    out = artifacts.resolve_out(args.out, Path(args.inputs).stem + "_tmax")
    rd = RunDirectory(out)
    t0 = time.perf_counter()
    doc = tmax_document(inp, tol)
    artifacts.write_json(rd.file("tmax.json"), doc)
    manifest = RunManifest(
        "tmax", {"inputs": inp.to_dict(), "tol": tol}, seed=args.seed,
        calibration={"c": inp.c}, results={"log_T": doc["log_T"], "phi_residual": doc["phi_residual"]},
    )
    manifest.wall_time_s = time.perf_counter() - t0
    rd.finish(manifest)
    print(f"T_max = {doc['T_max']:.6g} (log T = {doc['log_T']:.12g}), |Phi - 1| = {doc['phi_residual']:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# audit-elliptic


def cmd_audit_elliptic(args: argparse.Namespace) -> int:
    raw = cfgmod.read_json(args.config)
    grid = cfgmod.load_grid(raw)
    for key in ("m", "S"):
        if key not in raw:
            raise ConfigError(key, "is required")
    m = cfgmod.vector_field(raw["m"], grid, "m", dirichlet=False)
    S = cfgmod.scalar_field(raw["S"], grid, "S")
    tol = args.tol if args.tol is not None else float(raw.get("tol", 1e-10))
    out = artifacts.resolve_out(args.out, Path(args.config).stem + "_elliptic")
    rd = RunDirectory(out)
    t0 = time.perf_counter()
    p, rep = elliptic.solve_pressure(m, S, tol)
    artifacts.write_field(rd.file("p.csv"), p)
    results: dict[str, Any] = {"iterations": rep.iterations, "final_residual": rep.final_residual}
    if grid.dim == 1:
        oracle = elliptic.pressure_1d_oracle(ScalarField(grid, m.values[0]), S)
        err = rep.grad_p.values[0] - oracle.values
        x = grid.axis(0)
        artifacts.write_csv(
            rd.file("oracle.csv"), ["x", "p_x", "p_x_oracle", "error"],
            zip(x, rep.grad_p.values[0], oracle.values, err),
        )
        results.update(sup_error=float(np.max(np.abs(err))), h=grid.h[0])
        summary = f"1D oracle sup error {results['sup_error']:.3e} (h = {grid.h[0]:.3e})"
    else:
        qs = raw.get("q", [3.0])
        qs = qs if isinstance(qs, list) else [qs]
        ell = cfgmod._number(raw, "ell", 4.0)
        try:
            records = [elliptic.audit_w1q(m, S, float(q), ell, tol) for q in qs]
        except ValueError as exc:
            raise ConfigError("q", str(exc)) from None
        artifacts.write_csv(rd.file("w1q.csv"), elliptic.W1qAuditRecord.CSV_HEADER, [r.csv_row() for r in records])
        results["implied_c"] = {str(r.q): r.implied_c for r in records}
        summary = "implied constants " + ", ".join(f"q={r.q:g}: {r.implied_c:.3e}" for r in records)
    manifest = RunManifest("audit-elliptic", dict(raw, tol=tol), seed=args.seed, results=results)
    manifest.wall_time_s = time.perf_counter() - t0
    rd.finish(manifest)
    print(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# audit-energy


def load_trajectory(directory: Path) -> dynamics.Trajectory:
    """Rebuild a trajectory (without snapshots) from a ``simulate`` run directory."""
    doc = artifacts.load_manifest(directory)
    if doc["command"] != "simulate":
        raise ConfigError("traj_dir", f"{directory} holds a {doc['command']!r} run, not a simulation")
    cfg = cfgmod.load_sim_config(doc["config"])
    times, series = artifacts.read_series(Path(directory) / "series.csv")
    return dynamics.Trajectory(cfg, times, series, [], doc["outcome"], doc.get("outcome_time"))


def default_taus(traj: dynamics.Trajectory) -> list[float]:
    stride = traj.config.output_stride
    ks = list(range(stride, traj.n_steps + 1, stride))
    if traj.n_steps not in ks:
        ks.append(traj.n_steps)
    return [k * traj.config.dt for k in ks if k > 0]


def cmd_audit_energy(args: argparse.Namespace) -> int:
    directory = Path(args.traj_dir)
    if not (directory / artifacts.MANIFEST_NAME).is_file():
        raise FileNotFoundError(f"no run manifest in {directory}")
    traj = load_trajectory(directory)
    taus = args.tau if args.tau else default_taus(traj)
    if not taus:
        raise ConfigError("tau", "the trajectory has no steps to audit")
    try:
        entries = energy.ledger(traj, taus)
    except ValueError as exc:
        raise ConfigError("tau", str(exc)) from None
    out = artifacts.resolve_out(args.out, "") if args.out else directory / "energy_audit"
    rd = RunDirectory(out)
    t0 = time.perf_counter()
    energy.write_ledger_csv(rd.file("ledger.csv"), entries)
    results = {
        "taus": list(taus),
        "me1_relative_residual": [a.relative_residual for a, _ in entries],
        "f5_relative_residual": [b.relative_residual for _, b in entries],
    }
    manifest = RunManifest("audit-energy", {"traj_dir": str(directory), "tau": list(taus)}, seed=args.seed, results=results)
    manifest.wall_time_s = time.perf_counter() - t0
    rd.finish(manifest)
    worst = max(max(results["me1_relative_residual"]), max(results["f5_relative_residual"]))
    print(f"{len(entries)} ledger rows; largest relative residual {worst:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# lemmas


CALIBRATION_HEADER = (
    "set", "g0", "f0", "T", "D", "sup_u", "u_l1", "g_q", "f_q", "F_2q", "needed_c",
    "grad_u_inf", "f_2q", "needed_c_gradient",
)


def _calibration_rows(report: calibration.CalibrationReport, exps: bounds.ExponentSet):
    for label, ms in (("calibration", report.calibration), ("held_out", report.held_out)):
        for m in ms:
            c = m.case
            yield (label, c.g0, c.f0, c.T, c.D, m.sup_u, m.u_l1, m.g_q, m.f_q, m.F_2q, m.needed_c(exps),
                   m.grad_u_inf, m.f_2q, m.needed_c_gradient())


def cmd_lemmas(args: argparse.Namespace) -> int:
    seed = 42 if args.seed is None else args.seed
    out = artifacts.resolve_out(args.out, f"lemmas_seed{seed}")
    rd = RunDirectory(out)
    t0 = time.perf_counter()
    report = lemma_suites.run_all(seed, args.trials)
    artifacts.write_json(rd.file("lemmas.json"), report.to_dict())
    for line in report.lines():
        print(line)
    ok = report.ok
    calib: dict[str, float] = {}
    results: dict[str, Any] = {"lemmas_ok": report.ok}
    if args.calibrate:
        exps = bounds.exponents(*CALIBRATION_EXPONENTS)
        cal = calibration.calibrate(seed, exps)
        artifacts.write_csv(rd.file("calibration.csv"), CALIBRATION_HEADER, _calibration_rows(cal, exps))
        calib = {"c_star": cal.c_star, "c_star_gradient": cal.c_star_gradient}
        results["calibration"] = cal.summary()
        print(
            f"degiorgi calibration: {'PASS' if cal.passed else 'FAIL'} c*={cal.c_star:.6e} "
            f"held-out {sum(cal.held_out_ok)}/{len(cal.held_out_ok)}"
        )
        print(
            f"heat gradient calibration: {'PASS' if all(cal.held_out_gradient_ok) else 'FAIL'} "
            f"c*={cal.c_star_gradient:.6e} held-out {sum(cal.held_out_gradient_ok)}/{len(cal.held_out_gradient_ok)}"
        )
        ok = ok and cal.passed and all(cal.held_out_gradient_ok)
    manifest = RunManifest(
        "lemmas", {"trials": args.trials, "calibrate": bool(args.calibrate)}, seed=seed,
        outcome="passed" if ok else "failed", calibration=calib, results=results,
    )
    manifest.wall_time_s = time.perf_counter() - t0
    rd.finish(manifest)
    return EXIT_OK if ok else EXIT_CHECK


# ---------------------------------------------------------------------------
# sweep


def set_dotted(d: dict, key: str, value: Any) -> dict:
    """Copy of ``d`` with ``d[a][b] = value`` for ``key = "a.b"``."""
    out = copy.deepcopy(d)
    parts = key.split(".")
    node = out
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(key, "does not address an object")
    node[parts[-1]] = value
    return out


def expand_grid(spec: dict) -> tuple[list[str], list[tuple], list[dict]]:
    base = spec.get("base")
    if not isinstance(base, dict):
        raise ConfigError("base", "is required and must be an object")
    axes = spec.get("grid")
    if not isinstance(axes, dict) or not axes:
        raise ConfigError("grid", "is required and must map keys to value lists")
    keys = list(axes)
    for k in keys:
        if not isinstance(axes[k], list) or not axes[k]:
            raise ConfigError(f"grid.{k}", "must be a non-empty list")
    points = list(itertools.product(*(axes[k] for k in keys)))
    configs = []
    for pt in points:
        d = base
        for k, v in zip(keys, pt):
            d = set_dotted(d, k, v)
        configs.append(d)
    return keys, points, configs


def _tmax_point(raw: dict, tol: float) -> dict:
    inp = cfgmod.load_estimate_inputs(raw)
    return tmax_document(inp, tol)


def _sim_point(job: tuple[dict, str, int | None, float | None]) -> dict:
    raw, out, seed, tol = job
    try:
        return run_simulation(raw, Path(out), seed, tol)
    except ConfigError as exc:
        return {"outcome": "config_error", "outcome_time": None, "exit_code": EXIT_INPUT, "error": str(exc)}


def _map(fn, jobs: Sequence, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def _tmax_job(job: tuple[dict, float]) -> dict:
    return _tmax_point(*job)


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = cfgmod.read_json(args.spec)
    kind = spec.get("kind", "tmax")
    keys, points, configs = expand_grid(spec)
    workers = args.workers or os.cpu_count() or 1
    out = artifacts.resolve_out(args.out, Path(args.spec).stem + "_sweep")
    rd = RunDirectory(out)
    t0 = time.perf_counter()
    if kind == "tmax":
        tol = args.tol if args.tol is not None else 1e-12
        for raw in configs:  # validate everything before fanning out
            cfgmod.load_estimate_inputs(raw)
        docs = _map(_tmax_job, [(raw, tol) for raw in configs], workers)
        rows = [(*pt, d["T_max"], d["log_T"], d["log10_T"], d["phi_residual"]) for pt, d in zip(points, docs)]
        artifacts.write_csv(rd.file("sweep.csv"), [*keys, "T_max", "log_T", "log10_T", "phi_residual"], rows)
        code = EXIT_OK
        results: dict[str, Any] = {"rows": len(rows)}
    elif kind == "simulate":
        for raw in configs:
            cfgmod.load_sim_config(raw)
        names = [f"run_{i:03d}" for i in range(len(configs))]
        jobs = [(raw, str(rd.path / name), args.seed, args.tol) for raw, name in zip(configs, names)]
        summaries = _map(_sim_point, jobs, workers)
        for name in names:
            rd.files.append(f"{name}/{artifacts.MANIFEST_NAME}")
        rows = [(name, *pt, s["outcome"], "" if s["outcome_time"] is None else s["outcome_time"], s["exit_code"])
                for name, pt, s in zip(names, points, summaries)]
        artifacts.write_csv(rd.file("sweep.csv"), ["run", *keys, "outcome", "outcome_time", "exit_code"], rows)
        code = EXIT_OK
        results = {"rows": len(rows), "exit_codes": [s["exit_code"] for s in summaries]}
    else:
        raise ConfigError("kind", f"unknown sweep kind {kind!r}")
    manifest = RunManifest("sweep", spec, seed=args.seed, results=results)
    manifest.wall_time_s = time.perf_counter() - t0
    rd.finish(manifest)
    print(f"{len(points)} points written to {rd.path / 'sweep.csv'}")
    return code


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: $NETFORM_OUT/<name> or ./netform_out/<name>)")
    common.add_argument("--seed", type=_seed, default=None, help="random seed (unsigned 64-bit)")
    common.add_argument("--tol", type=float, default=None, help="solver tolerance override")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="netform", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="time-integrate a JSON configuration")
    p.add_argument("config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tmax", parents=[common], help="solve the life-span equation for JSON inputs")
    p.add_argument("inputs")
    p.set_defaults(func=cmd_tmax)

    p = sub.add_parser("audit-elliptic", parents=[common], help="pressure solve with oracle or W^{1,q} audit")
    p.add_argument("config")
    p.set_defaults(func=cmd_audit_elliptic)

    p = sub.add_parser("audit-energy", parents=[common], help="energy ledger of a simulate run directory")
    p.add_argument("traj_dir")
    p.add_argument("--tau", type=float, action="append", help="audit time (repeatable; default every output stride)")
    p.set_defaults(func=cmd_audit_energy)

    p = sub.add_parser("lemmas", parents=[common], help="seeded lemma property suites")
    p.add_argument("--trials", type=_trials, default=100_000)
    p.add_argument("--calibrate", action="store_true", help="also run the heat-equation calibration")
    p.set_defaults(func=cmd_lemmas)

    p = sub.add_parser("sweep", parents=[common], help="fan out over a parameter grid")
    p.add_argument("spec")
    p.add_argument("--workers", type=_positive_int, default=None, help="worker processes (default: CPU count)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(f"invalid configuration: {exc}")
    except FileNotFoundError as exc:
        return _fail(f"missing file: {exc.filename or exc}")
    except FileExistsError as exc:
        return _fail(str(exc))
    except jsonschema.ValidationError as exc:
        return _fail(f"invalid run manifest: {exc.message}")


if __name__ == "__main__":
    sys.exit(main())
