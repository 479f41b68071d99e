"""Command line: ``stripfold {trace,sweep,assess,genpath,validate}``.

Exit status: 0 completed, 2 completed with critical points while the config
expects stability, 3 failure (solver failure or failed checks), 64 usage
error. A usage error never creates output files.
"""
from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
import logging
from pathlib import Path
import sys

import numpy as np

from . import __version__
from . import config as cfgmod
from . import output
from .constraints import GripperPath, read_path, write_path
from .continuation import InternalFriction, critical_sweep, trace_path
from .fem import ElementInversionError
from .paths import (
    GeneratorStuckError,
    PlanningError,
    assess_path,
    circular_path,
    planned_touch,
    r_path,
    triangular_path,
)
from .scenarios import PreparationError, XTranslationCell
from .solvers import NonConvergence

log = logging.getLogger("stripfold")

EXIT_OK, EXIT_UNSTABLE, EXIT_FAILURE, EXIT_USAGE = 0, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="stripfold", description="Static stability analysis of fabric strip folding.")
    p.add_argument("--version", action="version", version=f"stripfold {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, need_config=True):
        sp.add_argument("--config", required=need_config, help="YAML scenario file")
        sp.add_argument("--out", help="output directory (default: output.directory of the config)")
        sp.add_argument("--workers", type=int, default=1, help="worker processes")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("trace", help="trace the equilibrium path of the configured gripper path"))
    common(sub.add_parser("sweep", help="critical gripper x over the z and eta_b grids"))
    a = sub.add_parser("assess", help="compare planned and achieved touch of folding paths")
    common(a)
    a.add_argument("--path", default="all", help="all (assess.paths of the config) | triangular | circular | r | file:PATH")
    g = sub.add_parser("genpath", help="write a folding path file (hold-end frame)")
    common(g)
    g.add_argument("--path", default=None, help="triangular | circular | r (default: path.generator)")
    v = sub.add_parser("validate", help="run the analytic oracle checks")
    common(v, need_config=False)
    return p


# --------------------------------------------------------------------------
# helpers


def _out_dir(args, cfg):
    d = Path(args.out if args.out else cfg["output"]["directory"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _friction(cfg, enabled=None):
    f = cfgmod.friction(cfg)
    return f if enabled is None else replace(f, enabled=enabled)


def _planning_friction(cfg):
    return _friction(cfg, enabled=True)


def _waypoints(cfg, scenario, name, plan=None, options=None):
    """Hold-end frame waypoints of a named path."""
    l, x_f = scenario.length, scenario.x_f
    n = cfg["path"]["points"]
    if name == "triangular":
        return triangular_path(l, x_f, n)
    if name == "circular":
        return circular_path(l, x_f, n)
    if name in ("r", "r_path"):
        return r_path(scenario, plan, options, _planning_friction(cfg)).waypoints
    if name.startswith("file:"):
        return read_path(name[5:]).waypoints.copy()
    if name == "file":
        return read_path(cfg["path"]["file"]).waypoints.copy()
    raise UsageError(f"unknown path {name!r}")


def _finish(out_dir, cfg, files, started, command, status):
    output.write_manifest(
        out_dir, cfg, cfgmod.config_hash(cfg), __version__, files, started, output.now(), command, status
    )
    return status


# --------------------------------------------------------------------------
# commands


def cmd_trace(args, cfg):
    started = output.now()
    sc = cfgmod.build_scenario(cfg)
    opts = cfgmod.continuation_options(cfg)
    fr = _friction(cfg)
    gen = cfg["path"]["generator"]
    out = _out_dir(args, cfg)
    files = []
    try:
        if gen == "x_translation":
            xt = cfgmod.x_translation(cfg)
            system, initial = xt.prepare(sc, opts)
        else:
            plan = planned_touch(sc, opts, _planning_friction(cfg)) if gen == "r_path" else None
            W = _waypoints(cfg, sc, gen, plan, opts)
            system, initial = sc.system(sc.path_from_hold_frame(W)), None
        rec = trace_path(system, opts, fr, initial=initial)
    except (PreparationError, PlanningError, GeneratorStuckError, NonConvergence, ElementInversionError) as exc:
        print(f"trace failed: {exc}", file=sys.stderr)
        return _finish(out, cfg, files, started, "trace", EXIT_FAILURE)
    stride = cfg["output"]["snapshot_stride"]
    for name, writer in (
        ("samples.csv", lambda p: output.write_samples(rec, p)),
        ("snapshots.csv", lambda p: output.write_snapshots(rec, system.mesh, p, stride)),
        ("events.jsonl", lambda p: output.write_events(rec, p)),
    ):
        writer(out / name)
        files.append(out / name)
    if cfg["output"]["svg"]:
        output.svg_trace(rec, system.mesh, out / "trace.svg", stride)
        files.append(out / "trace.svg")
    crit = rec.critical_events()
    for e in rec.events:
        print(f"event {e.kind} lambda={e.lam:.6g}")
    print(f"samples {len(rec.samples)}; critical points {len(crit)}; completed {rec.completed}")
    if not rec.completed:
        status = EXIT_FAILURE
    elif crit and cfg["expect_stable"]:
        status = EXIT_UNSTABLE
    else:
        status = EXIT_OK
    return _finish(out, cfg, files, started, "trace", status)


def cmd_sweep(args, cfg):
    started = output.now()
    sc = cfgmod.build_scenario(cfg)
    opts = cfgmod.continuation_options(cfg)
    cell = XTranslationCell(sc, cfgmod.x_translation(cfg), opts, auto_resolution=cfg["mesh"]["nx"] is None)
    rows = critical_sweep(cell, cfg["sweep"]["z_meters"], cfg["sweep"]["eta_b"], opts, workers=max(1, args.workers))
    out = _out_dir(args, cfg)
    output.write_sweep(rows, out / "sweep.csv")
    for r in rows:
        print(f"eta_b={r.eta_b:g} z={r.z:g} lambda_c={r.lambda_c:.6g} {r.status}")
    return _finish(out, cfg, [out / "sweep.csv"], started, "sweep", EXIT_OK)


def _assess_one(job):
    """Worker: assess one path and write its report and picture."""
    cfg, name, waypoints, planned, out, friction_on = job
    sc = cfgmod.build_scenario(cfg)
    opts = cfgmod.continuation_options(cfg)
    fr = _friction(cfg, enabled=True) if friction_on else _friction(cfg)
    out = Path(out)
    rep = assess_path(sc, waypoints, name, planned, opts, fr)
    files = [out / f"report_{name}.json", out / f"path_{name}.csv"]
    output.write_report(rep, files[0])
    write_path(GripperPath(waypoints), files[1])
    if cfg["output"]["svg"]:
        system = sc.system(sc.path_from_hold_frame(waypoints))
        output.svg_assessment(
            rep.record, system.mesh, out / f"assess_{name}.svg", float(sc.to_model(rep.achieved)), cfg["output"]["snapshot_stride"]
        )
        files.append(out / f"assess_{name}.svg")
    rep.record = None
    return rep, [str(f) for f in files]


def cmd_assess(args, cfg):
    started = output.now()
    sc = cfgmod.build_scenario(cfg)
    opts = cfgmod.continuation_options(cfg)
    sel = args.path
    if sel == "all":
        names = ["r" if n == "r_path" else n for n in cfg["assess"]["paths"]]
    elif sel in ("triangular", "circular", "r", "r_path") or sel.startswith("file:"):
        names = ["r" if sel == "r_path" else sel]
    else:
        raise UsageError(f"--path must be all, triangular, circular, r or file:PATH, got {sel!r}")
    for n in names:
        if n.startswith("file:") and not Path(n[5:]).exists():
            raise UsageError(f"path file does not exist: {n[5:]}")
    out = _out_dir(args, cfg)
    try:
        plan = planned_touch(sc, opts, _planning_friction(cfg))
        jobs = []
        for n in names:
            W = _waypoints(cfg, sc, n, plan, opts)
            label = Path(n[5:]).stem if n.startswith("file:") else n
            friction_on = n == "r" and cfg["assess"]["r_path_friction"]
            jobs.append((cfg, label, W, plan.planned_touch, str(out), friction_on))
    except (PlanningError, GeneratorStuckError, NonConvergence, ElementInversionError) as exc:
        print(f"assessment failed: {exc}", file=sys.stderr)
        return _finish(out, cfg, [], started, "assess", EXIT_FAILURE)
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_assess_one, jobs))
    else:
        results = [_assess_one(j) for j in jobs]
    reports = [r for r, _ in results]
    files = [Path(f) for _, fs in results for f in fs]
    output.write_summary(reports, out / "summary.csv")
    files.append(out / "summary.csv")
    print(f"planned touch {plan.planned_touch:.6g} m")
    for r in reports:
        print(
            f"{r.name}: achieved {r.achieved:.6g} m, error {r.error:+.3e} m, "
            f"critical events {r.critical_events}, completed {r.completed}"
        )
    status = EXIT_OK if all(r.completed for r in reports) else EXIT_FAILURE
    return _finish(out, cfg, files, started, "assess", status)


def cmd_genpath(args, cfg):
    started = output.now()
    sc = cfgmod.build_scenario(cfg)
    opts = cfgmod.continuation_options(cfg)
    name = args.path or cfg["path"]["generator"]
    if name == "r_path":
        name = "r"
    if name not in ("triangular", "circular", "r"):
        raise UsageError(f"genpath needs triangular, circular or r, got {name!r}")
    out = _out_dir(args, cfg)
    try:
        plan = planned_touch(sc, opts, _planning_friction(cfg)) if name == "r" else None
        W = _waypoints(cfg, sc, name, plan, opts)
    except (PlanningError, GeneratorStuckError, NonConvergence, ElementInversionError) as exc:
        print(f"path generation failed: {exc}", file=sys.stderr)
        return _finish(out, cfg, [], started, "genpath", EXIT_FAILURE)
    target = out / f"{name}.path"
    write_path(GripperPath(W), target)
    print(f"wrote {target} ({len(W)} waypoints)")
    return _finish(out, cfg, [target], started, "genpath", EXIT_OK)


def cmd_validate(args, cfg=None):
    from .validation import run_all

    checks = run_all()
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    print("all checks passed" if ok else "some checks failed")
    return EXIT_OK if ok else EXIT_FAILURE


COMMANDS = {
    "trace": cmd_trace,
    "sweep": cmd_sweep,
    "assess": cmd_assess,
    "genpath": cmd_genpath,
    "validate": cmd_validate,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
        if args.workers < 1:
            raise UsageError("--workers must be at least 1")
        cfg = cfgmod.load(args.config) if args.config else None
        return COMMANDS[args.command](args, cfg)
    except (UsageError, cfgmod.ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
