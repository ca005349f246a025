"""Command-line front end.

Three subcommands, all driven by a YAML configuration file:

* ``run``    -- integrate a preset problem and write diagnostics plus
  field snapshots;
* ``verify`` -- execute the operator identity batteries and solver
  cross-checks, writing a machine-readable report;
* ``study``  -- refinement study (space and time together) against a
  preset's exact solution.

Every output file is written atomically, floats are serialized with the
shortest round-trip representation, and headers carry the configuration
hash and seed, so identical invocations produce bit-identical artifacts.
Exit status is 0 when every requested check passes, 1 when a check fails
or a run is interrupted by a guard, and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np
import yaml

from .grid import build_mesh, build_uniform_mesh, dump_mesh_tables
from .fields import scalar_to_csv, velocity_to_csv, write_vtk
from .presets import available_presets, get_preset
from .timestepper import InvariantViolation, SchemeConfig, run
from .linsolve import SolverFailure
from . import verify
from .ioutil import atomic_write, config_hash, format_float


class ConfigError(ValueError):
    """Invalid or unknown configuration content (reported with key path)."""


_SCHEMA = {
    "mesh": {"domain", "cells", "coordinates"},
    "time": {"t_end", "dt"},
    "problem": {"preset", "params"},
    "solver": {"method", "transport_tol", "oseen_tol", "bounds_margin",
               "div_guard", "enforce_invariants"},
    "output": {"directory", "formats", "snapshots", "mesh_tables"},
    "verify": {"trials", "tolerance"},
    "study": {"levels", "base_cells", "t_end", "base_dt", "threshold"},
}


def load_config(path) -> dict:
    """Parse and validate a YAML configuration against the whitelist."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level of the configuration must be a mapping")
    for block, content in data.items():
        if block not in _SCHEMA:
            raise ConfigError(f"unknown configuration block {block!r}; "
                              f"expected one of {sorted(_SCHEMA)}")
        if content is None:
            data[block] = {}
            continue
        if not isinstance(content, dict):
            raise ConfigError(f"block {block!r} must be a mapping")
        for key in content:
            if key not in _SCHEMA[block]:
                raise ConfigError(
                    f"unknown configuration key {block + '.' + key!r}; "
                    f"expected one of {sorted(_SCHEMA[block])}")
    return data


def _require(cfg, block, key=None):
    if block not in cfg:
        raise ConfigError(f"missing configuration block {block!r}")
    if key is not None and key not in cfg[block]:
        raise ConfigError(f"missing configuration key {block + '.' + key!r}")
    return cfg[block] if key is None else cfg[block][key]


def build_mesh_from_config(cfg) -> "MacMesh":
    mesh_cfg = _require(cfg, "mesh")
    if "coordinates" in mesh_cfg:
        coords = [np.asarray(c, dtype=float)
                  for c in mesh_cfg["coordinates"]]
        domain = mesh_cfg.get("domain",
                              [[c[0], c[-1]] for c in coords])
        return build_mesh(domain, coords)
    domain = _require(cfg, "mesh", "domain")
    cells = _require(cfg, "mesh", "cells")
    if len(domain) != len(cells):
        raise ConfigError("mesh.domain and mesh.cells disagree on the "
                          "number of directions")
    return build_uniform_mesh(domain, cells)


def build_problem_from_config(cfg):
    prob_cfg = _require(cfg, "problem")
    preset = prob_cfg.get("preset")
    if preset is None:
        raise ConfigError("missing configuration key 'problem.preset'")
    params = prob_cfg.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("'problem.params' must be a mapping")
    try:
        return get_preset(preset, **params)
    except KeyError:
        raise ConfigError(f"unknown preset {preset!r}; available: "
                          f"{available_presets()}")
    except TypeError as exc:
        raise ConfigError(f"bad parameters for preset {preset!r}: {exc}")


def build_scheme_config(cfg) -> SchemeConfig:
    time_cfg = _require(cfg, "time")
    for key in ("t_end", "dt"):
        if key not in time_cfg:
            raise ConfigError(f"missing configuration key 'time.{key}'")
    solver = cfg.get("solver", {})
    output = cfg.get("output", {})
    return SchemeConfig(
        dt=float(time_cfg["dt"]), t_end=float(time_cfg["t_end"]),
        transport_tol=float(solver.get("transport_tol", 1e-12)),
        oseen_tol=float(solver.get("oseen_tol", 1e-10)),
        solver_method=str(solver.get("method", "direct")),
        bounds_margin=float(solver.get("bounds_margin", 1e-9)),
        div_guard=float(solver.get("div_guard", 1e-9)),
        enforce_invariants=bool(solver.get("enforce_invariants", True)),
        store_every=int(output.get("snapshots", 0)))


def _write_snapshots(result, out_dir, formats, cfg_hash_value):
    mesh = result.mesh
    traj = result.trajectory
    for k in range(len(traj)):
        tag = f"{k:04d}"
        extra = {"t": format_float(traj.times[k]), "snapshot": k}
        if "csv" in formats:
            scalar_to_csv(traj.rho[k],
                          os.path.join(out_dir, f"density_{tag}.csv"),
                          cfg_hash=cfg_hash_value, extra=extra)
            velocity_to_csv(traj.u[k],
                            os.path.join(out_dir, f"velocity_{tag}.csv"),
                            cfg_hash=cfg_hash_value, extra=extra)
            if traj.p[k] is not None:
                scalar_to_csv(traj.p[k],
                              os.path.join(out_dir, f"pressure_{tag}.csv"),
                              cfg_hash=cfg_hash_value, extra=extra)
        if "vtk" in formats:
            write_vtk(os.path.join(out_dir, f"fields_{tag}.vtk"), mesh,
                      rho=traj.rho[k], p=traj.p[k], u=traj.u[k])


def _write_run_summary(path, result, record, interrupted, cfg_hash_value,
                       seed):
    cfg = result.config
    checks = [
        ("density bounds", record.worst_bound_violation,
         cfg.bounds_margin,
         record.worst_bound_violation <= cfg.bounds_margin),
        ("velocity divergence", record.worst_div, cfg.div_guard,
         record.worst_div <= cfg.div_guard),
        ("dual mass balance", record.worst_mass_dual,
         10 * cfg.transport_tol,
         record.worst_mass_dual <= 10 * cfg.transport_tol),
        ("kinetic energy balance", record.worst_kinetic,
         10 * cfg.oseen_tol, record.worst_kinetic <= 10 * cfg.oseen_tol),
    ]
    all_pass = all(ok for *_, ok in checks) and not interrupted
    with atomic_write(path) as fh:
        fh.write(f"# kind: run-summary\n# config_hash: {cfg_hash_value}\n")
        fh.write(f"# seed: {seed}\n")
        fh.write(f"steps completed: {len(result.diagnostics)} of "
                 f"{result.n_steps}\n")
        if interrupted:
            fh.write(f"INTERRUPTED: {interrupted}\n")
        for name, value, tol, ok in checks:
            status = "PASS" if ok else "FAIL"
            fh.write(f"[{status}] {name}: worst "
                     f"{format_float(value)} (tolerance "
                     f"{format_float(tol)})\n")
        fh.write(f"velocity L2(H1) tracker: {format_float(record.l2h1)}\n")
        fh.write("velocity Linf(L2) tracker: "
                 f"{format_float(record.linf_l2)}\n")
        fh.write("density L2 monotone: "
                 f"{'yes' if record.rho_l2_monotone else 'no'}\n")
        fh.write(f"overall: {'PASS' if all_pass else 'FAIL'}\n")
    return all_pass


def cmd_run(cfg, out_dir, seed) -> int:
    mesh = build_mesh_from_config(cfg)
    problem = build_problem_from_config(cfg)
    scheme = build_scheme_config(cfg)
    hash_value = config_hash(cfg)
    formats = cfg.get("output", {}).get("formats", ["csv"])
    unknown = set(formats) - {"csv", "vtk"}
    if unknown:
        raise ConfigError(f"unknown output formats {sorted(unknown)}; "
                          "expected 'csv' and/or 'vtk'")

    interrupted = None
    try:
        result = run(mesh, problem, scheme)
    except (InvariantViolation, SolverFailure) as exc:
        result = getattr(exc, "partial", None)
        interrupted = str(exc)
        if result is None:
            print(f"run failed before the first step: {exc}",
                  file=sys.stderr)
            return 1

    record = verify.collect_diagnostics(result)
    verify.write_diagnostics_csv(result,
                                 os.path.join(out_dir, "diagnostics.csv"),
                                 cfg_hash=hash_value, seed=seed)
    _write_snapshots(result, out_dir, formats, hash_value)
    if cfg.get("output", {}).get("mesh_tables"):
        dump_mesh_tables(mesh, os.path.join(out_dir, "mesh_tables.csv"))
    ok = _write_run_summary(os.path.join(out_dir, "summary.txt"), result,
                            record, interrupted, hash_value, seed)
    if interrupted:
        print(f"run interrupted: {interrupted}", file=sys.stderr)
    print(f"wrote {out_dir}/diagnostics.csv and summary.txt "
          f"({len(result.diagnostics)} steps)")
    return 0 if ok else 1


def _verification_meshes(seed):
    """The standard identity-battery meshes: uniform and graded-random
    spacing, in two and three dimensions."""
    rng = np.random.default_rng(seed)

    def random_coords(n):
        steps = rng.uniform(0.5, 1.5, n)
        coords = np.concatenate([[0.0], np.cumsum(steps)])
        return coords / coords[-1]

    return [
        ("uniform-2d", build_uniform_mesh([[0, 1], [0, 1]], (5, 4))),
        ("graded-2d", build_mesh([[0, 1], [0, 1]],
                                 [random_coords(5), random_coords(4)])),
        ("uniform-3d", build_uniform_mesh([[0, 1]] * 3, (3, 3, 3))),
        ("graded-3d", build_mesh([[0, 1]] * 3,
                                 [random_coords(3) for _ in range(3)])),
    ]


def cmd_verify(cfg, out_dir, seed) -> int:
    ver = cfg.get("verify", {})
    trials = int(ver.get("trials", 100))
    tol = float(ver.get("tolerance", 1e-12))
    hash_value = config_hash(cfg)

    reports = []
    for tag, mesh in _verification_meshes(seed):
        for check in (verify.check_duality, verify.check_adjointness,
                      verify.check_coercivity):
            rep = check(mesh, trials=trials, seed=seed, tol=tol)
            rep.name = f"{rep.name} [{tag}]"
            reports.append(rep)

    monitors = []
    for tag, mesh in _verification_meshes(seed)[:2]:
        bound = verify.measure_convection_bound(mesh, samples=10, seed=seed)
        monitors.append(f"convection trilinear ratio [{tag}]: "
                        f"max {format_float(bound['max'])} over "
                        f"{bound['samples']} samples")
        health = verify.infsup_health(mesh)
        monitors.append(f"inf-sup constant [{tag}]: "
                        f"{format_float(health['beta'])} "
                        f"(nullspace dimension {health['nullspace_dim']})")

    verify.write_identity_reports(
        reports, os.path.join(out_dir, "identity_reports.csv"),
        cfg_hash=hash_value, seed=seed)
    all_pass = all(r.passed for r in reports)
    with atomic_write(os.path.join(out_dir, "summary.txt")) as fh:
        fh.write(f"# kind: verify-summary\n# config_hash: {hash_value}\n")
        fh.write(f"# seed: {seed}\n")
        for r in reports:
            fh.write(r.line() + "\n")
        for line in monitors:
            fh.write(line + "\n")
        fh.write(f"overall: {'PASS' if all_pass else 'FAIL'}\n")
    for r in reports:
        print(r.line())
    print(f"overall: {'PASS' if all_pass else 'FAIL'}")
    return 0 if all_pass else 1


def cmd_study(cfg, out_dir, seed, levels_override=None) -> int:
    problem = build_problem_from_config(cfg)
    study = cfg.get("study", {})
    levels = int(levels_override if levels_override is not None
                 else study.get("levels", 3))
    solver = cfg.get("solver", {})
    hash_value = config_hash(cfg)

    report = verify.convergence_study(
        problem, levels=levels,
        base_cells=int(study.get("base_cells", 16)),
        t_end=float(study.get("t_end", 0.25)),
        base_dt=(float(study["base_dt"]) if "base_dt" in study else None),
        threshold=float(study.get("threshold", 1.5)),
        solver_method=str(solver.get("method", "direct")))

    verify.write_convergence_csv(report,
                                 os.path.join(out_dir, "convergence.csv"),
                                 cfg_hash=hash_value)
    with atomic_write(os.path.join(out_dir, "summary.txt")) as fh:
        fh.write(f"# kind: study-summary\n# config_hash: {hash_value}\n")
        fh.write(f"# seed: {seed}\n")
        for lv in report.levels:
            fh.write(f"cells {'x'.join(map(str, lv.cells))}: "
                     f"err_u {format_float(lv.err_u)} "
                     f"err_rho {format_float(lv.err_rho)} "
                     f"err_p {format_float(lv.err_p)}\n")
        fh.write("velocity reduction factors: "
                 + ", ".join(format_float(f) for f in report.factors_u)
                 + "\n")
        fh.write("density reduction factors: "
                 + ", ".join(format_float(f) for f in report.factors_rho)
                 + "\n")
        fh.write(f"threshold: {format_float(report.threshold)}\n")
        fh.write(f"overall: {'PASS' if report.passed else 'FAIL'}\n")
    for lv in report.levels:
        print(f"cells {'x'.join(map(str, lv.cells))}: "
              f"err_u {lv.err_u:.6e} err_rho {lv.err_rho:.6e}")
    print(f"velocity factors: {report.factors_u}")
    print(f"density factors: {report.factors_rho}")
    print(f"overall: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="macflow",
        description="Staggered-grid variable-density incompressible flow "
                    "solver and verification harness.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("run", "integrate a configured problem and write diagnostics"),
            ("verify", "run the discrete-identity verification battery"),
            ("study", "run a space-time refinement study")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True,
                       help="YAML configuration file")
        p.add_argument("--out", default=None,
                       help="output directory (default: output.directory "
                            "from the configuration, or './out')")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for randomized checks (default 0)")
        if name == "study":
            p.add_argument("--levels", type=int, default=None,
                           help="number of refinement levels (overrides "
                                "study.levels)")

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        out_dir = args.out or cfg.get("output", {}).get("directory", "out")
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "run":
            return cmd_run(cfg, out_dir, args.seed)
        if args.command == "verify":
            return cmd_verify(cfg, out_dir, args.seed)
        return cmd_study(cfg, out_dir, args.seed,
                         levels_override=args.levels)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
