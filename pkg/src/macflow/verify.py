"""Verification harness: identity batteries, estimate trackers, translate
measurements, and refinement studies.

Three kinds of checks live here:

* machine-precision identities of the discrete operators (duality pairing,
  gradient/divergence adjointness, diffusion coercivity and symmetry, the
  per-face kinetic energy balance): random inputs, residuals compared
  against absolute thresholds around 1e-12;
* bounded-quantity trackers (velocity energy norms, convection trilinear
  ratios, saddle-point inf-sup health): reported and compared across
  meshes, no universal constant asserted;
* refinement behavior (time-translate scaling of the velocity, space-time
  convergence against manufactured solutions): fitted slopes and
  level-to-level error reduction factors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .grid import MacMesh, build_uniform_mesh, regularity, mesh_step
from .fields import (ScalarField, VelocityField, Trajectory, cell_average,
                     fortin_interpolate, norm_l2_cells, norm_lp_dual,
                     norm_h1, norm_h1_squared)
from . import operators as ops
from .linsolve import (SaddleSystem, assemble_divergence, assemble_gradient,
                       solve_oseen)
from .timestepper import RunResult, SchemeConfig, run
from .ioutil import atomic_write, format_float, standard_header


@dataclass
class IdentityReport:
    """Outcome of one randomized identity battery."""

    name: str
    trials: int
    max_residual: float
    tolerance: float
    passed: bool
    extras: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: max residual "
                f"{self.max_residual:.3e} (tolerance {self.tolerance:.1e}, "
                f"{self.trials} trials)")


def _random_scalar(mesh, rng, lo=0.5, hi=2.0):
    return ScalarField(mesh, rng.uniform(lo, hi, mesh.n_cells))


def _random_velocity(mesh, rng):
    return VelocityField(mesh, [rng.standard_normal(mesh.faces[i].count)
                                for i in range(mesh.dim)])


def check_duality(mesh: MacMesh, trials: int = 100, seed: int = 0,
                  tol: float = 1e-12) -> IdentityReport:
    """Dual divergence tested against a velocity equals the diamond-volume
    pairing of the flux reconstruction with the dual gradient.

    Checked per direction on random (density, velocity, test velocity)
    triples; the residual is relative to the magnitude of the two sides.
    """
    if min(mesh.cells) < 1:
        raise ValueError("mesh must have at least one cell per direction")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        rho = _random_scalar(mesh, rng)
        v = _random_velocity(mesh, rng)
        w = _random_velocity(mesh, rng)
        fluxes = ops.upwind_face_flux(mesh, rho, v)
        dd = ops.div_dual_from_fluxes(mesh, fluxes)
        for i in range(mesh.dim):
            fs = mesh.faces[i]
            lhs = float((fs.dvol * dd[i]) @ w.components[i])
            rhs = ops.dual_pairing(
                mesh, i, ops.flux_reconstruction(mesh, fluxes, i),
                ops.dual_gradient(mesh, i, w))
            scale = max(1.0, abs(lhs), abs(rhs))
            worst = max(worst, abs(lhs - rhs) / scale)
    return IdentityReport("duality identity", trials, worst, tol,
                          worst <= tol)


def check_adjointness(mesh: MacMesh, trials: int = 100, seed: int = 0,
                      tol: float = 1e-12) -> IdentityReport:
    """Pressure gradient is minus the transpose of the velocity divergence
    under the volume-weighted inner products."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        p = ScalarField(mesh, rng.standard_normal(mesh.n_cells))
        v = _random_velocity(mesh, rng)
        div = ops.div_velocity(mesh, v)
        a = float((mesh.cell_volume * p.values) @ div)
        g = ops.grad_pressure(mesh, p)
        b = sum(float((mesh.faces[i].dvol * g[i]) @ v.components[i])
                for i in range(mesh.dim))
        worst = max(worst, abs(a + b) / max(1.0, abs(a), abs(b)))
    return IdentityReport("gradient/divergence adjointness", trials, worst,
                          tol, worst <= tol)


def check_coercivity(mesh: MacMesh, trials: int = 100, seed: int = 0,
                     tol: float = 1e-12,
                     symmetry_tol: float = 1e-13) -> IdentityReport:
    """Minus the diffusion operator tested against its own argument equals
    the squared discrete H1 norm; the assembled matrix is symmetric."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        v = _random_velocity(mesh, rng)
        lap = ops.laplacian_apply(mesh, v)
        a = -sum(float((mesh.faces[i].dvol * lap[i]) @ v.components[i])
                 for i in range(mesh.dim))
        b = norm_h1_squared(v)
        worst = max(worst, abs(a - b) / max(1.0, abs(a), abs(b)))

    asym = 0.0
    definite = True
    for i in range(mesh.dim):
        mat = ops.diffusion_matrix(mesh, i)
        if mat.shape[0] == 0:
            continue
        scale = max(1.0, abs(mat).max())
        diff = abs(mat - mat.T)
        asym = max(asym, (diff.max() / scale) if diff.nnz else 0.0)
        vec = rng.standard_normal(mat.shape[0])
        definite = definite and float(vec @ (mat @ vec)) > 0.0
    passed = worst <= tol and asym <= symmetry_tol and definite
    return IdentityReport(
        "diffusion coercivity and symmetry", trials, worst, tol, passed,
        extras={"matrix_asymmetry": asym, "symmetry_tol": symmetry_tol,
                "positive_definite": definite})


def check_kinetic(mesh: MacMesh, before, after, dt: float,
                  forcing_arrays=None, tol: float = 1e-9) -> IdentityReport:
    """Per-face kinetic energy balance between two consecutive states.

    Re-evaluates every term of the momentum equation from the returned
    fields (time term split by the dual mass balance, convection paired
    with half the dual mass divergence, diffusion, pressure gradient,
    forcing, and the nonpositive remainder) and reports the worst
    volume-scaled residual relative to the momentum right-hand side.
    The remainder term is also verified to be nonpositive.
    """
    fluxes = ops.upwind_face_flux(mesh, after.rho, before.u)
    rho_d_new = ops.dual_density(mesh, after.rho)
    rho_d_old = ops.dual_density(mesh, before.rho)
    div_dual = ops.div_dual_from_fluxes(mesh, fluxes)
    conv = ops.convection_apply(mesh, fluxes, after.u)
    lap = ops.laplacian_apply(mesh, after.u)
    grad = ops.grad_pressure(mesh, after.p)

    resid = 0.0
    rhs_sq = 0.0
    u_inf = 0.0
    remainder_max = -math.inf
    for i in range(mesh.dim):
        fs = mesh.faces[i]
        idx = fs.interior_idx
        dv = fs.dvol[idx]
        un = after.u.components[i][idx]
        uo = before.u.components[i][idx]
        rn = rho_d_new[i][idx]
        ro = rho_d_old[i][idx]
        fterm = (np.asarray(forcing_arrays[i])[idx]
                 if forcing_arrays is not None else np.zeros(un.shape))
        remainder = -0.5 * ro * (un - uo) ** 2 / dt
        r = dv * (0.5 * (rn * un ** 2 - ro * uo ** 2) / dt
                  + conv[i][idx] * un
                  - 0.5 * div_dual[i][idx] * un ** 2
                  - lap[i][idx] * un
                  + grad[i][idx] * un
                  - fterm * un
                  - remainder)
        resid += float(r @ r)
        rhs_sq += float(np.sum((dv * (ro * uo / dt + fterm)) ** 2))
        if un.size:
            u_inf = max(u_inf, float(np.abs(un).max()))
        if remainder.size:
            remainder_max = max(remainder_max, float(remainder.max()))
    denom = max(math.sqrt(rhs_sq), 1e-300) * max(1.0, u_inf)
    rel = math.sqrt(resid) / denom
    nonpositive = remainder_max <= 0.0
    return IdentityReport(
        "kinetic energy balance", 1, rel, tol, rel <= tol and nonpositive,
        extras={"remainder_max": remainder_max,
                "remainder_nonpositive": nonpositive})


# -- run-level records ---------------------------------------------------------

@dataclass
class DiagnosticsRecord:
    """Per-step diagnostics of a run plus cumulative energy trackers.

    ``l2h1`` accumulates ``sqrt(sum dt * |u|_h1^2)`` and ``linf_l2`` the
    running maximum of the velocity L2 norm (initial state included).
    """

    steps: list
    l2h1: float
    linf_l2: float
    u_h1_per_step: list[float]
    u_l2_per_step: list[float]
    worst_bound_violation: float
    worst_mass_dual: float
    worst_kinetic: float
    worst_div: float
    rho_l2_monotone: bool


def collect_diagnostics(result: RunResult) -> DiagnosticsRecord:
    """Aggregate a run's per-step diagnostics into the cumulative record."""
    dt = result.dt
    u0 = result.trajectory.u[0]
    h1_sq_sum = 0.0
    linf_l2 = norm_lp_dual(u0, 2)
    u_h1, u_l2 = [], []
    rho_l2_prev = norm_l2_cells(result.trajectory.rho[0])
    monotone = True
    for d in result.diagnostics:
        h1_sq_sum += d.ke_dissipation
        u_h1.append(math.sqrt(d.ke_dissipation / dt))
        u_l2.append(d.u_l2)
        linf_l2 = max(linf_l2, d.u_l2)
        if d.rho_l2 > rho_l2_prev * (1 + 1e-12):
            monotone = False
        rho_l2_prev = d.rho_l2
    return DiagnosticsRecord(
        steps=result.diagnostics,
        l2h1=math.sqrt(h1_sq_sum),
        linf_l2=linf_l2,
        u_h1_per_step=u_h1,
        u_l2_per_step=u_l2,
        worst_bound_violation=max(
            (d.bound_violation for d in result.diagnostics), default=0.0),
        worst_mass_dual=max(
            (d.mass_dual_resid for d in result.diagnostics), default=0.0),
        worst_kinetic=max(
            (d.kinetic_resid for d in result.diagnostics), default=0.0),
        worst_div=max((d.div_l2 for d in result.diagnostics), default=0.0),
        rho_l2_monotone=monotone)


# -- time translates -----------------------------------------------------------

@dataclass
class TranslateReport:
    """Translate integrals of the velocity and their fitted scaling."""

    taus: list[float]
    integrals: list[float]
    slope: float
    scale_factor: float
    dt: float
    slope_floor: float
    passed: bool


def measure_translates(result: RunResult, shifts=(1, 2, 4, 8),
                       slope_floor: float = 0.4) -> TranslateReport:
    """Integrals of the squared L2 distance between the velocity and its
    time translate, for translates of whole steps.

    The trajectory is piecewise constant in time, so each integral is an
    exact finite sum.  The fitted quantity is the log-log slope of the
    integral against (translate + dt); the scaling estimate this probes
    is a square-root upper bound, so the acceptance floor is one-sided
    and below 1/2.  Needs at least 3 usable translate values and a
    trajectory stored at every step.
    """
    traj = result.trajectory
    if len(traj) != result.n_steps + 1:
        raise ValueError("translate measurement needs every step stored")
    times = np.asarray(traj.times)
    gaps = np.diff(times)
    if gaps.size and (gaps.max() - gaps.min()) > 1e-12 * max(result.dt, 1e-300):
        raise ValueError("trajectory is not uniformly spaced")
    dt = result.dt
    mesh = result.mesh
    usable = [int(k) for k in shifts if 0 < k <= result.n_steps - 1]
    if len(usable) < 3:
        raise ValueError(
            f"need at least 3 usable translate shifts, got {len(usable)}")

    integrals = []
    for k in usable:
        total = 0.0
        for n in range(result.n_steps - k):
            ua = traj.u[n + 1]
            ub = traj.u[n + 1 + k]
            diff = VelocityField(mesh, [b - a for a, b in
                                        zip(ua.components, ub.components)])
            total += dt * norm_lp_dual(diff, 2) ** 2
        integrals.append(total)

    taus = [k * dt for k in usable]
    xs = np.log([tau + dt for tau in taus])
    ys = np.log(np.maximum(integrals, 1e-300))
    slope = float(np.polyfit(xs, ys, 1)[0])

    rho_min = min(r.min() for r in traj.rho)
    rho_max = max(r.max() for r in traj.rho)
    diag = collect_diagnostics(result)
    scale = (rho_max / rho_min) * (diag.l2h1 ** 3 + 1.0)
    return TranslateReport(taus=taus, integrals=integrals, slope=slope,
                           scale_factor=scale, dt=dt,
                           slope_floor=slope_floor,
                           passed=slope >= slope_floor)


# -- convergence study ---------------------------------------------------------

@dataclass
class ConvergenceLevel:
    cells: tuple
    h: float
    dt: float
    eta: float
    err_u: float
    err_rho: float
    err_p: float
    l2h1: float = 0.0
    linf_l2: float = 0.0


@dataclass
class ConvergenceReport:
    levels: list[ConvergenceLevel]
    factors_u: list[float]
    factors_rho: list[float]
    threshold: float
    passed: bool


def _space_time_errors(result: RunResult, problem):
    """L2-in-time errors of a stored-every-step run against exact fields."""
    mesh = result.mesh
    dt = result.dt
    traj = result.trajectory
    err_u_sq = err_rho_sq = err_p_sq = 0.0
    for n in range(1, len(traj)):
        tv = traj.times[n]
        u_ref = fortin_interpolate(mesh, problem.u_exact(tv))
        diff = VelocityField(mesh, [a - b for a, b in
                                    zip(traj.u[n].components,
                                        u_ref.components)])
        err_u_sq += dt * norm_lp_dual(diff, 2) ** 2
        rho_ref = cell_average(mesh, problem.rho_exact(tv))
        err_rho_sq += dt * norm_l2_cells(
            ScalarField(mesh, traj.rho[n].values - rho_ref.values)) ** 2
        if traj.p[n] is not None and problem.p_exact is not None:
            p_ref = cell_average(mesh, problem.p_exact(tv))
            p_ref_values = p_ref.values - p_ref.mean()
            err_p_sq += dt * norm_l2_cells(
                ScalarField(mesh, traj.p[n].values - p_ref_values)) ** 2
    return math.sqrt(err_u_sq), math.sqrt(err_rho_sq), math.sqrt(err_p_sq)


def convergence_study(problem, levels: int = 3, base_cells: int = 16,
                      t_end: float = 0.25, base_dt: float | None = None,
                      threshold: float = 1.5,
                      solver_method: str = "direct") -> ConvergenceReport:
    """Refine mesh and time step together against the exact solution.

    Level k uses ``base_cells * 2**k`` cells per direction and halves the
    time step each level (proportional policy).  Errors are space-time L2
    norms of velocity, density, and zero-mean-matched pressure.  The
    report passes when both velocity and density errors decrease
    monotonically with reduction factors at least ``threshold``.
    """
    if levels < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    if problem.u_exact is None or problem.rho_exact is None:
        raise ValueError(f"preset {problem.name!r} has no exact solution")
    if base_dt is None:
        base_dt = t_end / (base_cells // 2)

    rows = []
    for k in range(levels):
        cells = base_cells * 2 ** k
        mesh = build_uniform_mesh(problem.domain, (cells,) * problem.dim)
        cfg = SchemeConfig(dt=base_dt / 2 ** k, t_end=t_end,
                           solver_method=solver_method, store_every=1)
        result = run(mesh, problem, cfg)
        err_u, err_rho, err_p = _space_time_errors(result, problem)
        record = collect_diagnostics(result)
        rows.append(ConvergenceLevel(
            cells=(cells,) * problem.dim, h=mesh_step(mesh), dt=result.dt,
            eta=regularity(mesh), err_u=err_u, err_rho=err_rho, err_p=err_p,
            l2h1=record.l2h1, linf_l2=record.linf_l2))

    factors_u = [rows[k].err_u / rows[k + 1].err_u
                 for k in range(len(rows) - 1)]
    factors_rho = [rows[k].err_rho / rows[k + 1].err_rho
                   for k in range(len(rows) - 1)]
    passed = (all(f >= threshold for f in factors_u)
              and all(f >= threshold for f in factors_rho))
    return ConvergenceReport(levels=rows, factors_u=factors_u,
                             factors_rho=factors_rho, threshold=threshold,
                             passed=passed)


# -- monitored quantities -------------------------------------------------------

def project_divergence_free(mesh: MacMesh, u: VelocityField):
    """Closest discretely divergence-free velocity in the dual-volume
    metric, via a saddle solve with identity-scaled momentum."""
    blocks = [sp.diags(mesh.faces[i].dvol[mesh.faces[i].interior_idx])
              for i in range(mesh.dim)]
    momentum = sp.block_diag(blocks, format="csr")
    rhs_u = momentum @ u.pack_interior()
    system = SaddleSystem(mesh, momentum, assemble_gradient(mesh),
                          assemble_divergence(mesh), rhs_u, pinned_cell=0)
    velocity, _, _ = solve_oseen(system, method="direct", tol=1e-10)
    return velocity


def measure_convection_bound(mesh: MacMesh, samples: int = 20,
                             seed: int = 0) -> dict:
    """Observed constants of the convection trilinear bound.

    For random bounded densities, projected divergence-free convecting
    velocities, and random test velocities, reports statistics of
    ``|integral of C(rho,u)v . w|`` over ``max|rho| * |u|_h1 * |v|_h1 *
    |w|_h1``.  Monitored across refinement; no universal constant is
    asserted.
    """
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(samples):
        rho = _random_scalar(mesh, rng, 1.0, 2.0)
        u = project_divergence_free(mesh, _random_velocity(mesh, rng))
        v = _random_velocity(mesh, rng)
        w = _random_velocity(mesh, rng)
        fluxes = ops.upwind_face_flux(mesh, rho, u)
        conv = ops.convection_apply(mesh, fluxes, v)
        tri = sum(float((mesh.faces[i].dvol * conv[i]) @ w.components[i])
                  for i in range(mesh.dim))
        denom = (rho.values.max() * norm_h1(u) * norm_h1(v) * norm_h1(w))
        if denom > 0:
            ratios.append(abs(tri) / denom)
    arr = np.asarray(ratios)
    return {"max": float(arr.max()), "mean": float(arr.mean()),
            "samples": int(arr.size), "eta": regularity(mesh)}


def infsup_health(mesh: MacMesh) -> dict:
    """Smallest nonzero singular value of the scaled divergence block.

    The divergence block is normalized by the square roots of the cell
    volumes (rows) and of the component diffusion forms (columns), which
    makes the value the discrete inf-sup constant of the velocity H1 /
    zero-mean-pressure pairing.  Dense computation; intended for small
    monitoring meshes.
    """
    if mesh.n_cells > 4096:
        raise ValueError("inf-sup monitor is a dense, small-mesh diagnostic")
    div = assemble_divergence(mesh).toarray()
    blocks = [ops.diffusion_matrix(mesh, i).toarray()
              for i in range(mesh.dim)]
    cols = []
    for i, blk in enumerate(blocks):
        if blk.shape[0] == 0:
            continue
        w, q = la.eigh(blk)
        w = np.maximum(w, 1e-300)
        cols.append(q @ np.diag(1.0 / np.sqrt(w)) @ q.T)
    inv_sqrt = la.block_diag(*cols) if cols else np.zeros((0, 0))
    scaled = np.diag(1.0 / np.sqrt(mesh.cell_volume)) @ div @ inv_sqrt
    svals = np.sort(la.svd(scaled, compute_uv=False))
    # one zero singular value from the constant-pressure nullspace
    nonzero = svals[svals > 1e-10 * max(svals.max(), 1e-300)]
    beta = float(nonzero.min()) if nonzero.size else 0.0
    return {"beta": beta, "n_cells": mesh.n_cells,
            "nullspace_dim": int(svals.size - nonzero.size)}


# -- report output ---------------------------------------------------------------

def write_identity_reports(reports, path, cfg_hash=None, seed=None):
    """One CSV row per identity battery plus PASS/FAIL flags."""
    with atomic_write(path) as fh:
        standard_header(fh, "identity-reports", cfg_hash, seed=seed)
        writer = csv.writer(fh)
        writer.writerow(["name", "trials", "max_residual", "tolerance",
                         "passed"])
        for r in reports:
            writer.writerow([r.name, r.trials, format_float(r.max_residual),
                             format_float(r.tolerance), r.passed])


def write_diagnostics_csv(result: RunResult, path, cfg_hash=None, seed=None):
    """Per-step diagnostics time series of a run."""
    record = collect_diagnostics(result)
    columns = ["step", "t", "rho_min", "rho_max", "rho_l2", "mass",
               "bound_violation", "div_l2", "kinetic_energy",
               "ke_dissipation", "ke_numerical", "ke_work",
               "mass_dual_resid", "kinetic_resid", "kinetic_remainder_max",
               "u_h1", "u_l2", "transport_residual", "oseen_residual",
               "oseen_iterations"]
    with atomic_write(path) as fh:
        standard_header(fh, "run-diagnostics", cfg_hash, seed=seed,
                        extra={"l2h1": format_float(record.l2h1),
                               "linf_l2": format_float(record.linf_l2)})
        writer = csv.writer(fh)
        writer.writerow(columns)
        for d, h1, l2 in zip(record.steps, record.u_h1_per_step,
                             record.u_l2_per_step):
            writer.writerow([
                d.step, format_float(d.t), format_float(d.rho_min),
                format_float(d.rho_max), format_float(d.rho_l2),
                format_float(d.mass), format_float(d.bound_violation),
                format_float(d.div_l2), format_float(d.kinetic_energy),
                format_float(d.ke_dissipation),
                format_float(d.ke_numerical), format_float(d.ke_work),
                format_float(d.mass_dual_resid),
                format_float(d.kinetic_resid),
                format_float(d.kinetic_remainder_max),
                format_float(h1), format_float(l2),
                format_float(d.transport_residual),
                format_float(d.oseen_residual), d.oseen_iterations])


def write_translate_csv(report: TranslateReport, path, cfg_hash=None):
    with atomic_write(path) as fh:
        standard_header(fh, "translate-report", cfg_hash,
                        extra={"slope": format_float(report.slope),
                               "scale_factor":
                                   format_float(report.scale_factor),
                               "passed": report.passed})
        writer = csv.writer(fh)
        writer.writerow(["tau", "integral"])
        for tau, val in zip(report.taus, report.integrals):
            writer.writerow([format_float(tau), format_float(val)])


def write_convergence_csv(report: ConvergenceReport, path, cfg_hash=None):
    with atomic_write(path) as fh:
        standard_header(fh, "convergence-report", cfg_hash,
                        extra={"threshold": format_float(report.threshold),
                               "passed": report.passed})
        writer = csv.writer(fh)
        writer.writerow(["cells", "h", "dt", "eta", "err_u", "err_rho",
                         "err_p", "l2h1", "linf_l2"])
        for lv in report.levels:
            writer.writerow(["x".join(map(str, lv.cells)),
                             format_float(lv.h), format_float(lv.dt),
                             format_float(lv.eta), format_float(lv.err_u),
                             format_float(lv.err_rho),
                             format_float(lv.err_p),
                             format_float(lv.l2h1),
                             format_float(lv.linf_l2)])
