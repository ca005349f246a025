"""Linear systems of the time step: upwind transport and momentum saddle.

Both systems are volume-scaled (each cell/face equation is multiplied by
its control volume), which makes the pressure-gradient block exactly minus
the transpose of the divergence block and keeps the transport matrix an
M-matrix whenever the advecting velocity is discretely divergence-free.

The saddle system is singular up to a constant pressure; it is regularized
by replacing one continuity row with a pressure pin (the divergence
constraint on the pinned cell is implied by the others, since the column
sums of the divergence block vanish), and the solved pressure is shifted
to zero volume-weighted mean afterwards.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import MacMesh
from .fields import ScalarField, VelocityField, n_interior_dofs
from . import operators as ops


class SolverFailure(RuntimeError):
    """A linear solve did not reach its required residual tolerance."""


@dataclass
class SolveReport:
    """Outcome of one linear solve."""

    system: str
    method: str
    n_unknowns: int
    residual: float
    tolerance: float
    converged: bool
    iterations: int = 0
    fallback: bool = False
    pinned_cell: int | None = None
    mean_shift: float | None = None
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)


# -- transport ---------------------------------------------------------------

def assemble_transport(mesh: MacMesh, dt: float, rho_old: ScalarField,
                       u: VelocityField):
    """Implicit upwind transport system ``A rho_new = b``.

    Row K: ``|K|/dt * rho_K + sum of outgoing upwind fluxes``, linear in
    the new density; ``b = |K| rho_old / dt``.  The off-diagonal entries
    are nonpositive and, for divergence-free ``u``, both row and column
    sums of the flux part vanish, which yields the discrete maximum
    principle and the L2 contraction of the solve.
    """
    rows, cols, vals = [], [], []
    diag = mesh.cell_volume / dt
    rows.append(np.arange(mesh.n_cells))
    cols.append(np.arange(mesh.n_cells))
    vals.append(diag)
    for i in range(mesh.dim):
        fs = mesh.faces[i]
        idx = fs.interior_idx
        vel = u.components[i][idx]
        rate = fs.measure[idx] * vel
        lo = fs.cell_lo[idx]
        hi = fs.cell_hi[idx]
        upw = np.where(vel >= 0.0, lo, hi)
        rows.append(lo)
        cols.append(upw)
        vals.append(rate)
        rows.append(hi)
        cols.append(upw)
        vals.append(-rate)
    mat = sp.coo_matrix(
        (np.concatenate(vals),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_cells, mesh.n_cells)).tocsr()
    rhs = mesh.cell_volume * rho_old.values / dt
    return mat, rhs


def solve_transport(mesh: MacMesh, dt: float, rho_old: ScalarField,
                    u: VelocityField, tol: float = 1e-12):
    """Advance the density by one implicit upwind transport step."""
    start = time.perf_counter()
    mat, rhs = assemble_transport(mesh, dt, rho_old, u)
    lu = spla.splu(mat.tocsc())
    values = lu.solve(rhs)
    resid = np.linalg.norm(mat @ values - rhs)
    scale = np.linalg.norm(rhs)
    rel = resid / scale if scale > 0 else resid
    report = SolveReport(
        system="transport", method="direct", n_unknowns=mesh.n_cells,
        residual=float(rel), tolerance=tol, converged=bool(rel <= tol),
        wall_time=time.perf_counter() - start)
    if not report.converged:
        raise SolverFailure(
            f"transport solve residual {rel:.3e} exceeds {tol:.1e}")
    return ScalarField(mesh, values), report


# -- momentum/pressure saddle system ------------------------------------------

class SaddleSystem:
    """Assembled one-step momentum and continuity equations.

    Blocks (volume-scaled):
      momentum : per interior face, ``dvol*rho_dual_new/dt`` on the
                 diagonal plus diffusion plus convection by the frozen
                 upwind mass fluxes;
      grad     : face rows, ``+measure`` on the high cell and ``-measure``
                 on the low cell;
      div      : cell rows, signed face measures (assembled independently
                 from the cell outflow stencil; equals minus the transpose
                 of grad).
    """

    def __init__(self, mesh, momentum, grad, div, rhs_u, pinned_cell):
        self.mesh = mesh
        self.momentum = momentum
        self.grad = grad
        self.div = div
        self.rhs_u = rhs_u
        self.pinned_cell = int(pinned_cell)
        self.n_u = momentum.shape[0]
        self.n_p = div.shape[0]

    def full_matrix(self) -> sp.csr_matrix:
        """Pinned saddle matrix (one continuity row swapped for the pin)."""
        mat = sp.bmat([[self.momentum, self.grad],
                       [self.div, None]], format="lil")
        row = self.n_u + self.pinned_cell
        mat.rows[row] = [row]
        mat.data[row] = [1.0]
        return mat.tocsr()

    def full_rhs(self) -> np.ndarray:
        rhs = np.concatenate([self.rhs_u, np.zeros(self.n_p)])
        rhs[self.n_u + self.pinned_cell] = 0.0
        return rhs


def assemble_divergence(mesh: MacMesh) -> sp.csr_matrix:
    """Volume-scaled divergence block from the cell outflow stencil.

    Row K sums ``measure * u`` over K's faces with outflow sign, columns
    indexed by interior-face unknowns (wall faces carry no unknown).
    """
    rows, cols, vals = [], [], []
    offset = 0
    for i in range(mesh.dim):
        fs = mesh.faces[i]
        c1 = mesh.dual_case1[i]
        for faces, sign in ((c1.face_hi, 1.0), (c1.face_lo, -1.0)):
            dof = fs.interior_dof[faces]
            keep = dof >= 0
            rows.append(c1.cell[keep])
            cols.append(offset + dof[keep])
            vals.append(sign * fs.measure[faces[keep]])
        offset += fs.n_interior
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_cells, offset)).tocsr()


def assemble_gradient(mesh: MacMesh) -> sp.csr_matrix:
    """Volume-scaled pressure gradient block from the face stencil.

    Row sigma is ``measure * (p_hi - p_lo)``; built from the face
    adjacency, independently of :func:`assemble_divergence`.
    """
    rows, cols, vals = [], [], []
    offset = 0
    for i in range(mesh.dim):
        fs = mesh.faces[i]
        idx = fs.interior_idx
        dof = offset + fs.interior_dof[idx]
        rows.extend([dof, dof])
        cols.extend([fs.cell_hi[idx], fs.cell_lo[idx]])
        vals.extend([fs.measure[idx], -fs.measure[idx]])
        offset += fs.n_interior
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(offset, mesh.n_cells)).tocsr()


def assemble_oseen(mesh: MacMesh, dt: float, rho_new: ScalarField,
                   rho_old: ScalarField, u_old: VelocityField,
                   forcing=None, pinned_cell: int = 0) -> SaddleSystem:
    """Build the linearized momentum/continuity system of one time step.

    Convection uses the upwind mass fluxes of ``(rho_new, u_old)``, the
    same fluxes that transported the density, which is what makes the
    dual mass balance and the kinetic energy identity exact.  ``forcing``
    is an optional list of per-direction face arrays (point values of the
    momentum source at face centers).
    """
    fluxes = ops.upwind_face_flux(mesh, rho_new, u_old)
    rho_d_new = ops.dual_density(mesh, rho_new)
    rho_d_old = ops.dual_density(mesh, rho_old)

    blocks = []
    rhs_parts = []
    for i in range(mesh.dim):
        fs = mesh.faces[i]
        idx = fs.interior_idx
        mass = sp.diags(fs.dvol[idx] * rho_d_new[i][idx] / dt)
        block = (mass + ops.diffusion_matrix(mesh, i)
                 + ops.convection_matrix(mesh, fluxes, i))
        blocks.append(block.tocsr())
        rhs = fs.dvol[idx] * rho_d_old[i][idx] * u_old.components[i][idx] / dt
        if forcing is not None:
            rhs = rhs + fs.dvol[idx] * np.asarray(forcing[i])[idx]
        rhs_parts.append(rhs)

    momentum = sp.block_diag(blocks, format="csr")
    grad = assemble_gradient(mesh)
    div = assemble_divergence(mesh)
    return SaddleSystem(mesh, momentum, grad, div,
                        np.concatenate(rhs_parts), pinned_cell)


def _schur_preconditioner(system: SaddleSystem):
    """Block LDU preconditioner with a diagonal-momentum Schur complement."""
    n_u, n_p = system.n_u, system.n_p
    lu_a = spla.splu(system.momentum.tocsc())
    inv_diag = 1.0 / system.momentum.diagonal()
    schur = (system.div @ sp.diags(inv_diag) @ system.grad).tolil()
    schur.rows[system.pinned_cell] = [system.pinned_cell]
    schur.data[system.pinned_cell] = [1.0]
    lu_s = spla.splu(schur.tocsc())
    div_pinned = system.div.tolil()
    div_pinned.rows[system.pinned_cell] = []
    div_pinned.data[system.pinned_cell] = []
    div_pinned = div_pinned.tocsr()

    def apply(r):
        r_u, r_p = r[:n_u], r[n_u:]
        z_u = lu_a.solve(r_u)
        z_p = lu_s.solve(div_pinned @ z_u - r_p)
        z_u = lu_a.solve(r_u - system.grad @ z_p)
        return np.concatenate([z_u, z_p])

    return spla.LinearOperator((n_u + n_p, n_u + n_p), matvec=apply)


def solve_oseen(system: SaddleSystem, method: str = "direct",
                tol: float = 1e-10, gmres_restart: int = 50,
                gmres_maxiter: int = 300):
    """Solve the saddle system for (velocity, pressure).

    Returns interior velocity unknowns, the zero-mean pressure field, and
    a report.  ``method`` is ``direct`` (sparse LU) or ``gmres`` (Krylov
    on the pinned matrix with a block LDU preconditioner; falls back to
    the direct path if it stagnates).
    """
    start = time.perf_counter()
    mesh = system.mesh
    mat = system.full_matrix()
    rhs = system.full_rhs()
    scale = np.linalg.norm(rhs)
    iterations = 0
    fallback = False

    solution = None
    used = method
    if method == "gmres":
        counter = {"n": 0}

        def cb(_):
            counter["n"] += 1

        precond = _schur_preconditioner(system)
        solution, info = spla.gmres(
            mat, rhs, rtol=tol * 0.1, atol=0.0, restart=gmres_restart,
            maxiter=gmres_maxiter, M=precond, callback=cb,
            callback_type="pr_norm")
        iterations = counter["n"]
        if info != 0:
            fallback = True
            solution = None
    elif method != "direct":
        raise ValueError(f"unknown solver method {method!r}")

    if solution is None:
        used = "direct"
        lu = spla.splu(mat.tocsc())
        solution = lu.solve(rhs)

    resid = np.linalg.norm(mat @ solution - rhs)
    rel = resid / scale if scale > 0 else resid

    u_vec = solution[:system.n_u]
    p_values = solution[system.n_u:]
    shift = float(mesh.cell_volume @ p_values) / mesh.volume
    p_values = p_values - shift

    report = SolveReport(
        system="oseen", method=used, n_unknowns=mat.shape[0],
        residual=float(rel), tolerance=tol, converged=bool(rel <= tol),
        iterations=iterations, fallback=fallback,
        pinned_cell=system.pinned_cell, mean_shift=shift,
        wall_time=time.perf_counter() - start)
    if not report.converged:
        raise SolverFailure(
            f"saddle solve residual {rel:.3e} exceeds {tol:.1e}")
    velocity = VelocityField.from_interior(mesh, u_vec)
    pressure = ScalarField(mesh, p_values, zero_mean=True)
    return velocity, pressure, report
