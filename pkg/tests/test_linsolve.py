"""Transport and saddle solvers against dense oracles and structure checks."""

import numpy as np
import pytest
import scipy.sparse as sp

from macflow.grid import build_mesh, build_uniform_mesh
from macflow.fields import ScalarField, VelocityField, norm_l2_cells
from macflow import operators as ops
from macflow.linsolve import (SolverFailure, assemble_divergence,
                              assemble_gradient, assemble_oseen,
                              assemble_transport, solve_oseen,
                              solve_transport)
from macflow.verify import project_divergence_free

from conftest import graded_mesh


def random_velocity(mesh, rng):
    return VelocityField(mesh, [rng.standard_normal(mesh.faces[i].count)
                                for i in range(mesh.dim)])


def stream_function_velocity(mesh, seed=0):
    """Exactly divergence-free velocity from a random vertex stream
    function vanishing on the boundary (2D only)."""
    rng = np.random.default_rng(seed)
    nx, ny = mesh.cells
    psi = np.zeros((nx + 1, ny + 1))
    psi[1:nx, 1:ny] = rng.standard_normal((nx - 1, ny - 1))
    dx, dy = mesh.spacings
    ux = (psi[:, 1:] - psi[:, :-1]) / dy
    uy = -(psi[1:, :] - psi[:-1, :]) / dx[:, None]
    return VelocityField(mesh, [ux.ravel(), uy.ravel()])


# -- transport ------------------------------------------------------------------

class TestTransport:
    def test_zero_velocity_is_identity(self, any_mesh):
        rng = np.random.default_rng(0)
        rho = ScalarField(any_mesh, rng.uniform(1, 2, any_mesh.n_cells))
        rho_new, report = solve_transport(any_mesh, 0.1, rho,
                                          VelocityField.zeros(any_mesh))
        np.testing.assert_allclose(rho_new.values, rho.values, rtol=1e-13)
        assert report.converged

    def test_constant_density_preserved_divfree(self, mesh2_graded):
        # divergence-free advection leaves constants exactly invariant
        u = stream_function_velocity(mesh2_graded, seed=1)
        assert np.abs(ops.div_velocity(mesh2_graded, u)).max() < 1e-12
        rho = ScalarField.constant(mesh2_graded, 1.7)
        rho_new, _ = solve_transport(mesh2_graded, 0.05, rho, u)
        np.testing.assert_allclose(rho_new.values, 1.7, rtol=1e-12)

    def test_column_advection_dense_oracle(self):
        # 8 cells in a row, constant rightward velocity: the matrix is
        # lower bidiagonal; build it densely by hand and compare solves
        n = 8
        mesh = build_mesh([[0.0, float(n)], [0.0, 1.0]],
                          [np.arange(n + 1, dtype=float), [0.0, 1.0]])
        dt = 0.3
        vel = 1.25
        comps = [np.full(mesh.faces[0].count, vel), np.zeros(2 * n)]
        u = VelocityField(mesh, comps)  # walls zeroed automatically
        rng = np.random.default_rng(2)
        rho = ScalarField(mesh, rng.uniform(1.0, 2.0, n))

        dense = np.zeros((n, n))
        for k in range(n):
            dense[k, k] = 1.0 / dt  # |K| = 1
            # outflow through the right face (upwind = this cell),
            # except the last cell whose right face is a wall
            if k < n - 1:
                dense[k, k] += vel
            # inflow through the left face (upwind = left neighbour)
            if k > 0:
                dense[k, k - 1] -= vel
        expected = np.linalg.solve(dense, rho.values / dt)

        rho_new, _ = solve_transport(mesh, dt, rho, u)
        np.testing.assert_allclose(rho_new.values, expected, rtol=1e-12)

    def test_matrix_sign_pattern(self, mesh2_graded):
        # M-matrix shape: positive diagonal, nonpositive off-diagonal
        u = stream_function_velocity(mesh2_graded, seed=3)
        mat, _ = assemble_transport(mesh2_graded, 0.1,
                                    ScalarField.constant(mesh2_graded, 1.0),
                                    u)
        dense = mat.toarray()
        assert np.all(np.diag(dense) > 0)
        off = dense - np.diag(np.diag(dense))
        assert np.all(off <= 1e-15)

    def test_row_and_column_sums_divfree(self, mesh2_graded):
        # for divergence-free u the flux part has zero row and column
        # sums: rows sum to |K|/dt and so do columns
        mesh = mesh2_graded
        dt = 0.07
        u = stream_function_velocity(mesh, seed=4)
        mat, _ = assemble_transport(mesh, dt,
                                    ScalarField.constant(mesh, 1.0), u)
        dense = mat.toarray()
        np.testing.assert_allclose(dense.sum(axis=1),
                                   mesh.cell_volume / dt, rtol=1e-10)
        np.testing.assert_allclose(dense.sum(axis=0),
                                   mesh.cell_volume / dt, rtol=1e-10)

    def test_max_principle_divfree(self, mesh2_graded):
        mesh = mesh2_graded
        u = stream_function_velocity(mesh, seed=5)
        rng = np.random.default_rng(6)
        rho = ScalarField(mesh, rng.uniform(1.0, 2.0, mesh.n_cells))
        cur = rho
        for _ in range(5):
            cur, _ = solve_transport(mesh, 0.05, cur, u)
            assert cur.min() >= rho.min() - 1e-12
            assert cur.max() <= rho.max() + 1e-12

    def test_l2_contraction_divfree(self, mesh2_graded):
        mesh = mesh2_graded
        u = stream_function_velocity(mesh, seed=7)
        rng = np.random.default_rng(8)
        rho = ScalarField(mesh, rng.standard_normal(mesh.n_cells))
        prev = norm_l2_cells(rho)
        cur = rho
        for _ in range(5):
            cur, _ = solve_transport(mesh, 0.05, cur, u)
            now = norm_l2_cells(cur)
            assert now <= prev * (1 + 1e-12)
            prev = now

    def test_no_bound_enforcement_in_solver(self):
        # one row of cells with uniform rightward velocity: the leftmost
        # cell drains and falls below the initial minimum.  The solver
        # must return that solution rather than clip it; bound guarding
        # belongs to the time loop, which knows the problem's invariants.
        n = 8
        mesh = build_mesh([[0.0, float(n)], [0.0, 1.0]],
                          [np.arange(n + 1, dtype=float), [0.0, 1.0]])
        comps = [np.full(mesh.faces[0].count, 1.0), np.zeros(2 * n)]
        u = VelocityField(mesh, comps)
        rho = ScalarField.constant(mesh, 1.0)
        rho_new, report = solve_transport(mesh, 0.5, rho, u)
        assert report.converged
        assert rho_new.min() < 1.0 - 1e-3  # genuinely below the old min
        assert rho_new.integral() == pytest.approx(rho.integral(),
                                                   rel=1e-12)

    def test_mass_conserved_any_velocity(self, any_mesh):
        # impervious walls conserve total mass even for non-solenoidal u
        rng = np.random.default_rng(9)
        rho = ScalarField(any_mesh, rng.uniform(1, 2, any_mesh.n_cells))
        u = random_velocity(any_mesh, rng)
        rho_new, _ = solve_transport(any_mesh, 0.02, rho, u)
        assert rho_new.integral() == pytest.approx(rho.integral(),
                                                   rel=1e-12)


# -- saddle blocks ----------------------------------------------------------------

class TestSaddleBlocks:
    def test_gradient_is_minus_divergence_transpose(self, any_mesh):
        grad = assemble_gradient(any_mesh)
        div = assemble_divergence(any_mesh)
        diff = (grad + div.T).tocoo()
        scale = max(abs(grad).max(), 1.0)
        worst = np.abs(diff.data).max() if diff.nnz else 0.0
        assert worst <= 1e-13 * scale

    def test_divergence_block_matches_operator(self, any_mesh):
        rng = np.random.default_rng(10)
        u = random_velocity(any_mesh, rng)
        div_vec = assemble_divergence(any_mesh) @ u.pack_interior()
        expect = any_mesh.cell_volume * ops.div_velocity(any_mesh, u)
        np.testing.assert_allclose(div_vec, expect, rtol=1e-12, atol=1e-13)

    def test_divergence_columns_sum_to_zero(self, any_mesh):
        # each interior face appears in exactly two cells with opposite
        # signs, so the constant pressure is always in the left nullspace
        div = assemble_divergence(any_mesh)
        col_sums = np.asarray(div.sum(axis=0)).ravel()
        assert np.abs(col_sums).max() < 1e-12

    def test_symmetric_part_positive_definite(self, mesh2_graded):
        # momentum block = mass/dt + diffusion + convection, where the
        # convection's symmetric part is the dual mass divergence; the
        # whole symmetric part equals mass-dual/dt-average + diffusion
        mesh = mesh2_graded
        rng = np.random.default_rng(11)
        dt = 0.05
        rho_old = ScalarField(mesh, rng.uniform(1.0, 2.0, mesh.n_cells))
        u_old = random_velocity(mesh, rng)
        rho_new, _ = solve_transport(mesh, dt, rho_old, u_old)
        system = assemble_oseen(mesh, dt, rho_new, rho_old, u_old)
        a = system.momentum.toarray()
        sym = 0.5 * (a + a.T)
        eigs = np.linalg.eigvalsh(sym)
        assert eigs.min() > 0

        # identity: sym(A) = diag(dvol*(rho_new+rho_old)/(2 dt)) + L
        rho_d_new = ops.dual_density(mesh, rho_new)
        rho_d_old = ops.dual_density(mesh, rho_old)
        blocks = []
        for i in range(mesh.dim):
            fs = mesh.faces[i]
            idx = fs.interior_idx
            d = fs.dvol[idx] * (rho_d_new[i][idx]
                                + rho_d_old[i][idx]) / (2 * dt)
            blocks.append(sp.diags(d) + ops.diffusion_matrix(mesh, i))
        expected = sp.block_diag(blocks).toarray()
        np.testing.assert_allclose(sym, expected, rtol=1e-10, atol=1e-12)


# -- saddle solves ----------------------------------------------------------------

class TestOseenSolve:
    def test_zero_data_zero_solution(self, mesh2_uniform):
        mesh = mesh2_uniform
        rho = ScalarField.constant(mesh, 1.0)
        system = assemble_oseen(mesh, 0.1, rho, rho,
                                VelocityField.zeros(mesh))
        u, p, report = solve_oseen(system)
        for c in u.components:
            assert np.abs(c).max() < 1e-14
        assert np.abs(p.values).max() < 1e-14
        assert report.converged and report.pinned_cell == 0

    def test_matches_dense_solve(self):
        # full pipeline vs a dense numpy solve with the same pin and the
        # same zero-mean shift, on a mesh small enough to invert densely
        mesh = graded_mesh((6, 5), seed=12)
        rng = np.random.default_rng(13)
        dt = 0.04
        rho_old = ScalarField(mesh, rng.uniform(1.0, 2.0, mesh.n_cells))
        u_old = random_velocity(mesh, rng)
        rho_new, _ = solve_transport(mesh, dt, rho_old, u_old)
        forcing = [rng.standard_normal(mesh.faces[i].count)
                   for i in range(mesh.dim)]
        system = assemble_oseen(mesh, dt, rho_new, rho_old, u_old,
                                forcing=forcing)

        dense = system.full_matrix().toarray()
        rhs = system.full_rhs()
        sol = np.linalg.solve(dense, rhs)
        p_dense = sol[system.n_u:]
        p_dense = p_dense - (mesh.cell_volume @ p_dense) / mesh.volume

        u, p, _ = solve_oseen(system)
        np.testing.assert_allclose(u.pack_interior(), sol[:system.n_u],
                                   rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(p.values, p_dense, rtol=1e-10,
                                   atol=1e-12)

    def test_solution_is_divergence_free(self, any_mesh):
        rng = np.random.default_rng(14)
        dt = 0.05
        rho_old = ScalarField(any_mesh,
                              rng.uniform(1.0, 2.0, any_mesh.n_cells))
        u_old = random_velocity(any_mesh, rng)
        rho_new, _ = solve_transport(any_mesh, dt, rho_old, u_old)
        system = assemble_oseen(any_mesh, dt, rho_new, rho_old, u_old)
        u, _, _ = solve_oseen(system)
        div = ops.div_velocity(any_mesh, u)
        assert norm_l2_cells(ScalarField(any_mesh, div)) < 1e-10

    def test_gmres_matches_direct(self, mesh2_uniform):
        mesh = mesh2_uniform
        rng = np.random.default_rng(15)
        dt = 0.05
        rho_old = ScalarField(mesh, rng.uniform(1.0, 2.0, mesh.n_cells))
        u_old = random_velocity(mesh, rng)
        rho_new, _ = solve_transport(mesh, dt, rho_old, u_old)
        forcing = [rng.standard_normal(mesh.faces[i].count)
                   for i in range(mesh.dim)]
        sys_d = assemble_oseen(mesh, dt, rho_new, rho_old, u_old,
                               forcing=forcing)
        u_d, p_d, _ = solve_oseen(sys_d, method="direct")
        u_g, p_g, rep = solve_oseen(sys_d, method="gmres", tol=1e-10)
        assert rep.converged
        np.testing.assert_allclose(u_g.pack_interior(), u_d.pack_interior(),
                                   rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(p_g.values, p_d.values, rtol=1e-8,
                                   atol=1e-10)

    def test_unknown_method_rejected(self, mesh2_uniform):
        rho = ScalarField.constant(mesh2_uniform, 1.0)
        system = assemble_oseen(mesh2_uniform, 0.1, rho, rho,
                                VelocityField.zeros(mesh2_uniform))
        with pytest.raises(ValueError):
            solve_oseen(system, method="bogus")

    def test_pressure_mean_shift_recorded(self, mesh2_graded):
        mesh = mesh2_graded
        rng = np.random.default_rng(16)
        dt = 0.05
        rho_old = ScalarField(mesh, rng.uniform(1.0, 2.0, mesh.n_cells))
        u_old = random_velocity(mesh, rng)
        rho_new, _ = solve_transport(mesh, dt, rho_old, u_old)
        forcing = [rng.standard_normal(mesh.faces[i].count)
                   for i in range(mesh.dim)]
        system = assemble_oseen(mesh, dt, rho_new, rho_old, u_old,
                                forcing=forcing)
        _, p, report = solve_oseen(system)
        assert report.mean_shift is not None
        assert abs(mesh.cell_volume @ p.values) < 1e-10
        assert p.zero_mean


class TestProjection:
    def test_projection_is_divergence_free_and_idempotent(self,
                                                          mesh2_graded):
        mesh = mesh2_graded
        rng = np.random.default_rng(17)
        u = random_velocity(mesh, rng)
        pu = project_divergence_free(mesh, u)
        assert np.abs(ops.div_velocity(mesh, pu)).max() < 1e-9
        ppu = project_divergence_free(mesh, pu)
        np.testing.assert_allclose(ppu.pack_interior(), pu.pack_interior(),
                                   rtol=1e-9, atol=1e-11)
