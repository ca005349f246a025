"""Discrete fields on staggered meshes, norms, interpolation, and I/O.

A scalar field holds one value per primal cell; a velocity field holds one
value per face for each component, with exterior faces pinned to zero (the
no-slip wall condition lives in the data layout, not in the operators).

Velocity norms are taken over the face-centered control volumes, which for
each component partition the domain; scalar norms use the primal cells.
The discrete H1 seminorm is the square root of the quadratic form of the
velocity diffusion operator: squared jumps across dual interfaces weighted
by measure/distance, plus wall terms against the zero boundary value.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .grid import MacMesh
from .ioutil import atomic_write, format_float, standard_header

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(3)


def _interval_rule(lo, hi):
    """Gauss nodes/weights on [lo, hi] per interval (arrays of intervals)."""
    lo = np.asarray(lo)[..., None]
    hi = np.asarray(hi)[..., None]
    nodes = 0.5 * (hi - lo) * _GAUSS_NODES + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * _GAUSS_WEIGHTS
    return nodes, weights


class ScalarField:
    """Cell-centered field: one value per cell in flat C-order.

    A field tagged ``zero_mean`` asserts membership in the zero-mean
    subspace: its volume-weighted sum must vanish within 1e-12 of its L2
    norm (pressures live there).
    """

    def __init__(self, mesh: MacMesh, values=None, zero_mean=False):
        self.mesh = mesh
        if values is None:
            values = np.zeros(mesh.n_cells)
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_cells,):
            raise ValueError(
                f"expected {mesh.n_cells} cell values, got {values.shape}")
        self.values = values
        self.zero_mean = bool(zero_mean)
        if self.zero_mean:
            total = abs(float(mesh.cell_volume @ values))
            scale = float(np.sqrt(mesh.cell_volume @ values ** 2))
            if total > 1e-12 * max(scale, 1e-300) and scale > 0:
                raise ValueError(
                    f"zero-mean field has volume-weighted sum {total:.3e}")

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh)

    @classmethod
    def constant(cls, mesh, value):
        return cls(mesh, np.full(mesh.n_cells, float(value)))

    def copy(self):
        return ScalarField(self.mesh, self.values.copy())

    def integral(self) -> float:
        return float(self.mesh.cell_volume @ self.values)

    def mean(self) -> float:
        return self.integral() / self.mesh.volume

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


class VelocityField:
    """Face-centered vector field; exterior faces are held at zero."""

    def __init__(self, mesh: MacMesh, components=None):
        self.mesh = mesh
        if components is None:
            components = [np.zeros(mesh.faces[i].count)
                          for i in range(mesh.dim)]
        comps = []
        for i in range(mesh.dim):
            arr = np.asarray(components[i], dtype=float)
            if arr.shape != (mesh.faces[i].count,):
                raise ValueError(
                    f"component {i}: expected {mesh.faces[i].count} values")
            arr = arr.copy()
            arr[mesh.faces[i].exterior_idx] = 0.0
            comps.append(arr)
        self.components = comps

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh)

    def copy(self):
        return VelocityField(self.mesh, [c.copy() for c in self.components])

    # -- flat interior-unknown packing, used by the linear solvers -------

    def pack_interior(self) -> np.ndarray:
        return np.concatenate([
            self.components[i][self.mesh.faces[i].interior_idx]
            for i in range(self.mesh.dim)])

    @classmethod
    def from_interior(cls, mesh, vec):
        vec = np.asarray(vec, dtype=float)
        comps = []
        offset = 0
        for i in range(mesh.dim):
            fs = mesh.faces[i]
            arr = np.zeros(fs.count)
            arr[fs.interior_idx] = vec[offset:offset + fs.n_interior]
            offset += fs.n_interior
            comps.append(arr)
        if offset != vec.size:
            raise ValueError("interior vector has wrong length")
        return cls(mesh, comps)


def n_interior_dofs(mesh: MacMesh) -> int:
    return sum(mesh.faces[i].n_interior for i in range(mesh.dim))


def cell_average(mesh: MacMesh, fn) -> ScalarField:
    """Cell means of ``fn(x, y[, z])`` by tensorized 3-point Gauss rules."""
    dim = mesh.dim
    rules = []
    for j in range(dim):
        lo = mesh.axis_coords[j][:-1]
        hi = mesh.axis_coords[j][1:]
        rules.append(_interval_rule(lo, hi))
    idx = np.indices(mesh.cells).reshape(dim, -1)
    total = np.zeros(mesh.n_cells)
    for combo in np.ndindex(*([3] * dim)):
        pts = [rules[j][0][idx[j], combo[j]] for j in range(dim)]
        w = np.ones(mesh.n_cells)
        for j in range(dim):
            w *= rules[j][1][idx[j], combo[j]]
        total += w * np.asarray(fn(*pts), dtype=float)
    return ScalarField(mesh, total / mesh.cell_volume)


def fortin_interpolate(mesh: MacMesh, component_fns) -> VelocityField:
    """Velocity whose face values are the exact face means of the input.

    Face means are computed with tensorized 3-point Gauss rules over the
    face (a segment in 2D, a rectangle in 3D).  Exterior faces are zeroed,
    so the input should satisfy the no-slip condition for the divergence
    of the result to vanish.
    """
    dim = mesh.dim
    comps = []
    for i in range(dim):
        fs = mesh.faces[i]
        tangent = [j for j in range(dim) if j != i]
        rules = {}
        for j in tangent:
            lo = mesh.axis_coords[j][:-1]
            hi = mesh.axis_coords[j][1:]
            rules[j] = _interval_rule(lo, hi)
        idx = np.indices(fs.shape).reshape(dim, -1)
        total = np.zeros(fs.count)
        for combo in np.ndindex(*([3] * len(tangent))):
            coords = [None] * dim
            w = np.ones(fs.count)
            coords[i] = mesh.axis_coords[i][idx[i]]
            for k, j in enumerate(tangent):
                coords[j] = rules[j][0][idx[j], combo[k]]
                w *= rules[j][1][idx[j], combo[k]]
            total += w * np.asarray(component_fns[i](*coords), dtype=float)
        comps.append(total / fs.measure)
    return VelocityField(mesh, comps)


def sample_at_faces(mesh: MacMesh, component_fns) -> VelocityField:
    """Velocity from point values of the input at the face centers."""
    comps = []
    for i in range(mesh.dim):
        c = mesh.faces[i].center
        coords = [c[:, j] for j in range(mesh.dim)]
        comps.append(np.asarray(component_fns[i](*coords), dtype=float))
    return VelocityField(mesh, comps)


# -- norms ----------------------------------------------------------------

def norm_l2_cells(field: ScalarField) -> float:
    """L2 norm of a cell field, weighted by cell volumes."""
    return float(np.sqrt(field.mesh.cell_volume @ field.values ** 2))


def norm_lp_dual(u: VelocityField, p) -> float:
    """Lp norm of a velocity over the face-centered control volumes.

    Supported exponents: 2, 4, 6 (the ones the discrete estimates use)
    and ``numpy.inf`` for the max norm.  Exterior faces carry zero values
    and contribute nothing.
    """
    mesh = u.mesh
    if p == np.inf:
        return float(max(np.abs(u.components[i]).max()
                         for i in range(mesh.dim)))
    if p not in (2, 4, 6):
        raise ValueError(f"unsupported exponent {p!r}; use 2, 4, 6 or inf")
    total = 0.0
    for i in range(mesh.dim):
        total += float(mesh.faces[i].dvol
                       @ np.abs(u.components[i]) ** p)
    return float(total ** (1.0 / p))


def norm_h1_squared(u: VelocityField) -> float:
    """Quadratic form of the velocity diffusion operator.

    Sum over the dual interfaces of ``(measure/dist) * jump^2`` plus wall
    terms ``(measure/dist) * value^2``; coincides with minus the diffusion
    operator tested against the field itself.
    """
    mesh = u.mesh
    total = 0.0
    for i in range(mesh.dim):
        v = u.components[i]
        c1 = mesh.dual_case1[i]
        if c1.count:
            jump = v[c1.face_lo] - v[c1.face_hi]
            total += float((c1.measure / c1.dist) @ jump ** 2)
        for c2 in mesh.dual_case2[i]:
            if c2.count:
                jump = v[c2.face_lo] - v[c2.face_hi]
                total += float((c2.measure / c2.dist) @ jump ** 2)
        for w in mesh.dual_walls[i]:
            if w.count:
                total += float((w.measure / w.dist) @ v[w.face] ** 2)
    return total


def norm_h1(u: VelocityField) -> float:
    """Discrete H1 norm (includes the wall penalty, so it is a norm)."""
    return float(np.sqrt(norm_h1_squared(u)))


class Trajectory:
    """Time-indexed record of (rho, u, p) states from a run.

    ``times[k]`` is the physical time of snapshot k; snapshot 0 is the
    initial state (pressure None there, it is not part of the data).
    """

    def __init__(self, mesh: MacMesh):
        self.mesh = mesh
        self.times: list[float] = []
        self.rho: list[ScalarField] = []
        self.u: list[VelocityField] = []
        self.p: list[ScalarField | None] = []

    def append(self, t, rho, u, p=None):
        self.times.append(float(t))
        self.rho.append(rho)
        self.u.append(u)
        self.p.append(p)

    def __len__(self):
        return len(self.times)


# -- CSV serialization ----------------------------------------------------

def scalar_to_csv(field: ScalarField, path, cfg_hash=None, extra=None):
    """Write (id, value) rows for a cell field."""
    with atomic_write(path) as fh:
        standard_header(fh, "scalar-field", cfg_hash, extra=extra)
        writer = csv.writer(fh)
        writer.writerow(["id", "value"])
        for k, v in enumerate(field.values):
            writer.writerow([k, format_float(v)])


def scalar_from_csv(mesh: MacMesh, path) -> ScalarField:
    values = np.zeros(mesh.n_cells)
    seen = 0
    with open(path, newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows)
        if header[:2] != ["id", "value"]:
            raise ValueError(f"{path}: unexpected scalar CSV header {header}")
        for row in rows:
            values[int(row[0])] = float(row[1])
            seen += 1
    if seen != mesh.n_cells:
        raise ValueError(f"{path}: expected {mesh.n_cells} rows, got {seen}")
    return ScalarField(mesh, values)


def velocity_to_csv(u: VelocityField, path, cfg_hash=None, extra=None):
    """Write (direction, id, value) rows for all faces of all components."""
    with atomic_write(path) as fh:
        standard_header(fh, "velocity-field", cfg_hash, extra=extra)
        writer = csv.writer(fh)
        writer.writerow(["direction", "id", "value"])
        for i, comp in enumerate(u.components):
            for k, v in enumerate(comp):
                writer.writerow([i, k, format_float(v)])


def velocity_from_csv(mesh: MacMesh, path) -> VelocityField:
    comps = [np.zeros(mesh.faces[i].count) for i in range(mesh.dim)]
    counts = [0] * mesh.dim
    with open(path, newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows)
        if header[:3] != ["direction", "id", "value"]:
            raise ValueError(
                f"{path}: unexpected velocity CSV header {header}")
        for row in rows:
            i = int(row[0])
            comps[i][int(row[1])] = float(row[2])
            counts[i] += 1
    for i in range(mesh.dim):
        if counts[i] != mesh.faces[i].count:
            raise ValueError(
                f"{path}: component {i} has {counts[i]} rows, "
                f"expected {mesh.faces[i].count}")
    return VelocityField(mesh, comps)


# -- VTK output -----------------------------------------------------------

def cell_centered_velocity(u: VelocityField) -> np.ndarray:
    """Average the two face values per direction onto cell centers."""
    mesh = u.mesh
    out = np.zeros((mesh.n_cells, 3))
    for i in range(mesh.dim):
        c1 = mesh.dual_case1[i]
        comp = u.components[i]
        out[c1.cell, i] = 0.5 * (comp[c1.face_lo] + comp[c1.face_hi])
    return out


def write_vtk(path, mesh: MacMesh, rho: ScalarField | None = None,
              p: ScalarField | None = None,
              u: VelocityField | None = None, title="macflow snapshot"):
    """Write a legacy-format rectilinear-grid VTK file with cell data."""
    buf = io.StringIO()
    buf.write("# vtk DataFile Version 3.0\n")
    buf.write(f"{title}\n")
    buf.write("ASCII\n")
    buf.write("DATASET RECTILINEAR_GRID\n")
    npts = [mesh.cells[i] + 1 for i in range(mesh.dim)]
    while len(npts) < 3:
        npts.append(1)
    buf.write(f"DIMENSIONS {npts[0]} {npts[1]} {npts[2]}\n")
    for j, name in enumerate(("X", "Y", "Z")):
        if j < mesh.dim:
            coords = mesh.axis_coords[j]
        else:
            coords = np.array([0.0])
        buf.write(f"{name}_COORDINATES {coords.size} double\n")
        buf.write(" ".join(format_float(c) for c in coords) + "\n")
    # VTK wants the first axis fastest; flat ids are C-order (last axis
    # fastest), so reorder through a Fortran-order ravel.
    def reorder(values):
        return values.reshape(mesh.cells).ravel(order="F")

    buf.write(f"CELL_DATA {mesh.n_cells}\n")
    for name, field in (("density", rho), ("pressure", p)):
        if field is None:
            continue
        buf.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        buf.write("\n".join(format_float(v) for v in reorder(field.values))
                  + "\n")
    if u is not None:
        vec = cell_centered_velocity(u)
        cols = [reorder(vec[:, j]) for j in range(3)]
        buf.write("VECTORS velocity double\n")
        for k in range(mesh.n_cells):
            buf.write(" ".join(format_float(cols[j][k]) for j in range(3))
                      + "\n")
    with atomic_write(path) as fh:
        fh.write(buf.getvalue())
