"""Discrete operators on staggered meshes.

Conventions
-----------
* Primal mass fluxes are stored once per face, signed along the positive
  coordinate axis; the flux leaving a cell through a face is the stored
  value on the cell's high side and its negative on the low side, so the
  two-sided antisymmetry of fluxes is built into the storage.
* Dual-interface fluxes follow the same rule: the stored value is the
  flow in the positive axis direction, counted positively in the balance
  of the low-side control volume and negatively in the high-side one.
* The upwind density on a face is the low-side cell value when the normal
  velocity is nonnegative (ties go with the flow direction convention)
  and the high-side cell value otherwise.
* Velocity-valued results are full-length per-direction face arrays with
  exterior entries zero; operators never produce values on the boundary.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .grid import MacMesh
from .fields import ScalarField, VelocityField
from .ioutil import atomic_write, format_float, standard_header


class DualFields:
    """Per-dual-interface values for one velocity component.

    ``case1`` is aligned with ``mesh.dual_case1[i]`` and ``case2[k]`` with
    ``mesh.dual_case2[i][k]``.  Wall interfaces carry no transported
    quantity and are not represented.
    """

    def __init__(self, case1: np.ndarray, case2: tuple):
        self.case1 = case1
        self.case2 = tuple(case2)


# -- primal transport -------------------------------------------------------

def upwind_face_flux(mesh: MacMesh, rho: ScalarField, u: VelocityField):
    """Signed upwind mass fluxes ``measure * rho_up * u`` per face.

    Returns one full-length array per direction; exterior faces carry zero
    flux (impervious walls).
    """
    fluxes = []
    for i in range(mesh.dim):
        fs = mesh.faces[i]
        vel = u.components[i]
        rho_lo = rho.values[np.maximum(fs.cell_lo, 0)]
        rho_hi = rho.values[np.maximum(fs.cell_hi, 0)]
        rho_up = np.where(vel >= 0.0, rho_lo, rho_hi)
        flux = fs.measure * rho_up * vel
        flux[fs.exterior_idx] = 0.0
        fluxes.append(flux)
    return fluxes


def div_from_fluxes(mesh: MacMesh, fluxes) -> np.ndarray:
    """Cell divergence of signed face fluxes: outflow sum over |K|."""
    out = np.zeros(mesh.n_cells)
    for i in range(mesh.dim):
        c1 = mesh.dual_case1[i]
        out += fluxes[i][c1.face_hi] - fluxes[i][c1.face_lo]
    return out / mesh.cell_volume


def div_primal(mesh: MacMesh, rho: ScalarField, u: VelocityField):
    """Upwind divergence of the mass flux, one value per cell."""
    return div_from_fluxes(mesh, upwind_face_flux(mesh, rho, u))


def volume_fluxes(mesh: MacMesh, u: VelocityField):
    """Signed volume fluxes ``measure * u`` per face (unit density)."""
    return [mesh.faces[i].measure * u.components[i]
            for i in range(mesh.dim)]


def div_velocity(mesh: MacMesh, u: VelocityField) -> np.ndarray:
    """Discrete divergence of a velocity, one value per cell."""
    return div_from_fluxes(mesh, volume_fluxes(mesh, u))


# -- pressure gradient ------------------------------------------------------

def grad_pressure(mesh: MacMesh, p: ScalarField):
    """Face-normal pressure differences over center distances.

    The value on an interior face is ``(p_hi - p_lo) / dist``; on a tensor
    grid ``measure / dvol = 1 / dist``, which makes this operator minus
    the transpose of the divergence under the natural volume pairings.
    Exterior faces (no velocity unknown) get zero.
    """
    out = []
    for i in range(mesh.dim):
        fs = mesh.faces[i]
        g = np.zeros(fs.count)
        idx = fs.interior_idx
        g[idx] = (p.values[fs.cell_hi[idx]] - p.values[fs.cell_lo[idx]]) \
            / fs.dist[idx]
        out.append(g)
    return out


# -- diffusion ---------------------------------------------------------------

def _pair_tables(mesh: MacMesh, i):
    """All (face_lo, face_hi, measure/dist) dual-interface pairs, stacked."""
    los, his, ws = [], [], []
    c1 = mesh.dual_case1[i]
    if c1.count:
        los.append(c1.face_lo)
        his.append(c1.face_hi)
        ws.append(c1.measure / c1.dist)
    for c2 in mesh.dual_case2[i]:
        if c2.count:
            los.append(c2.face_lo)
            his.append(c2.face_hi)
            ws.append(c2.measure / c2.dist)
    if not los:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0)
    return (np.concatenate(los), np.concatenate(his), np.concatenate(ws))


def laplacian_apply(mesh: MacMesh, u: VelocityField):
    """Pointwise discrete Laplacian of a velocity (no-slip walls).

    Per interior face: minus the sum of ``(measure/dist) * jump`` over the
    dual interfaces of its control volume (wall strips test against zero),
    divided by the control volume.  Exterior entries are zero.
    """
    out = []
    for i in range(mesh.dim):
        v = u.components[i]
        acc = np.zeros(v.shape)
        lo, hi, w = _pair_tables(mesh, i)
        jump = w * (v[lo] - v[hi])
        np.add.at(acc, lo, jump)
        np.add.at(acc, hi, -jump)
        for wall in mesh.dual_walls[i]:
            if wall.count:
                np.add.at(acc, wall.face,
                          (wall.measure / wall.dist) * v[wall.face])
        fs = mesh.faces[i]
        res = np.zeros(v.shape)
        idx = fs.interior_idx
        res[idx] = -acc[idx] / fs.dvol[idx]
        out.append(res)
    return out


def diffusion_matrix(mesh: MacMesh, i) -> sp.csr_matrix:
    """Symmetric positive-definite diffusion block for component ``i``.

    Acts on interior-face unknowns; ``v @ (L @ v)`` equals the squared
    discrete H1 norm of the component.  The momentum system uses this
    volume-scaled form directly (rows are multiplied by control volumes).
    """
    fs = mesh.faces[i]
    dof = fs.interior_dof
    rows, cols, vals = [], [], []
    lo, hi, w = _pair_tables(mesh, i)
    dlo, dhi = dof[lo], dof[hi]
    both = (dlo >= 0) & (dhi >= 0)
    for r, c, s in ((dlo, dlo, 1.0), (dhi, dhi, 1.0)):
        keep = r >= 0
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(s * w[keep])
    rows.append(dlo[both])
    cols.append(dhi[both])
    vals.append(-w[both])
    rows.append(dhi[both])
    cols.append(dlo[both])
    vals.append(-w[both])
    for wall in mesh.dual_walls[i]:
        if wall.count:
            d = dof[wall.face]
            rows.append(d)
            cols.append(d)
            vals.append(wall.measure / wall.dist)
    mat = sp.coo_matrix(
        (np.concatenate(vals),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(fs.n_interior, fs.n_interior))
    return mat.tocsr()


# -- dual transport -----------------------------------------------------------

def dual_density(mesh: MacMesh, rho: ScalarField):
    """Face control-volume densities: half-cell volume-weighted means.

    Boundary faces inherit the single adjacent cell value.  Returns one
    full-length array per direction.
    """
    out = []
    for i in range(mesh.dim):
        fs = mesh.faces[i]
        r_lo = rho.values[np.maximum(fs.cell_lo, 0)]
        r_hi = rho.values[np.maximum(fs.cell_hi, 0)]
        out.append((fs.half_lo * r_lo + fs.half_hi * r_hi) / fs.dvol)
    return out


def dual_fluxes(mesh: MacMesh, fluxes, i) -> DualFields:
    """Mass fluxes through the dual interfaces of component ``i``.

    Each dual-interface flux is the half-sum of the two primal fluxes it
    bisects: the two component-``i`` fluxes of the host cell in case 1,
    the two orthogonal fluxes whose faces it halves in case 2.  Signed
    along the positive axis it crosses.
    """
    c1 = mesh.dual_case1[i]
    f1 = 0.5 * (fluxes[i][c1.face_lo] + fluxes[i][c1.face_hi])
    f2 = []
    for c2 in mesh.dual_case2[i]:
        j = c2.ortho_axis
        f2.append(0.5 * (fluxes[j][c2.tau_lo] + fluxes[j][c2.tau_hi]))
    return DualFields(f1, f2)


def div_dual_from_fluxes(mesh: MacMesh, fluxes):
    """Divergence over face control volumes of given primal fluxes.

    Returns one full-length array per direction (zero on exterior faces).
    The construction makes each component's total outflow the half-sum of
    the outflows of the two adjacent cells, so a cell-wise mass balance
    transfers to the face control volumes with no extra error.
    """
    out = []
    for i in range(mesh.dim):
        fs = mesh.faces[i]
        acc = np.zeros(fs.count)
        df = dual_fluxes(mesh, fluxes, i)
        c1 = mesh.dual_case1[i]
        if c1.count:
            np.add.at(acc, c1.face_lo, df.case1)
            np.add.at(acc, c1.face_hi, -df.case1)
        for c2, f in zip(mesh.dual_case2[i], df.case2):
            if c2.count:
                np.add.at(acc, c2.face_lo, f)
                np.add.at(acc, c2.face_hi, -f)
        res = np.zeros(fs.count)
        idx = fs.interior_idx
        res[idx] = acc[idx] / fs.dvol[idx]
        out.append(res)
    return out


def div_dual(mesh: MacMesh, rho: ScalarField, u: VelocityField):
    """Upwind mass divergence on the face control volumes."""
    return div_dual_from_fluxes(mesh, upwind_face_flux(mesh, rho, u))


# -- convection ----------------------------------------------------------------

def convection_apply(mesh: MacMesh, fluxes, v: VelocityField):
    """Convection of ``v`` by the given primal mass fluxes.

    Per face control volume: sum of dual-interface fluxes times the
    centered average of the two adjacent values, over the volume.  Testing
    against ``v`` itself telescopes to half the dual mass divergence
    weighted by ``v**2``, which is the discrete root of the kinetic energy
    balance.
    """
    out = []
    for i in range(mesh.dim):
        fs = mesh.faces[i]
        comp = v.components[i]
        acc = np.zeros(fs.count)
        df = dual_fluxes(mesh, fluxes, i)
        c1 = mesh.dual_case1[i]
        if c1.count:
            avg = 0.5 * (comp[c1.face_lo] + comp[c1.face_hi])
            np.add.at(acc, c1.face_lo, df.case1 * avg)
            np.add.at(acc, c1.face_hi, -df.case1 * avg)
        for c2, f in zip(mesh.dual_case2[i], df.case2):
            if c2.count:
                avg = 0.5 * (comp[c2.face_lo] + comp[c2.face_hi])
                np.add.at(acc, c2.face_lo, f * avg)
                np.add.at(acc, c2.face_hi, -f * avg)
        res = np.zeros(fs.count)
        idx = fs.interior_idx
        res[idx] = acc[idx] / fs.dvol[idx]
        out.append(res)
    return out


def convection_matrix(mesh: MacMesh, fluxes, i) -> sp.csr_matrix:
    """Convection block for component ``i`` on interior-face unknowns.

    Row of the volume-scaled momentum system: for each dual interface,
    half its flux times the sum of the two adjacent values, positive on
    the low side, negative on the high side.  Columns on exterior faces
    are dropped (zero boundary values).
    """
    fs = mesh.faces[i]
    dof = fs.interior_dof
    df = dual_fluxes(mesh, fluxes, i)
    los, his, fl = [], [], []
    c1 = mesh.dual_case1[i]
    if c1.count:
        los.append(c1.face_lo)
        his.append(c1.face_hi)
        fl.append(df.case1)
    for c2, f in zip(mesh.dual_case2[i], df.case2):
        if c2.count:
            los.append(c2.face_lo)
            his.append(c2.face_hi)
            fl.append(f)
    if not los:
        return sp.csr_matrix((fs.n_interior, fs.n_interior))
    lo = np.concatenate(los)
    hi = np.concatenate(his)
    half = 0.5 * np.concatenate(fl)
    dlo, dhi = dof[lo], dof[hi]

    rows, cols, vals = [], [], []
    for r, sign in ((dlo, 1.0), (dhi, -1.0)):
        for c in (dlo, dhi):
            keep = (r >= 0) & (c >= 0)
            rows.append(r[keep])
            cols.append(c[keep])
            vals.append(sign * half[keep])
    mat = sp.coo_matrix(
        (np.concatenate(vals),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(fs.n_interior, fs.n_interior))
    return mat.tocsr()


# -- dual reconstruction and gradient -----------------------------------------

def dual_volumes(mesh: MacMesh, i) -> DualFields:
    """Diamond volumes ``measure * dist`` attached to dual interfaces."""
    c1 = mesh.dual_case1[i]
    return DualFields(c1.measure * c1.dist,
                      [c2.measure * c2.dist for c2 in mesh.dual_case2[i]])


def flux_reconstruction(mesh: MacMesh, fluxes, i) -> DualFields:
    """Mass-flux density (flux over interface measure) per dual interface.

    This is the normal component of the reconstructed momentum field on
    each dual interface, signed along the positive axis it crosses.  It
    equals the half-sum of the adjacent upwind face momenta in case 1 and
    their measure-weighted mean in case 2.
    """
    df = dual_fluxes(mesh, fluxes, i)
    c1 = mesh.dual_case1[i]
    case1 = np.zeros(c1.count)
    if c1.count:
        case1 = df.case1 / c1.measure
    case2 = []
    for c2, f in zip(mesh.dual_case2[i], df.case2):
        case2.append(f / c2.measure if c2.count else f)
    return DualFields(case1, case2)


def dual_gradient(mesh: MacMesh, i, w: VelocityField) -> DualFields:
    """Per-interface difference quotient of component ``i`` of ``w``.

    Oriented from the low to the high side as ``(w_lo - w_hi) / dist``:
    the same outflow pairing as the dual fluxes, so that the discrete
    duality identity (mass divergence tested against ``w`` equals the
    diamond-volume pairing of reconstruction and gradient) holds exactly.
    Exterior faces contribute their stored zero value.
    """
    v = w.components[i]
    c1 = mesh.dual_case1[i]
    case1 = (v[c1.face_lo] - v[c1.face_hi]) / c1.dist if c1.count \
        else np.empty(0)
    case2 = []
    for c2 in mesh.dual_case2[i]:
        case2.append((v[c2.face_lo] - v[c2.face_hi]) / c2.dist
                     if c2.count else np.empty(0))
    return DualFields(case1, case2)


def dual_pairing(mesh: MacMesh, i, a: DualFields, b: DualFields) -> float:
    """Diamond-volume-weighted inner product of two dual-interface fields."""
    vols = dual_volumes(mesh, i)
    total = float(vols.case1 @ (a.case1 * b.case1)) if a.case1.size else 0.0
    for v2, a2, b2 in zip(vols.case2, a.case2, b.case2):
        if a2.size:
            total += float(v2 @ (a2 * b2))
    return total


# -- matrix dump ----------------------------------------------------------------

def dump_matrix_coo(mat, path, cfg_hash=None, name="matrix"):
    """Write a sparse matrix as (row, col, value) CSV in COO layout."""
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    with atomic_write(path) as fh:
        standard_header(fh, f"coo-{name}", cfg_hash,
                        extra={"shape": f"{coo.shape[0]}x{coo.shape[1]}"})
        fh.write("row,col,value\n")
        for k in order:
            fh.write(f"{coo.row[k]},{coo.col[k]},"
                     f"{format_float(coo.data[k])}\n")
