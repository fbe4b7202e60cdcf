"""Deterministic spatial operators on the staggered grid.

All operators accept arrays with leading batch axes.  Boundary-normal faces
of bounded directions carry velocities fixed by the boundary conditions;
operators that produce momentum tendencies return zero there.
"""

from __future__ import annotations

import numpy as np

from .eos import EosParams
from .fields import (
    FaceVec,
    Grid2D,
    cell_to_face_average,
    cell_to_face_difference,
    face_to_cell_average,
    face_to_cell_difference,
    interp_cell_to_faces,
    interp_cell_to_nodes,
)

__all__ = [
    "diffusive_flux",
    "diffusive_flux_faces",
    "divergence_cell",
    "gradient_faces",
    "scalar_advection_div",
    "momentum_advection_div",
    "interp_eta_to_nodes",
    "viscous_divergence",
    "stress_divergence",
    "reservoir_normal_velocity",
    "boundary_normal_velocity",
    "zero_boundary_normal",
    "noslip_values",
]


def _boundary_c(grid: Grid2D):
    return grid.bc.reservoir_values(lambda c: c)


def noslip_values(grid: Grid2D, d: int):
    """Tangential boundary values on the two sides normal to ``d``.

    No-slip sides (walls and reservoirs) give zero; free-slip and periodic
    sides give ``None``, meaning "copy the adjacent value".
    """
    return tuple(None if (s.periodic or s.slip) else 0.0 for s in grid.bc.sides(d))


def zero_boundary_normal(f: FaceVec, grid: Grid2D) -> FaceVec:
    """Copy of ``f`` with the boundary-normal faces set to zero."""
    out = f.copy()
    if not grid.periodic(0):
        out.x[..., 0, :] = 0.0
        out.x[..., -1, :] = 0.0
    if not grid.periodic(1):
        out.y[..., :, 0] = 0.0
        out.y[..., :, -1] = 0.0
    return out


def diffusive_flux_faces(rhochi: FaceVec, c, grid: Grid2D) -> FaceVec:
    """``rho chi grad c`` from face values of ``rho chi``.

    Reservoir faces use a one-sided difference against the boundary
    concentration over half a cell; wall faces carry no flux.
    """
    xl, xh, yl, yh = _boundary_c(grid)
    return FaceVec(rhochi.x * cell_to_face_difference(c, grid, 0, xl, xh),
                   rhochi.y * cell_to_face_difference(c, grid, 1, yl, yh))


def diffusive_flux(rho, chi, c, grid: Grid2D, rho_b=None, chi_b=None) -> FaceVec:
    """Diffusive mass flux ``rho chi grad c`` on faces.

    Parameters
    ----------
    rho, chi, c : ndarray
        Cell values.
    grid : Grid2D
    rho_b, chi_b : tuple, optional
        Boundary values ``(x_lo, x_hi, y_lo, y_hi)`` of density and
        diffusion coefficient on reservoir sides.

    Returns
    -------
    FaceVec
    """
    rho_f = interp_cell_to_faces(rho, grid, rho_b)
    chi_f = interp_cell_to_faces(chi, grid, chi_b)
    return diffusive_flux_faces(rho_f * chi_f, c, grid)


def divergence_cell(F: FaceVec, grid: Grid2D):
    """MAC divergence of a face field."""
    return face_to_cell_difference(F.x, grid, 0) + face_to_cell_difference(F.y, grid, 1)


def gradient_faces(phi, grid: Grid2D) -> FaceVec:
    """Centred gradient of a cell field; zero on boundary-normal faces."""
    return FaceVec(cell_to_face_difference(phi, grid, 0),
                   cell_to_face_difference(phi, grid, 1))


def scalar_advection_div(s, v: FaceVec, grid: Grid2D, bvals=None):
    """Centred advective divergence ``div(s v)``.

    Face values of ``s`` are arithmetic averages; ``bvals`` supplies the
    boundary values used on reservoir faces.
    """
    s_f = interp_cell_to_faces(s, grid, bvals)
    return divergence_cell(s_f * v, grid)


def momentum_advection_div(m: FaceVec, v: FaceVec, grid: Grid2D) -> FaceVec:
    """Centred advective divergence ``div(m v)`` on the momentum control volumes.

    Cell-centred products use two-face averages of each factor; node
    products use face averages along the transverse direction.  Tangential
    momentum and velocity vanish at no-slip boundaries.
    """
    mx, my = m
    u, w = v
    xlo, xhi = noslip_values(grid, 0)
    ylo, yhi = noslip_values(grid, 1)

    cell_xx = face_to_cell_average(mx, grid, 0) * face_to_cell_average(u, grid, 0)
    node_xy = (cell_to_face_average(mx, grid, 1, ylo, yhi)
               * cell_to_face_average(w, grid, 0, xlo, xhi))
    ax = cell_to_face_difference(cell_xx, grid, 0) + face_to_cell_difference(node_xy, grid, 1)

    cell_yy = face_to_cell_average(my, grid, 1) * face_to_cell_average(w, grid, 1)
    node_yx = (cell_to_face_average(my, grid, 0, xlo, xhi)
               * cell_to_face_average(u, grid, 1, ylo, yhi))
    ay = cell_to_face_difference(cell_yy, grid, 1) + face_to_cell_difference(node_yx, grid, 0)
    return zero_boundary_normal(FaceVec(ax, ay), grid)


def interp_eta_to_nodes(eta, grid: Grid2D, bvals=None):
    """Node viscosity as the mean of the four surrounding cells."""
    return interp_cell_to_nodes(eta, grid, bvals)


def stress_divergence(sxx, syy, sxy, grid: Grid2D) -> FaceVec:
    """Divergence of a staggered symmetric tensor.

    ``sxx`` and ``syy`` live at cell centres, ``sxy`` at nodes.
    """
    fx = cell_to_face_difference(sxx, grid, 0) + face_to_cell_difference(sxy, grid, 1)
    fy = cell_to_face_difference(syy, grid, 1) + face_to_cell_difference(sxy, grid, 0)
    return zero_boundary_normal(FaceVec(fx, fy), grid)


def _zero_slip_nodes(sxy, grid: Grid2D):
    for d, ax in ((0, -2), (1, -1)):
        if grid.periodic(d):
            continue
        lo, hi = grid.bc.sides(d)
        if lo.slip:
            np.moveaxis(sxy, ax, 0)[0] = 0.0
        if hi.slip:
            np.moveaxis(sxy, ax, 0)[-1] = 0.0
    return sxy


def viscous_divergence(eta_cell, eta_node, v: FaceVec, grid: Grid2D) -> FaceVec:
    """Viscous force ``div[eta (grad v + grad v^T)]``.

    Normal stresses use cell viscosities and shear stresses node
    viscosities.  At no-slip boundaries the shear rate is a one-sided
    difference against zero tangential velocity over half a cell; at
    free-slip boundaries the shear stress vanishes.
    """
    u, w = v
    xlo, xhi = noslip_values(grid, 0)
    ylo, yhi = noslip_values(grid, 1)
    sxx = 2.0 * eta_cell * face_to_cell_difference(u, grid, 0)
    syy = 2.0 * eta_cell * face_to_cell_difference(w, grid, 1)
    shear = (cell_to_face_difference(u, grid, 1, ylo, yhi)
             + cell_to_face_difference(w, grid, 0, xlo, xhi))
    sxy = _zero_slip_nodes(eta_node * shear, grid)
    return stress_divergence(sxx, syy, sxy, grid)


def reservoir_normal_velocity(F_n, p: EosParams, side=None):
    """Normal velocity on reservoir faces from the normal mass flux.

    Mass diffusing through a reservoir boundary changes the local volume,
    so ``v_n = -(1/rho2_bar - 1/rho1_bar) F_n``.
    """
    if side is not None and not side.reservoir:
        raise ValueError(f"reservoir_normal_velocity called on a {side.kind} side")
    return -p.beta_over_rho * np.asarray(F_n)


def boundary_normal_velocity(v: FaceVec, F: FaceVec, grid: Grid2D, p: EosParams) -> FaceVec:
    """Copy of ``v`` with boundary-normal faces set from the boundary conditions.

    Walls get zero normal velocity, reservoirs the value implied by the
    normal mass flux ``F`` there.
    """
    out = v.copy()
    for d, comp, flux in ((0, out.x, F.x), (1, out.y, F.y)):
        if grid.periodic(d):
            continue
        ax = d - 2
        cv = np.moveaxis(comp, ax, 0)
        cf = np.moveaxis(flux, ax, 0)
        for side, i in zip(grid.bc.sides(d), (0, -1)):
            cv[i] = reservoir_normal_velocity(cf[i], p) if side.reservoir else 0.0
    return out
