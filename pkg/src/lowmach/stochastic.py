"""Stochastic mass and momentum fluxes.

Random variates come from counter-based Philox streams keyed by
``(seed, step, stage, field)``, so any draw can be regenerated without
replaying the run.  Field identifiers:

====  =========================================
0     mass-flux variates on x-faces
1     mass-flux variates on y-faces
2     diagonal stress variate ``W_xx`` (cells)
3     diagonal stress variate ``W_yy`` (cells)
4     off-diagonal stress variate (nodes)
====  =========================================

Integrators use stage substreams 0 and 1 per step (``W1`` and ``W2``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fields import FaceVec, Grid2D
from .operators import zero_boundary_normal

__all__ = [
    "NoiseConfig",
    "NoiseDraw",
    "StochasticStress",
    "FILTER_WEIGHTS",
    "filter_transfer",
    "draw_noise",
    "apply_filter",
    "stochastic_mass_flux",
    "stochastic_momentum_flux",
    "RK3_WEIGHTS",
]

# One-sided weights (centre first) of the symmetric local averaging filters.
FILTER_WEIGHTS = {
    2: (5 / 8, 1 / 4, -1 / 16),
    4: (93 / 128, 7 / 32, -7 / 64, 1 / 32, -1 / 256),
}

RK3_WEIGHTS = (
    (2 * np.sqrt(2) + np.sqrt(3)) / 5,
    (-4 * np.sqrt(2) + 3 * np.sqrt(3)) / 5,
    (np.sqrt(2) - 2 * np.sqrt(3)) / 10,
)


@dataclass(frozen=True)
class NoiseConfig:
    """Switches and seed for the stochastic fluxes.

    Parameters
    ----------
    seed : int
        Base seed; realization ``b`` of a batch uses ``seed + b``.
    include_mass_noise, include_momentum_noise : bool
        Enable the stochastic mass flux and stochastic stress.
    filter_width : {0, 2, 4}
        Width of the variate filter; 0 disables filtering.
    variance_scale : float
        Multiplier on all noise variances.
    """

    seed: int = 0
    include_mass_noise: bool = True
    include_momentum_noise: bool = True
    filter_width: int = 0
    variance_scale: float = 1.0

    def __post_init__(self):
        if self.filter_width not in (0, 2, 4):
            raise ConfigError("filter_width must be 0, 2 or 4")
        if self.variance_scale < 0:
            raise ConfigError("variance_scale must be non-negative")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def active(self) -> bool:
        return (self.include_mass_noise or self.include_momentum_noise) and self.variance_scale > 0


@dataclass
class NoiseDraw:
    """Standard-normal variates for one stage.

    Attributes
    ----------
    mass : FaceVec
        Face variates for the mass flux.
    wxx, wyy : ndarray
        Cell variates for the diagonal stresses.
    wxy : ndarray
        Node variates for the shear stress.
    """

    mass: FaceVec
    wxx: np.ndarray
    wyy: np.ndarray
    wxy: np.ndarray

    def combine(self, a: float, other: "NoiseDraw", b: float) -> "NoiseDraw":
        """Return ``a * self + b * other``."""
        return NoiseDraw(self.mass * a + other.mass * b, a * self.wxx + b * other.wxx,
                         a * self.wyy + b * other.wyy, a * self.wxy + b * other.wxy)


@dataclass
class StochasticStress:
    """Staggered symmetric stress: diagonal at cells, shear at nodes."""

    sxx: np.ndarray
    syy: np.ndarray
    sxy: np.ndarray


def filter_transfer(theta, w_F: int):
    """Transfer function of the filter at dimensionless wavenumber ``theta``."""
    if w_F == 0:
        return np.ones_like(np.asarray(theta, dtype=float))
    w = FILTER_WEIGHTS[w_F]
    out = np.full_like(np.asarray(theta, dtype=float), w[0])
    for k, wk in enumerate(w[1:], start=1):
        out = out + 2.0 * wk * np.cos(k * np.asarray(theta))
    return out


def apply_filter(W, w_F: int, grid: Grid2D | None = None):
    """Apply the local averaging filter along both periodic directions.

    Parameters
    ----------
    W : ndarray
        Variates with the last two axes spatial.
    w_F : {0, 2, 4}
    grid : Grid2D, optional
        Used only to check that both directions are periodic.
    """
    if w_F == 0:
        return W
    if w_F not in FILTER_WEIGHTS:
        raise ConfigError("filter_width must be 0, 2 or 4")
    if grid is not None and not grid.bc.all_periodic:
        raise ConfigError("variate filtering requires periodic boundaries")
    w = FILTER_WEIGHTS[w_F]
    for ax in (-2, -1):
        out = w[0] * W
        for k, wk in enumerate(w[1:], start=1):
            out = out + wk * (np.roll(W, k, axis=ax) + np.roll(W, -k, axis=ax))
        W = out
    return W


def _normals(seed: int, step: int, stage: int, field: int, shape) -> np.ndarray:
    bitgen = np.random.Philox(key=int(seed), counter=[0, field, stage, step])
    return np.random.Generator(bitgen).standard_normal(shape)


def draw_noise(seed, step: int, stage: int, grid: Grid2D, filter_width: int = 0) -> NoiseDraw:
    """Standard-normal variates for ``(seed, step, stage)``.

    Parameters
    ----------
    seed : int or sequence of int
        One seed per realization; a sequence produces a leading batch axis.
    step, stage : int
        Counter coordinates of the draw.
    grid : Grid2D
    filter_width : {0, 2, 4}

    Returns
    -------
    NoiseDraw
    """
    if filter_width and not grid.bc.all_periodic:
        raise ConfigError("variate filtering requires periodic boundaries")
    shapes = (grid.face_shape(0), grid.face_shape(1), grid.shape, grid.shape, grid.node_shape)
    seeds = np.atleast_1d(np.asarray(seed, dtype=np.int64))
    fields = [np.stack([_normals(s, step, stage, f, shp) for s in seeds])
              for f, shp in enumerate(shapes)]
    if np.ndim(seed) == 0:
        fields = [a[0] for a in fields]
    fields = [apply_filter(a, filter_width) for a in fields]
    return NoiseDraw(FaceVec(fields[0], fields[1]), fields[2], fields[3], fields[4])


def stochastic_mass_flux(chi_faces: FaceVec, rho_mu_faces: FaceVec, dt: float, dV: float,
                         draw: NoiseDraw, grid: Grid2D, scale: float = 1.0) -> FaceVec:
    """Stochastic mass flux ``sqrt(2 chi rho mu_c^{-1} kT / (dt dV)) W``.

    The face coefficients must be the ones used by the diffusive flux.
    Boundary-normal faces (walls and reservoirs) carry no noise.
    """
    out = []
    for chi, rmu, w in zip(chi_faces, rho_mu_faces, draw.mass):
        var = np.maximum(2.0 * scale * chi * rmu / (dt * dV), 0.0)
        out.append(np.sqrt(var) * w)
    return zero_boundary_normal(FaceVec(*out), grid)


def stochastic_momentum_flux(eta_cell, eta_node, dt: float, dV: float, draw: NoiseDraw,
                             grid: Grid2D, kBT: float, scale: float = 1.0) -> StochasticStress:
    """Symmetric stochastic stress ``sqrt(eta kT / (dt dV)) (W + W^T)``.

    Diagonal entries have variance ``4 eta kT / (dt dV)`` and the shear
    entry ``2 eta kT / (dt dV)``.  Shear noise is amplified by ``sqrt(2)``
    on no-slip boundary nodes, matching the half-cell one-sided shear rate
    there, and vanishes on free-slip boundary nodes.
    """
    a = scale * kBT / (dt * dV)
    sxx = 2.0 * np.sqrt(a * eta_cell) * draw.wxx
    syy = 2.0 * np.sqrt(a * eta_cell) * draw.wyy
    sxy = np.sqrt(2.0 * a * eta_node) * draw.wxy
    for d, ax in ((0, -2), (1, -1)):
        if grid.periodic(d):
            continue
        view = np.moveaxis(sxy, ax, 0)
        for side, i in zip(grid.bc.sides(d), (0, -1)):
            view[i] = 0.0 if side.slip else view[i] * np.sqrt(2.0)
    return StochasticStress(sxx, syy, sxy)
