"""Linear equation of state, transport-coefficient models and noise factors.

The mixture obeys ``rho1/rho1_bar + rho2/rho2_bar = 1``: at fixed pressure
and temperature the two species occupy volume additively.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EOSError

__all__ = [
    "EosParams",
    "TransportModel",
    "density_from_concentration",
    "solutal_expansion",
    "eos_residual",
    "viscosity_of_c",
    "diffusion_of_c",
    "inv_mu_c_kBT",
    "mass_ratio_viscosity",
    "mass_ratio_diffusion",
    "check_concentration",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EosParams:
    """Thermodynamic parameters of the binary mixture.

    Parameters
    ----------
    rho1_bar, rho2_bar : float
        Densities of the pure components.
    kBT : float
        Thermal energy; scales the momentum noise.
    m1, m2 : float
        Molecular masses for the hard-disk chemical potential model.
    mu_model : {"hard_disk", "constant"}
        How ``mu_c^{-1} k_B T`` is evaluated.
    inv_mu_value : float, optional
        The constant value of ``mu_c^{-1} k_B T`` for ``mu_model="constant"``.
    eos_tol : float
        Allowed relative EOS residual.
    """

    rho1_bar: float
    rho2_bar: float
    kBT: float = 1.0
    m1: float = 1.0
    m2: float = 1.0
    mu_model: str = "hard_disk"
    inv_mu_value: float | None = None
    eos_tol: float = 1e-12

    def __post_init__(self):
        if not (self.rho1_bar > 0 and self.rho2_bar > 0):
            raise EOSError("pure-component densities must be positive")
        if self.kBT < 0:
            raise EOSError("kBT must be non-negative")
        if self.mu_model not in ("hard_disk", "constant"):
            raise ConfigError(f"unknown mu_model {self.mu_model!r}")
        if self.mu_model == "constant" and (self.inv_mu_value is None or self.inv_mu_value < 0):
            raise ConfigError("constant mu_model needs a non-negative inv_mu_value")

    @property
    def beta_over_rho(self) -> float:
        """``1/rho2_bar - 1/rho1_bar``, the concentration-independent ratio."""
        return 1.0 / self.rho2_bar - 1.0 / self.rho1_bar


def density_from_concentration(c, p: EosParams):
    """Total density ``1 / (c/rho1_bar + (1 - c)/rho2_bar)``."""
    denom = np.asarray(c) / p.rho1_bar + (1.0 - np.asarray(c)) / p.rho2_bar
    if np.any(denom <= 0):
        raise EOSError("concentration outside the range where the EOS gives positive density")
    return 1.0 / denom


def solutal_expansion(c, p: EosParams):
    """Solutal expansion coefficient ``beta = (1/rho) d rho / d c``."""
    denom = np.asarray(c) * p.rho2_bar + (1.0 - np.asarray(c)) * p.rho1_bar
    if np.any(denom <= 0):
        raise EOSError("concentration outside the range where beta is defined")
    return (p.rho1_bar - p.rho2_bar) / denom


def eos_residual(rho1, rho2, p: EosParams):
    """Volume-fraction excess ``rho1/rho1_bar + rho2/rho2_bar - 1``."""
    return rho1 / p.rho1_bar + rho2 / p.rho2_bar - 1.0


_KINDS = ("constant", "quadratic_viscosity", "stokes_einstein_diffusion",
          "linear_kinematic_interp", "mass_ratio_scaled")


@dataclass(frozen=True)
class TransportModel:
    """Concentration dependence of a transport coefficient.

    Parameters
    ----------
    kind : str
        ``"constant"``: the coefficient is ``base``.
        ``"quadratic_viscosity"``: ``base * (1 + a1 c + a2 c^2)`` where
        ``base`` is the pure-solvent viscosity.
        ``"stokes_einstein_diffusion"``: ``base / (1 + a1 c + a2 c^2)`` so
        that diffusion times the quadratic viscosity is constant.
        ``"linear_kinematic_interp"``: viscosity ``rho(c) (c nu1 + (1-c) nu2)``
        with ``base = nu1`` and ``nu2 = nu1 / sqrt(R)``.
        ``"mass_ratio_scaled"``: a constant rescaled from the equal-mass
        value ``base``; viscosity ``base * sqrt(R)``, diffusion
        ``base * sqrt((1 + R) / (2 R))``.
    base : float
        Reference coefficient.
    mass_ratio : float
        ``R = m2 / m1``.
    poly : tuple of float
        ``(a1, a2)`` for the quadratic models.
    """

    kind: str
    base: float
    mass_ratio: float = 1.0
    poly: tuple = (0.66, 12.0)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown transport model {self.kind!r}")
        if not self.base > 0:
            raise ConfigError("transport base coefficient must be positive")
        if not self.mass_ratio > 0:
            raise ConfigError("mass ratio must be positive")

    @property
    def is_constant(self) -> bool:
        return self.kind in ("constant", "mass_ratio_scaled")

    def _poly(self, c):
        a1, a2 = self.poly
        return 1.0 + a1 * c + a2 * c * c


def mass_ratio_viscosity(eta1, R):
    """Shear viscosity of a fluid of mass-``R`` particles, ``eta1 sqrt(R)``."""
    return eta1 * np.sqrt(R)


def mass_ratio_diffusion(chi1, R):
    """Diffusion coefficient rescaled from equal masses, ``chi1 sqrt((1+R)/(2R))``."""
    return chi1 * np.sqrt((1.0 + R) / (2.0 * R))


def viscosity_of_c(c, model: TransportModel, eos: EosParams | None = None):
    """Shear viscosity at concentration ``c``."""
    c = np.asarray(c, dtype=float)
    if model.kind == "constant":
        return np.full_like(c, model.base)
    if model.kind == "quadratic_viscosity":
        return model.base * model._poly(c)
    if model.kind == "linear_kinematic_interp":
        if eos is None:
            raise ConfigError("linear_kinematic_interp viscosity needs EOS parameters")
        nu2 = model.base / np.sqrt(model.mass_ratio)
        return density_from_concentration(c, eos) * (c * model.base + (1.0 - c) * nu2)
    if model.kind == "mass_ratio_scaled":
        return np.full_like(c, mass_ratio_viscosity(model.base, model.mass_ratio))
    raise ConfigError(f"{model.kind} is not a viscosity model")


def diffusion_of_c(c, model: TransportModel, eos: EosParams | None = None):
    """Mass diffusion coefficient at concentration ``c``."""
    c = np.asarray(c, dtype=float)
    if model.kind == "constant":
        return np.full_like(c, model.base)
    if model.kind == "stokes_einstein_diffusion":
        return model.base / model._poly(c)
    if model.kind == "mass_ratio_scaled":
        return np.full_like(c, mass_ratio_diffusion(model.base, model.mass_ratio))
    raise ConfigError(f"{model.kind} is not a diffusion model")


def inv_mu_c_kBT(c, p: EosParams):
    """Thermodynamic factor ``mu_c^{-1} k_B T`` used in the mass-noise amplitude.

    For the hard-disk model this is ``c (1-c) [c m2 + (1-c) m1]`` with ``c``
    clamped to ``[0, 1]``, so overshoots carry no noise.
    """
    c = np.asarray(c, dtype=float)
    if p.mu_model == "constant":
        return np.full_like(c, p.inv_mu_value)
    cc = np.clip(c, 0.0, 1.0)
    return cc * (1.0 - cc) * (cc * p.m2 + (1.0 - cc) * p.m1)


def check_concentration(c, hard_fail: float | None = 0.5, where: str = "") -> float:
    """Log excursions of ``c`` outside ``[0, 1]``.

    Returns the largest excursion; raises :class:`EOSError` when it exceeds
    ``hard_fail``.
    """
    c = np.asarray(c)
    over = np.maximum(c - 1.0, 0.0) + np.maximum(-c, 0.0)
    worst = float(over.max()) if over.size else 0.0
    if worst > 0.0:
        idx = np.unravel_index(int(np.argmax(over)), c.shape)
        log.warning("concentration outside [0, 1]%s: excursion %.3e at %s",
                    f" ({where})" if where else "", worst, idx)
        if hard_fail is not None and worst > hard_fail:
            raise EOSError(f"concentration excursion {worst:.3e} exceeds {hard_fail}")
    return worst
