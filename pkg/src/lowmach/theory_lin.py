"""Closed-form linearized fluctuation spectra.

Pure functions of a reference state, used as oracles by the analysis code
and the tests.  Spectra are continuum covariances per unit volume; the
discrete normalization in :mod:`lowmach.analysis` is chosen to match them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TheoryParams",
    "equilibrium_static_factors",
    "rayleigh_peak",
    "noneq_Scc_full",
    "noneq_Scc_simplified",
    "gravity_cutoff",
]


@dataclass(frozen=True)
class TheoryParams:
    """Reference state of the linearized theory.

    Parameters
    ----------
    rho : float
        Density.
    beta : float
        Solutal expansion coefficient.
    nu, chi : float
        Kinematic viscosity and mass diffusion coefficient.
    kBT : float
        Thermal energy.
    inv_mu : float
        ``mu_c^{-1} k_B T``, the concentration susceptibility factor.
    g : float
        Gravitational acceleration, positive when it points against the
        concentration gradient that stabilises the interface.
    h_par, h_perp : float
        Concentration gradient components parallel and perpendicular to the
        wavevector's complement (``h_par`` drives the giant fluctuations).
    dV : float
        Cell volume, for converting to per-cell variances.
    c_T : float, optional
        Isothermal sound speed; ``None`` is the low Mach limit.
    """

    rho: float
    beta: float = 0.0
    nu: float = 1.0
    chi: float = 1.0
    kBT: float = 1.0
    inv_mu: float = 1.0
    g: float = 0.0
    h_par: float = 0.0
    h_perp: float = 0.0
    dV: float = 1.0
    c_T: float | None = None

    @property
    def eta(self) -> float:
        """Shear viscosity ``rho nu``."""
        return self.rho * self.nu


def equilibrium_static_factors(tp: TheoryParams):
    """Wavenumber-independent equilibrium spectra.

    Returns
    -------
    S_rhorho, S_vv, S_cc, S_crho : float
        Density, per-component velocity, concentration and cross spectra.
    """
    S_cc = tp.inv_mu / tp.rho
    S_crho = tp.rho * tp.beta * S_cc
    S_rr = tp.beta**2 * tp.rho * tp.inv_mu
    if tp.c_T is not None:
        S_rr = S_rr + tp.rho * tp.kBT / tp.c_T**2
    S_vv = tp.kBT / tp.rho
    return S_rr, S_vv, S_cc, S_crho


def rayleigh_peak(k, omega, tp: TheoryParams):
    """Dynamic density spectrum ``beta^2 rho mu^-1 kT 2 chi k^2 / (omega^2 + chi^2 k^4)``.

    Its integral over ``omega / (2 pi)`` is the static density spectrum.
    """
    k = np.asarray(k, dtype=float)
    g = tp.chi * k * k
    return tp.beta**2 * tp.rho * tp.inv_mu * 2.0 * g / (np.asarray(omega) ** 2 + g * g)


def noneq_Scc_full(k_perp, tp: TheoryParams, include_equilibrium: bool = True):
    """Concentration spectrum under a steady gradient, including the
    gradient-direction coupling term and (optionally) the equilibrium part.

    Parameters
    ----------
    k_perp : array_like
        Wavenumber perpendicular to the gradient.
    tp : TheoryParams
    include_equilibrium : bool
        Add the flat equilibrium contribution.
    """
    k = np.asarray(k_perp, dtype=float)
    nu, chi = tp.nu, tp.chi
    denom = (nu * chi * k**4 + tp.h_par * tp.g * tp.beta
             + tp.beta**2 * chi**3 * nu / (nu + chi) ** 2 * k**2 * tp.h_perp**2)
    with np.errstate(divide="ignore"):
        out = nu * tp.kBT * tp.h_par**2 / (tp.rho * (nu + chi) * denom)
    if tp.h_par == 0.0:
        out = np.zeros_like(k)
    if include_equilibrium:
        out = out + tp.inv_mu / tp.rho
    return out


def noneq_Scc_simplified(k, tp: TheoryParams):
    """Non-equilibrium part ``(nu/(nu+chi)) kT h^2 / (eta chi k^4 + h rho g beta)``."""
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore"):
        return (tp.nu / (tp.nu + tp.chi) * tp.kBT * tp.h_par**2
                / (tp.eta * tp.chi * k**4 + tp.h_par * tp.rho * tp.g * tp.beta))


def gravity_cutoff(tp: TheoryParams) -> float:
    """Crossover wavenumber ``[h rho g beta / (eta chi)]^(1/4)``."""
    return float((tp.h_par * tp.rho * tp.g * tp.beta / (tp.eta * tp.chi)) ** 0.25)
