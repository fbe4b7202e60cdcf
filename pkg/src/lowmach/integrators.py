"""Time integrators for the fluctuating low Mach number equations.

Every scheme is built from one projected Euler increment: the incoming
momentum is projected onto the divergence constraint of the current stage,
all fluxes are evaluated with that velocity, and the conserved variables are
advanced.  Both densities are advected with the same face velocities, so
each stage preserves the equation of state up to the Poisson tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .eos import (
    EosParams,
    TransportModel,
    check_concentration,
    density_from_concentration,
    diffusion_of_c,
    eos_residual,
    inv_mu_c_kBT,
    viscosity_of_c,
)
from .errors import ConfigError, DegenerateStateError, SolverError
from .fields import FaceVec, Grid2D, SimState, interp_cell_to_faces, interp_cell_to_nodes
from .operators import (
    boundary_normal_velocity,
    diffusive_flux_faces,
    divergence_cell,
    momentum_advection_div,
    scalar_advection_div,
    stress_divergence,
    viscous_divergence,
    zero_boundary_normal,
)
from .projection import PoissonSettings, SolveInfo, compute_S, project_RS
from .stochastic import (
    RK3_WEIGHTS,
    NoiseConfig,
    NoiseDraw,
    draw_noise,
    stochastic_mass_flux,
    stochastic_momentum_flux,
)

__all__ = [
    "FluidModel",
    "StepScheme",
    "Increment",
    "euler_increment",
    "euler_substep",
    "step_euler_maruyama",
    "step_trapezoidal",
    "step_midpoint",
    "step_rk3",
    "step",
    "eos_drift_correction",
    "make_state",
    "projected_velocity",
    "diagnostics",
    "viscous_cfl",
    "check_time_step",
]

log = logging.getLogger(__name__)

SCHEMES = ("euler_maruyama", "trapezoidal", "midpoint", "rk3")


@dataclass(frozen=True)
class FluidModel:
    """Everything except the state needed to evaluate the right-hand side.

    Parameters
    ----------
    grid : Grid2D
    eos : EosParams
    viscosity, diffusion : TransportModel
    gravity : tuple of float
        Body acceleration ``(gx, gy)``.
    noise : NoiseConfig
    poisson : PoissonSettings
    """

    grid: Grid2D
    eos: EosParams
    viscosity: TransportModel
    diffusion: TransportModel
    gravity: tuple = (0.0, 0.0)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    poisson: PoissonSettings = field(default_factory=PoissonSettings)

    def seeds(self, state: SimState):
        """Seed of each realization: scalar, or ``seed + b`` over the batch."""
        batch = state.batch_shape
        if not batch:
            return self.noise.seed
        return self.noise.seed + np.arange(int(np.prod(batch)))


@dataclass(frozen=True)
class StepScheme:
    """Integrator choice and EOS drift-correction cadence.

    Parameters
    ----------
    kind : {"euler_maruyama", "trapezoidal", "midpoint", "rk3"}
    drift_correction_every : int, optional
        Apply the drift correction every this many steps (0 disables it).
        Defaults to 1 for Euler-Maruyama, trapezoidal and RK3 and 0 for
        the midpoint rule.  Forward Euler with centred advection amplifies
        EOS errors exponentially, so it is corrected by default too.
    allow_uncorrected : bool
        Permit trapezoidal or RK3 without drift correction (for studying
        the drift itself).
    """

    kind: str = "midpoint"
    drift_correction_every: int | None = None
    allow_uncorrected: bool = False

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.kind!r}")
        if self.drift_correction_every is not None and self.drift_correction_every < 0:
            raise ConfigError("drift_correction_every must be non-negative")
        if (self.kind in ("trapezoidal", "rk3") and self.correction_every == 0
                and not self.allow_uncorrected):
            raise ConfigError(f"{self.kind} requires EOS drift correction")

    @property
    def correction_every(self) -> int:
        if self.drift_correction_every is not None:
            return self.drift_correction_every
        return 0 if self.kind == "midpoint" else 1


@dataclass
class Increment:
    """Result of one projected Euler increment.

    ``m`` is the projected input momentum; ``drho``, ``drho1`` and ``dm``
    are the increments over ``dt_adv``.
    """

    drho: np.ndarray
    drho1: np.ndarray
    dm: FaceVec
    m: FaceVec
    v: FaceVec
    info: SolveInfo


class _Coefficients:
    """Cell, face and node coefficients of one stage."""

    def __init__(self, rho, rho1, model: FluidModel):
        grid, eos = model.grid, model.eos
        if np.any(rho <= 0):
            raise DegenerateStateError("non-positive density")
        bc = grid.bc
        c = rho1 / rho
        rho_b = bc.reservoir_values(lambda cb: float(density_from_concentration(cb, eos)))
        self.c = c
        self.rho_f = interp_cell_to_faces(rho, grid, rho_b)
        self.rho1_b = bc.reservoir_values(
            lambda cb: cb * float(density_from_concentration(cb, eos)))
        self.rho_b = rho_b
        chi = diffusion_of_c(c, model.diffusion, eos)
        eta = viscosity_of_c(c, model.viscosity, eos)
        chi_b = bc.reservoir_values(lambda cb: float(diffusion_of_c(cb, model.diffusion, eos)))
        eta_b = bc.reservoir_values(lambda cb: float(viscosity_of_c(cb, model.viscosity, eos)))
        self.chi_f = interp_cell_to_faces(chi, grid, chi_b)
        self.eta = eta
        self.eta_n = interp_cell_to_nodes(eta, grid, eta_b)
        self.rho = rho

    def rho_mu_faces(self, model: FluidModel) -> FaceVec:
        eos = model.eos
        rmu_b = model.grid.bc.reservoir_values(
            lambda cb: float(density_from_concentration(cb, eos) * inv_mu_c_kBT(cb, eos)))
        return interp_cell_to_faces(self.rho * inv_mu_c_kBT(self.c, eos), model.grid, rmu_b)


def _buoyancy(rho_f, g: float, grid: Grid2D, d: int):
    """Gravity force on faces normal to ``d``.

    Along a bounded direction the transverse mean of ``rho_f g`` depends on
    the face position along ``d`` only, so it is an exact discrete gradient
    that the projection absorbs into the pressure.  Dropping it keeps the
    hydrostatic balance out of the accumulated momentum, which would
    otherwise dominate the projection's right-hand side.
    """
    if g == 0.0:
        return np.zeros_like(rho_f)
    if grid.periodic(d):
        return rho_f * g
    axis = -1 if d == 0 else -2
    return (rho_f - rho_f.mean(axis=axis, keepdims=True)) * g


def euler_increment(rho, rho1, m_tilde: FaceVec, model: FluidModel, dt_noise: float,
                    dt_adv: float, draw: NoiseDraw | None, stats: list | None = None) -> Increment:
    """One projected Euler increment.

    Parameters
    ----------
    rho, rho1 : ndarray
        Stage densities.
    m_tilde : FaceVec
        Stage momentum before projection.
    model : FluidModel
    dt_noise : float
        Interval that sets the noise amplitudes.
    dt_adv : float
        Interval over which the tendencies are integrated.
    draw : NoiseDraw or None
        Variates of this stage; ``None`` switches noise off.
    stats : list, optional
        Receives the :class:`SolveInfo` of the projection.

    Returns
    -------
    Increment
    """
    grid, eos, noise = model.grid, model.eos, model.noise
    dV = grid.cell_volume
    co = _Coefficients(rho, rho1, model)

    F = diffusive_flux_faces(co.rho_f * co.chi_f, co.c, grid)
    use_noise = draw is not None and noise.active
    if use_noise and noise.include_mass_noise:
        F = F + stochastic_mass_flux(co.chi_f, co.rho_mu_faces(model), dt_noise, dV, draw,
                                     grid, noise.variance_scale)

    S = compute_S(F, grid, eos)
    v_bnd = boundary_normal_velocity(FaceVec.zeros(grid, rho.shape[:-2]), F, grid, eos)
    proj = project_RS(m_tilde, co.rho_f, S, grid, model.poisson, v_bnd)
    v, m = proj.v, proj.m
    if stats is not None:
        stats.append(proj.info)

    force = viscous_divergence(co.eta, co.eta_n, v, grid)
    if use_noise and noise.include_momentum_noise:
        sig = stochastic_momentum_flux(co.eta, co.eta_n, dt_noise, dV, draw, grid, eos.kBT,
                                       noise.variance_scale)
        force = force + stress_divergence(sig.sxx, sig.syy, sig.sxy, grid)
    gx, gy = model.gravity
    if gx or gy:
        force = force + FaceVec(_buoyancy(co.rho_f.x, gx, grid, 0),
                                _buoyancy(co.rho_f.y, gy, grid, 1))
    force = force - momentum_advection_div(m, v, grid)

    drho1 = dt_adv * (divergence_cell(F, grid) - scalar_advection_div(rho1, v, grid, co.rho1_b))
    drho = -dt_adv * scalar_advection_div(rho, v, grid, co.rho_b)
    dm = zero_boundary_normal(force * dt_adv, grid)
    if not (np.all(np.isfinite(drho1)) and np.all(np.isfinite(dm.x))
            and np.all(np.isfinite(dm.y))):
        raise SolverError("non-finite values in the Euler increment")
    return Increment(drho, drho1, dm, m, v, proj.info)


def euler_substep(state: SimState, model: FluidModel, dt_noise: float, dt_adv: float,
                  draw: NoiseDraw | None):
    """Advance ``state`` by one projected Euler step.

    Returns
    -------
    rho1, rho : ndarray
    m_tilde : FaceVec
        Unprojected momentum after the update.
    """
    inc = euler_increment(state.rho, state.rho1, state.m, model, dt_noise, dt_adv, draw)
    return state.rho1 + inc.drho1, state.rho + inc.drho, inc.m + inc.dm


def _draws(state: SimState, model: FluidModel, n: int):
    if not model.noise.active:
        return [None] * n
    seeds = model.seeds(state)
    return [draw_noise(seeds, state.step, k, model.grid, model.noise.filter_width)
            for k in range(n)]


def _finish(state: SimState, rho, rho1, m, dt, model: FluidModel, scheme: StepScheme | None):
    new = SimState(rho, rho1, m, state.t + dt, state.step + 1)
    every = scheme.correction_every if scheme is not None else 0
    if every and new.step % every == 0:
        r1, r2 = eos_drift_correction(new.rho1, new.rho2, model.eos)
        new.rho1, new.rho = r1, r1 + r2
    return new


def step_euler_maruyama(state: SimState, model: FluidModel, dt: float,
                        scheme: StepScheme | None = None, stats: list | None = None) -> SimState:
    """Euler-Maruyama step (weak order one)."""
    (W,) = _draws(state, model, 1)
    k = euler_increment(state.rho, state.rho1, state.m, model, dt, dt, W, stats)
    return _finish(state, state.rho + k.drho, state.rho1 + k.drho1, k.m + k.dm, dt, model,
                   scheme)


def step_trapezoidal(state: SimState, model: FluidModel, dt: float,
                     scheme: StepScheme | None = None, stats: list | None = None) -> SimState:
    """Explicit trapezoidal (Heun) predictor-corrector; the draw is reused."""
    (W,) = _draws(state, model, 1)
    k1 = euler_increment(state.rho, state.rho1, state.m, model, dt, dt, W, stats)
    rho_p, rho1_p, m_p = state.rho + k1.drho, state.rho1 + k1.drho1, k1.m + k1.dm
    k2 = euler_increment(rho_p, rho1_p, m_p, model, dt, dt, W, stats)
    # Densities are combined as sums of increments, which keeps the totals
    # exact to roundoff (the increments are discrete divergences).
    rho = state.rho + 0.5 * (k1.drho + k2.drho)
    rho1 = state.rho1 + 0.5 * (k1.drho1 + k2.drho1)
    m = k1.m * 0.5 + (k2.m + k2.dm) * 0.5
    return _finish(state, rho, rho1, m, dt, model, scheme)


def step_midpoint(state: SimState, model: FluidModel, dt: float,
                  scheme: StepScheme | None = None, stats: list | None = None) -> SimState:
    """Explicit midpoint rule.

    The predictor advances half a step with ``W1``; the corrector evaluates
    the tendencies at the midpoint with ``(W1 + W2)/sqrt(2)`` and applies
    them over the full step from the initial state.
    """
    W1, W2 = _draws(state, model, 2)
    k1 = euler_increment(state.rho, state.rho1, state.m, model, 0.5 * dt, 0.5 * dt, W1, stats)
    rho_h, rho1_h, m_h = state.rho + k1.drho, state.rho1 + k1.drho1, k1.m + k1.dm
    W = None if W1 is None else W1.combine(1 / np.sqrt(2), W2, 1 / np.sqrt(2))
    k2 = euler_increment(rho_h, rho1_h, m_h, model, dt, dt, W, stats)
    return _finish(state, state.rho + k2.drho, state.rho1 + k2.drho1, k1.m + k2.dm, dt, model,
                   scheme)


def step_rk3(state: SimState, model: FluidModel, dt: float,
             scheme: StepScheme | None = None, stats: list | None = None) -> SimState:
    """Three-stage strong-stability-preserving Runge-Kutta step.

    Stage noises are ``W1 + w_k W2`` with the weights that maximise the weak
    order for additive noise.
    """
    W1, W2 = _draws(state, model, 2)
    Ws = [None] * 3 if W1 is None else [W1.combine(1.0, W2, w) for w in RK3_WEIGHTS]
    k1 = euler_increment(state.rho, state.rho1, state.m, model, dt, dt, Ws[0], stats)
    rho_a, rho1_a, m_a = state.rho + k1.drho, state.rho1 + k1.drho1, k1.m + k1.dm
    k2 = euler_increment(rho_a, rho1_a, m_a, model, dt, dt, Ws[1], stats)
    rho_b = state.rho + 0.25 * (k1.drho + k2.drho)
    rho1_b = state.rho1 + 0.25 * (k1.drho1 + k2.drho1)
    m_b = k1.m * 0.75 + (k2.m + k2.dm) * 0.25
    k3 = euler_increment(rho_b, rho1_b, m_b, model, dt, dt, Ws[2], stats)
    rho = state.rho + ((k1.drho + k2.drho) / 6.0 + (2.0 / 3.0) * k3.drho)
    rho1 = state.rho1 + ((k1.drho1 + k2.drho1) / 6.0 + (2.0 / 3.0) * k3.drho1)
    m = k1.m * (1.0 / 3.0) + (k3.m + k3.dm) * (2.0 / 3.0)
    return _finish(state, rho, rho1, m, dt, model, scheme)


_STEPPERS = {
    "euler_maruyama": step_euler_maruyama,
    "trapezoidal": step_trapezoidal,
    "midpoint": step_midpoint,
    "rk3": step_rk3,
}


def step(state: SimState, model: FluidModel, dt: float, scheme: StepScheme,
         stats: list | None = None) -> SimState:
    """Advance one step with ``scheme``, applying drift correction on cadence.

    ``stats``, if given, collects the projection :class:`SolveInfo` of
    every stage.
    """
    return _STEPPERS[scheme.kind](state, model, dt, scheme, stats)


def eos_drift_correction(rho1, rho2, p: EosParams):
    """Conservative projection of ``(rho1, rho2)`` back onto the EOS.

    Cellwise this is the orthogonal projection onto the line
    ``rho1/rho1_bar + rho2/rho2_bar = 1``; the global means of both
    densities are then restored, so total masses are unchanged and the
    remaining residual is the (uniform) mean of the input residual.
    """
    a2, b2 = p.rho1_bar**2, p.rho2_bar**2
    den = a2 + b2
    A1, A2, B = a2 / den, b2 / den, p.rho1_bar * p.rho2_bar / den
    t1 = A1 * rho1 - B * rho2
    t2 = A2 * rho2 - B * rho1
    axes = (-2, -1)
    r1 = t1 - t1.mean(axis=axes, keepdims=True) + rho1.mean(axis=axes, keepdims=True)
    r2 = t2 - t2.mean(axis=axes, keepdims=True) + rho2.mean(axis=axes, keepdims=True)
    return r1, r2


def make_state(grid: Grid2D, eos: EosParams, c, velocity: FaceVec | None = None,
               t: float = 0.0, step: int = 0) -> SimState:
    """State on the EOS with concentration ``c`` and face velocity ``velocity``."""
    c = np.asarray(c, dtype=float)
    rho = density_from_concentration(c, eos)
    if velocity is None:
        m = FaceVec.zeros(grid, c.shape[:-2])
    else:
        rho_b = grid.bc.reservoir_values(lambda cb: float(density_from_concentration(cb, eos)))
        m = velocity * interp_cell_to_faces(rho, grid, rho_b)
    return SimState(rho, c * rho, m, t, step)


def projected_velocity(state: SimState, model: FluidModel):
    """Face velocity of the state under the deterministic constraint.

    Returns
    -------
    v : FaceVec
    m : FaceVec
        Projected momentum.
    """
    co = _Coefficients(state.rho, state.rho1, model)
    F = diffusive_flux_faces(co.rho_f * co.chi_f, co.c, model.grid)
    S = compute_S(F, model.grid, model.eos)
    v_bnd = boundary_normal_velocity(FaceVec.zeros(model.grid, state.batch_shape), F,
                                     model.grid, model.eos)
    proj = project_RS(state.m, co.rho_f, S, model.grid, model.poisson, v_bnd)
    return proj.v, proj.m


def diagnostics(state: SimState, model: FluidModel) -> dict:
    """Conservation and EOS diagnostics (worst case over a batch)."""
    dV = model.grid.cell_volume
    delta = eos_residual(state.rho1, state.rho2, model.eos)
    c = state.rho1 / state.rho
    axes = (-2, -1)
    return {
        "step": state.step,
        "t": state.t,
        "max_eos": float(np.abs(delta).max()),
        "mass1": np.asarray(state.rho1.sum(axis=axes) * dV),
        "mass2": np.asarray(state.rho2.sum(axis=axes) * dV),
        "momx": np.asarray(state.m.x.sum(axis=axes) * dV),
        "momy": np.asarray(state.m.y.sum(axis=axes) * dV),
        "c_min": float(c.min()),
        "c_max": float(c.max()),
    }


def viscous_cfl(state: SimState, model: FluidModel, dt: float) -> float:
    """Largest ``nu dt / h^2`` over the state."""
    c = state.rho1 / state.rho
    nu = viscosity_of_c(c, model.viscosity, model.eos) / state.rho
    h = min(model.grid.dx, model.grid.dy)
    return float(nu.max() * dt / h**2)


def check_time_step(state: SimState, model: FluidModel, dt: float, allow: bool = False) -> float:
    """Reject ``dt`` when the explicit viscous limit ``nu dt/h^2 < 1/4`` fails."""
    alpha = viscous_cfl(state, model, dt)
    if alpha >= 0.25:
        msg = f"viscous CFL number {alpha:.3f} violates the explicit limit 0.25"
        if not allow:
            raise ConfigError(msg)
        log.warning("%s (override active)", msg)
    check_concentration(state.rho1 / state.rho, hard_fail=None, where="initial state")
    return alpha
