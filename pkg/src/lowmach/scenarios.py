"""Scenario setup and run orchestration.

A scenario turns a :class:`~lowmach.config.RunConfig` into a model, an
initial state and a sampling plan, advances all realizations of the batch
together, and writes spectra, profiles, checkpoints and a run log.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import analysis as an
from .config import RunConfig
from .eos import (
    EosParams,
    TransportModel,
    check_concentration,
    density_from_concentration,
    diffusion_of_c,
    inv_mu_c_kBT,
    solutal_expansion,
    viscosity_of_c,
)
from .errors import ConfigError, FormatError, LowMachError
from .fields import (
    PERIODIC,
    RESERVOIR,
    WALL_FREESLIP,
    WALL_NOSLIP,
    BoundaryData,
    FaceVec,
    Grid2D,
    SimState,
    Side,
    write_snapshot,
)
from .integrators import (
    FluidModel,
    StepScheme,
    check_time_step,
    diagnostics,
    make_state,
    projected_velocity,
    step,
)
from .projection import PoissonSettings
from .stochastic import NoiseConfig
from .theory_lin import TheoryParams, gravity_cutoff

__all__ = [
    "SCENARIOS",
    "InvariantError",
    "build_grid",
    "build_model",
    "build_scheme",
    "initial_state",
    "theory_params",
    "save_checkpoint",
    "load_checkpoint",
    "RunLog",
    "run_scenario",
    "convergence_study",
    "EXPECTED_ORDERS",
]

log = logging.getLogger(__name__)

SCENARIOS = ("equilibrium", "giant_fluctuations", "mixing", "convergence")
CHECKPOINT_FORMAT = "lowmach-checkpoint"
CHECKPOINT_VERSION = 1
EXPECTED_ORDERS = {
    "euler_maruyama": (1.0, 0.2),
    "trapezoidal": (2.0, 0.25),
    "midpoint": (2.0, 0.25),
    "rk3": (3.0, 0.3),
}


class InvariantError(LowMachError):
    """A run diagnostic exceeded its allowed bound."""


def _side(cfg: RunConfig, name: str) -> Side:
    kind = cfg[f"bc.{name}"]
    if kind == "reservoir":
        c = cfg[f"bc.{name}_c"]
        if c is None:
            raise ConfigError(f"bc.{name}_c is required for a reservoir side")
        return Side(RESERVOIR, c=c)
    if kind in ("wall", "noslip", WALL_NOSLIP):
        return Side(WALL_NOSLIP)
    if kind in ("slip", "freeslip", WALL_FREESLIP):
        return Side(WALL_FREESLIP)
    if kind == PERIODIC:
        return Side(PERIODIC)
    raise ConfigError(f"bc.{name}: unknown boundary kind {kind!r}")


def build_grid(cfg: RunConfig) -> Grid2D:
    bc = BoundaryData(_side(cfg, "x_lo"), _side(cfg, "x_hi"), _side(cfg, "y_lo"),
                      _side(cfg, "y_hi"))
    return Grid2D(cfg["grid.nx"], cfg["grid.ny"], cfg["grid.dx"], cfg["grid.dy"],
                  cfg["grid.thickness"], bc)


def build_model(cfg: RunConfig) -> FluidModel:
    """Model from the grid, EOS, transport, gravity, noise and Poisson keys."""
    eos = EosParams(cfg["eos.rho1_bar"], cfg["eos.rho2_bar"], cfg["eos.kBT"], cfg["eos.m1"],
                    cfg["eos.m2"], cfg["eos.mu_model"], cfg["eos.inv_mu_value"])
    R = cfg["transport.mass_ratio"]
    visc = TransportModel(cfg["transport.viscosity_model"], cfg["transport.viscosity"], R)
    diff = TransportModel(cfg["transport.diffusion_model"], cfg["transport.diffusion"], R)
    noise = NoiseConfig(cfg["noise.seed"], cfg["noise.mass"], cfg["noise.momentum"],
                        cfg["noise.filter_width"], cfg["noise.variance_scale"])
    poisson = PoissonSettings(rel_tol=cfg["poisson.rel_tol"], max_iter=cfg["poisson.max_iter"],
                              method=cfg["poisson.method"])
    return FluidModel(build_grid(cfg), eos, visc, diff, (cfg["gravity.x"], cfg["gravity.y"]),
                      noise, poisson)


def build_scheme(cfg: RunConfig) -> StepScheme:
    every = cfg["integrator.drift_correction_every"]
    return StepScheme(cfg["integrator.scheme"], None if every < 0 else every,
                      cfg["integrator.allow_uncorrected"])


def _init_rng(seed: int, b: int) -> np.random.Generator:
    # counter word 0 = 1 keeps initial-condition streams apart from the noise
    return np.random.Generator(np.random.Philox(key=seed + b, counter=[1, 0, 0, 0]))


def _thermal(model: FluidModel, c_mean: float, B: int, seed: int):
    """Concentration and velocity with equilibrium cell variances."""
    grid, eos = model.grid, model.eos
    dV = grid.cell_volume
    rho = float(density_from_concentration(c_mean, eos))
    s_c = np.sqrt(float(inv_mu_c_kBT(c_mean, eos)) / rho / dV) if model.noise.include_mass_noise \
        else 0.0
    s_v = np.sqrt(eos.kBT / (rho * dV)) if model.noise.include_momentum_noise else 0.0
    c = np.empty((B,) + grid.shape)
    vx = np.empty((B,) + grid.face_shape(0))
    vy = np.empty((B,) + grid.face_shape(1))
    for b in range(B):
        rng = _init_rng(seed, b)
        c[b] = c_mean + s_c * rng.standard_normal(grid.shape)
        vx[b] = s_v * rng.standard_normal(grid.face_shape(0))
        vy[b] = s_v * rng.standard_normal(grid.face_shape(1))
    return c, FaceVec(vx, vy)


def initial_state(cfg: RunConfig, model: FluidModel) -> SimState:
    """Initial condition of the configured scenario (batch axis first)."""
    name = cfg["scenario.name"]
    if name not in SCENARIOS:
        raise ConfigError(f"scenario.name: unknown scenario {name!r}")
    grid, eos = model.grid, model.eos
    B = cfg["scenario.batch"]
    if B < 1:
        raise ConfigError("scenario.batch must be at least 1")
    X, Y = grid.mesh()
    Lx, Ly = grid.lengths
    v = None
    if name == "equilibrium":
        if cfg["scenario.thermal_init"]:
            c, v = _thermal(model, cfg["scenario.c_mean"], B, cfg["noise.seed"])
        else:
            c = np.full((B,) + grid.shape, cfg["scenario.c_mean"])
    elif name == "giant_fluctuations":
        lo, hi = cfg["bc.y_lo_c"], cfg["bc.y_hi_c"]
        if lo is None or hi is None:
            raise ConfigError("giant_fluctuations needs reservoir values bc.y_lo_c and bc.y_hi_c")
        c = np.broadcast_to(lo + (hi - lo) * Y / Ly, (B,) + grid.shape).copy()
    elif name == "mixing":
        band = (Y >= cfg["scenario.band_lo"] * Ly) & (Y <= cfg["scenario.band_hi"] * Ly)
        c = np.broadcast_to(np.where(band, 1.0, 0.0), (B,) + grid.shape).copy()
        if cfg["scenario.thermal_init"]:
            _, v = _thermal(model, 0.5, B, cfg["noise.seed"])
    else:
        a = cfg["scenario.amplitude"]
        kx, ky = 2 * np.pi / Lx, 2 * np.pi / Ly
        c = np.broadcast_to(cfg["scenario.c_mean"] + a * np.sin(kx * X) * np.cos(ky * Y),
                            (B,) + grid.shape).copy()
        Xf, Yf = grid.face_mesh(0)
        Xg, Yg = grid.face_mesh(1)
        v = FaceVec(np.broadcast_to(a * (np.sin(ky * Yf) + 0.5), (B,) + Xf.shape).copy(),
                    np.broadcast_to(a * np.cos(kx * Xg), (B,) + Xg.shape).copy())
    if B == 1:
        c = c[0]
        v = None if v is None else FaceVec(v.x[0], v.y[0])
    state = make_state(grid, eos, c, v)
    if v is not None:
        _, state.m = projected_velocity(state, model)
    return state


def theory_params(cfg: RunConfig, model: FluidModel | None = None) -> TheoryParams:
    """Reference state for the linearized theory.

    The concentration is ``scenario.c_ref``, or the mean of the two
    reservoir values for a gradient, or ``scenario.c_mean``.
    """
    model = model or build_model(cfg)
    eos = model.eos
    lo, hi = cfg["bc.y_lo_c"], cfg["bc.y_hi_c"]
    h_par = cfg["scenario.h_par"]
    if h_par is None:
        h_par = abs(lo - hi) / model.grid.lengths[1] if lo is not None and hi is not None else 0.0
    c = cfg["scenario.c_ref"]
    if c is None:
        c = 0.5 * (lo + hi) if lo is not None and hi is not None else cfg["scenario.c_mean"]
    rho = float(density_from_concentration(c, eos))
    eta = float(viscosity_of_c(c, model.viscosity, eos))
    chi = float(diffusion_of_c(c, model.diffusion, eos))
    g = float(np.hypot(*model.gravity))
    return TheoryParams(rho=rho, beta=float(solutal_expansion(c, eos)), nu=eta / rho, chi=chi,
                        kBT=eos.kBT, inv_mu=float(inv_mu_c_kBT(c, eos)), g=g, h_par=h_par,
                        dV=model.grid.cell_volume)


def save_checkpoint(path, state: SimState, config_text: str = "", extra: dict | None = None):
    """Write the full state (and optional accumulators) to an ``.npz`` file.

    The noise is counter based, so the step number is the whole RNG state.
    """
    arrays = {f"acc_{k}": np.asarray(v) for k, v in (extra or {}).items()}
    np.savez(path, format=CHECKPOINT_FORMAT, version=CHECKPOINT_VERSION, rho=state.rho,
             rho1=state.rho1, mx=state.m.x, my=state.m.y, t=state.t, step=state.step,
             config=config_text, **arrays)


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns
    -------
    state : SimState
    config_text : str
    extra : dict

    Raises
    ------
    FormatError
        On unreadable files, a foreign format or a version mismatch.
    """
    try:
        with np.load(path, allow_pickle=False) as z:
            data = {k: z[k] for k in z.files}
    except (OSError, ValueError, EOFError, KeyError) as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from None
    except Exception as exc:  # zipfile raises its own error types on corruption
        raise FormatError(f"corrupted checkpoint {path}: {exc}") from None
    if str(data.get("format", "")) != CHECKPOINT_FORMAT:
        raise FormatError(f"{path} is not a lowmach checkpoint")
    if int(data["version"]) != CHECKPOINT_VERSION:
        raise FormatError(f"checkpoint version {int(data['version'])} is not supported")
    for key in ("rho", "rho1", "mx", "my", "t", "step"):
        if key not in data:
            raise FormatError(f"checkpoint {path} lacks {key!r}")
    state = SimState(data["rho"], data["rho1"], FaceVec(data["mx"], data["my"]),
                     float(data["t"]), int(data["step"]))
    extra = {k[4:]: v for k, v in data.items() if k.startswith("acc_")}
    return state, str(data["config"]), extra


class RunLog:
    """Line-oriented ``key=value`` log."""

    def __init__(self, path):
        self._fh = open(path, "a") if path is not None else None

    def write(self, event: str, **fields):
        parts = [f"event={event}"]
        for k, v in fields.items():
            if isinstance(v, float):
                v = f"{v:.10g}"
            elif isinstance(v, np.ndarray):
                v = ",".join(f"{x:.17g}" for x in np.ravel(v))
            parts.append(f"{k}={v}")
        line = " ".join(parts)
        if self._fh is not None:
            self._fh.write(line + "\n")
            self._fh.flush()
        log.info(line)

    def close(self):
        if self._fh is not None:
            self._fh.close()


@dataclass
class _Accumulator:
    """Per-sample statistics gathered during a run (batch axis kept)."""

    spectra: dict = field(default_factory=dict)
    profiles: list = field(default_factory=list)
    interface: list = field(default_factory=list)
    times: list = field(default_factory=list)

    def to_arrays(self) -> dict:
        out = {f"spec_{k}": np.array(v) for k, v in self.spectra.items()}
        if self.profiles:
            out["profiles"] = np.array(self.profiles)
        if self.interface:
            out["interface"] = np.array(self.interface)
        if self.times:
            out["times"] = np.array(self.times)
        return out

    @classmethod
    def from_arrays(cls, arrays: dict) -> "_Accumulator":
        acc = cls()
        for k, v in arrays.items():
            if k.startswith("spec_"):
                acc.spectra[k[5:]] = list(v)
        acc.profiles = list(arrays.get("profiles", []))
        acc.interface = list(arrays.get("interface", []))
        acc.times = list(arrays.get("times", []))
        return acc


def _batched(a, B):
    return a if B > 1 else a[None]


def _sample(acc: _Accumulator, state: SimState, model: FluidModel, name: str):
    grid = model.grid
    c = state.rho1 / state.rho
    B = int(np.prod(state.batch_shape)) if state.batch_shape else 1
    cb = _batched(c, B)
    acc.times.append((state.step, state.t))
    if name == "equilibrium":
        for d in ("rows", "cols"):
            _, _, S = an.sample_spectra(cb, grid, d)
            acc.spectra.setdefault(d, []).append(S)
    elif name == "giant_fluctuations":
        _, _, S = an.sample_spectra(cb, grid, "x")
        acc.spectra.setdefault("x", []).append(S)
        acc.profiles.append(an.horizontal_profile(_batched(state.rho1, B)))
    elif name == "mixing":
        cv, hc = an.interface_observables(cb, grid)
        acc.interface.append(np.stack([cv, hc]))


def _batch_means(series):
    """(n_t, B, ...) -> per-realization time means, or time batches if B == 1."""
    a = np.asarray(series, dtype=float)
    if a.shape[1] >= 2:
        return a.mean(axis=0), a.shape[1]
    n = min(8, a.shape[0])
    if n < 2:
        raise ConfigError("need at least two samples for error bars")
    return a[:, 0], n


def _write_outputs(cfg: RunConfig, model: FluidModel, acc: _Accumulator, out: str,
                   rlog: RunLog):
    name = cfg["scenario.name"]
    grid = model.grid
    tp = theory_params(cfg, model)
    if name in ("equilibrium", "giant_fluctuations") and not acc.spectra:
        rlog.write("warning", message="no samples collected")
        return
    if name == "equilibrium":
        for d, tag in (("rows", "x"), ("cols", "y")):
            k, ke, _ = an.sample_spectra(np.zeros(grid.shape), grid, d)
            vals, nb = _batch_means(acc.spectra[d])
            m, se = an.batch_statistics(vals, nb)
            est = an.SpectrumEstimate(k, ke, m, se, len(acc.spectra[d]) * np.shape(vals)[0])
            an.write_spectrum_csv(os.path.join(out, f"spectrum_{tag}.csv"), est)
        rlog.write("theory", S_cc=tp.inv_mu / tp.rho)
    elif name == "giant_fluctuations":
        k, ke, _ = an.sample_spectra(np.zeros(grid.shape), grid, "x")
        vals, nb = _batch_means(acc.spectra["x"])
        m, se = an.batch_statistics(vals, nb)
        est = an.SpectrumEstimate(k, ke, m, se, len(acc.spectra["x"]) * np.shape(vals)[0])
        an.write_spectrum_csv(os.path.join(out, "spectrum_x.csv"), est)
        theory = an.theory_Scc(ke, tp, simplified=True,
                               include_equilibrium=model.noise.include_mass_noise)
        np.savetxt(os.path.join(out, "theory_x.csv"), np.column_stack([k, ke, theory]),
                   delimiter=",", header="k,k_eff,S_theory", comments="", fmt="%.17g")
        pm, pse = an.batch_statistics(*_batch_means(acc.profiles))
        an.write_profile_csv(os.path.join(out, "profile_rho1.csv"), grid.cell_centers(1), pm,
                             pse)
        if tp.g > 0 and tp.h_par > 0:
            rlog.write("theory", k_g=gravity_cutoff(tp))
    elif name == "mixing" and acc.interface:
        arr = np.array(acc.interface)            # (n_t, 2, B, nx)
        if arr.shape[2] < 2:
            rlog.write("warning", message="mixing spectra need scenario.batch >= 2")
            return
        rows = []
        for (stp, t), item in zip(acc.times, arr):
            Sc, Sh = an.interface_spectra(item[0], item[1], grid)
            for j in range(Sc.k.size):
                rows.append([stp, t, Sc.k[j], Sc.mean[j], Sc.stderr[j], Sh.mean[j],
                             Sh.stderr[j], Sc.n_samples])
        np.savetxt(os.path.join(out, "interface_spectra.csv"), np.array(rows), delimiter=",",
                   header="step,t,k,S_c_mean,S_c_stderr,S_h_mean,S_h_stderr,n_samples",
                   comments="", fmt=["%d", "%.17g", "%.17g", "%.17g", "%.17g", "%.17g",
                                     "%.17g", "%d"])


def run_scenario(cfg: RunConfig, out_dir: str | None = None, restart: str | None = None,
                 n_steps: int | None = None) -> SimState:
    """Run the configured scenario and write its artifacts.

    Parameters
    ----------
    cfg : RunConfig
    out_dir : str, optional
        Output directory (default ``output.dir``).
    restart : str, optional
        Checkpoint to continue from.
    n_steps : int, optional
        Overrides ``integrator.n_steps`` (total steps, counted from zero).

    Returns
    -------
    SimState
        The final state.

    Raises
    ------
    InvariantError
        If the EOS residual exceeds ``output.eos_limit``.
    """
    out = out_dir or cfg["output.dir"]
    os.makedirs(out, exist_ok=True)
    model = build_model(cfg)
    scheme = build_scheme(cfg)
    name = cfg["scenario.name"]
    total = cfg["integrator.n_steps"] if n_steps is None else n_steps
    dt = cfg["integrator.dt"]
    if restart:
        state, _, extra = load_checkpoint(restart)
        acc = _Accumulator.from_arrays(extra)
    else:
        state = initial_state(cfg, model)
        acc = _Accumulator()
    alpha = check_time_step(state, model, dt, cfg["integrator.allow_cfl_violation"])
    limit = cfg["output.eos_limit"]
    if limit is None:
        limit = 100.0 * model.poisson.rel_tol
    skip, every = cfg["scenario.skip_steps"], max(cfg["scenario.sample_every"], 1)
    snap_every, ckpt_every = cfg["output.snapshot_every"], cfg["output.checkpoint_every"]
    rlog = RunLog(os.path.join(out, "run.log"))
    with open(os.path.join(out, "config_used.txt"), "w") as fh:
        fh.write(cfg.to_text())
    rlog.write("start", scenario=name, scheme=scheme.kind, dt=dt, n_steps=total,
               start_step=state.step, alpha_nu=alpha, batch=cfg["scenario.batch"],
               seed=cfg["noise.seed"])
    t0 = time.perf_counter()
    stats: list = []
    try:
        while state.step < total:
            stats.clear()
            state = step(state, model, dt, scheme, stats)
            s = state.step
            if s > skip and (s - skip) % every == 0:
                _sample(acc, state, model, name)
                d = diagnostics(state, model)
                rlog.write("sample", step=s, t=state.t, max_eos=d["max_eos"], mass1=d["mass1"],
                           mass2=d["mass2"], momx=d["momx"], momy=d["momy"],
                           c_min=d["c_min"], c_max=d["c_max"],
                           poisson_iters=max(i.iterations for i in stats),
                           poisson_residual=max(i.residual for i in stats))
                if d["max_eos"] > limit:
                    raise InvariantError(f"EOS residual {d['max_eos']:.3e} exceeds {limit:.3e} "
                                         f"at step {s}")
                check_concentration(state.rho1 / state.rho, where=f"step {s}")
            if snap_every and s % snap_every == 0:
                write_snapshot(os.path.join(out, f"c_{s:08d}.snap"), state.rho1 / state.rho,
                               model.grid, "c", state.t, s)
            if ckpt_every and s % ckpt_every == 0:
                save_checkpoint(os.path.join(out, "checkpoint.npz"), state, cfg.to_text(),
                                acc.to_arrays())
        _write_outputs(cfg, model, acc, out, rlog)
        save_checkpoint(os.path.join(out, "checkpoint.npz"), state, cfg.to_text(),
                        acc.to_arrays())
        rlog.write("end", step=state.step, t=state.t, wall_seconds=time.perf_counter() - t0)
    except LowMachError as exc:
        rlog.write("error", step=state.step, message=str(exc).replace(" ", "_"))
        raise
    finally:
        rlog.close()
    return state


def _convergence_run(cfg: RunConfig, model: FluidModel, kind: str, dt: float, T: float):
    state = initial_state(cfg, model)
    scheme = StepScheme(kind, drift_correction_every=0, allow_uncorrected=True)
    n = int(round(T / dt))
    for _ in range(n):
        state = step(state, model, dt, scheme)
    v, _ = projected_velocity(state, model)
    return np.concatenate([np.ravel(state.rho1), np.ravel(v.x), np.ravel(v.y)])


def convergence_study(cfg: RunConfig, schemes=None, dt: float | None = None,
                      T: float | None = None) -> dict:
    """Deterministic self-convergence orders at ``dt``, ``dt/2``, ``dt/4``.

    Noise is switched off.  The error of a run is its max-norm distance to
    the next refinement in ``rho1`` and the projected face velocity, and
    the order is ``log2(e(dt) / e(dt/2))``.

    Returns
    -------
    dict
        ``scheme -> (order, e1, e2, passed)``.
    """
    cfg = RunConfig(dict(cfg.values), set(cfg.given))
    cfg.values["scenario.name"] = "convergence"
    cfg.values["scenario.batch"] = 1
    model = build_model(cfg)
    model = FluidModel(model.grid, model.eos, model.viscosity, model.diffusion, model.gravity,
                       NoiseConfig(cfg["noise.seed"], False, False), model.poisson)
    dt = cfg["integrator.dt"] if dt is None else dt
    T = dt * cfg["integrator.n_steps"] if T is None else T
    out = {}
    for kind in schemes or list(EXPECTED_ORDERS):
        U = [_convergence_run(cfg, model, kind, dt / 2**j, T) for j in range(3)]
        e1 = float(np.abs(U[0] - U[1]).max())
        e2 = float(np.abs(U[1] - U[2]).max())
        order = float(np.log2(e1 / e2))
        want, tol = EXPECTED_ORDERS[kind]
        out[kind] = (order, e1, e2, abs(order - want) <= tol)
    return out
