"""Command line interface.

Subcommands
-----------
run          run the configured scenario and write its artifacts
convergence  deterministic self-convergence orders of the time integrators
analyze      recompute spectra from saved snapshots
theory       print linearized-theory reference values for a configuration

Exit status is 0 on success, 2 for configuration or input errors, 3 for
solver failures and invariant breaches, and 4 when a convergence order is
outside its tolerance.
"""

from __future__ import annotations

import argparse
import glob
import logging
import os
import sys

import numpy as np

from . import analysis as an
from .config import load_config
from .errors import ConfigError, FormatError, LowMachError
from .fields import read_snapshot
from .scenarios import (
    EXPECTED_ORDERS,
    build_grid,
    convergence_study,
    run_scenario,
    theory_params,
)
from .theory_lin import equilibrium_static_factors, gravity_cutoff

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE, EXIT_ORDER = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lowmach",
                                description="Fluctuating low Mach number mixture solver.")
    p.add_argument("-v", "--verbose", action="store_true", help="log every sample")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="key = value configuration file")
        sp.add_argument("--output-dir", help="override output.dir")
        sp.add_argument("--seed-override", type=int, help="override noise.seed")
        sp.add_argument("--steps-override", type=int, help="override integrator.n_steps")

    sp = sub.add_parser("run", help="run a scenario")
    common(sp)
    sp.add_argument("--restart", help="continue from a checkpoint file")

    sp = sub.add_parser("convergence", help="temporal order study (noise off)")
    common(sp)
    sp.add_argument("--schemes", default="all",
                    help="comma-separated schemes, or 'all' (default)")

    sp = sub.add_parser("analyze", help="spectra of saved concentration snapshots")
    common(sp)
    sp.add_argument("--input", required=True, help="directory holding *.snap files")
    sp.add_argument("--direction", default="x", choices=["x", "y", "rows", "cols"])

    sp = sub.add_parser("theory", help="print theory reference values")
    common(sp)
    return p


def _load(args):
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.set("output.dir", args.output_dir)
    if args.seed_override is not None:
        cfg.set("noise.seed", args.seed_override)
    if args.steps_override is not None:
        cfg.set("integrator.n_steps", args.steps_override)
    return cfg


def _cmd_run(cfg, args) -> int:
    state = run_scenario(cfg, cfg["output.dir"], restart=args.restart)
    print(f"finished step={state.step} t={state.t:.10g} output={cfg['output.dir']}")
    return EXIT_OK


def _cmd_convergence(cfg, args) -> int:
    schemes = list(EXPECTED_ORDERS) if args.schemes == "all" else args.schemes.split(",")
    for s in schemes:
        if s not in EXPECTED_ORDERS:
            raise ConfigError(f"--schemes: unknown scheme {s!r}")
    res = convergence_study(cfg, schemes)
    out = cfg["output.dir"]
    os.makedirs(out, exist_ok=True)
    ok = True
    with open(os.path.join(out, "convergence.csv"), "w") as fh:
        fh.write("scheme,order,expected,tolerance,error_dt,error_dt2,passed\n")
        for s, (order, e1, e2, passed) in res.items():
            want, tol = EXPECTED_ORDERS[s]
            fh.write(f"{s},{order:.6f},{want},{tol},{e1:.6e},{e2:.6e},{int(passed)}\n")
            print(f"scheme={s} order={order:.3f} expected={want}+-{tol} "
                  f"{'PASS' if passed else 'FAIL'}")
            ok &= passed
    return EXIT_OK if ok else EXIT_ORDER


def _cmd_analyze(cfg, args) -> int:
    files = sorted(glob.glob(os.path.join(args.input, "*.snap")))
    if not files:
        raise FormatError(f"no snapshots in {args.input}")
    grid = build_grid(cfg)
    data = [read_snapshot(f)[0] for f in files]
    samples = np.stack(data)
    if samples.shape[-2:] != grid.shape:
        raise FormatError(f"snapshot shape {samples.shape[-2:]} does not match the grid")
    est = an.static_spectrum(samples.reshape(-1, *grid.shape), grid, args.direction,
                             n_batches=min(8, samples.reshape(-1, *grid.shape).shape[0]))
    out = cfg["output.dir"]
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"spectrum_{args.direction}.csv")
    an.write_spectrum_csv(path, est)
    print(f"wrote {path} samples={est.n_samples}")
    return EXIT_OK


def _cmd_theory(cfg, args) -> int:
    tp = theory_params(cfg)
    S_rr, S_vv, S_cc, S_cr = equilibrium_static_factors(tp)
    print(f"rho={tp.rho:.10g} beta={tp.beta:.10g} nu={tp.nu:.10g} chi={tp.chi:.10g} "
          f"Sc={tp.nu / tp.chi:.10g}")
    print(f"S_cc={S_cc:.10g} S_crho={S_cr:.10g} S_rhorho={S_rr:.10g} S_vv={S_vv:.10g}")
    if tp.g > 0 and tp.h_par > 0 and tp.beta != 0:
        print(f"k_g={gravity_cutoff(tp):.10g}")
    grid = build_grid(cfg)
    k = 2 * np.pi * np.arange(1, grid.nx // 2 + 1) / grid.lengths[0]
    ke = an.effective_wavenumber(k, grid.dx)
    S = an.theory_Scc(ke, tp, simplified=tp.h_par > 0)
    out = cfg["output.dir"]
    os.makedirs(out, exist_ok=True)
    np.savetxt(os.path.join(out, "theory.csv"), np.column_stack([k, ke, S]), delimiter=",",
               header="k,k_eff,S_theory", comments="", fmt="%.17g")
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "convergence": _cmd_convergence, "analyze": _cmd_analyze,
             "theory": _cmd_theory}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        return _COMMANDS[args.command](cfg, args)
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LowMachError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ValueError, RuntimeError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
