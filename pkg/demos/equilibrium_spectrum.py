"""Equilibrium concentration spectrum against the flat thermodynamic value.

Runs a shortened periodic equilibrium simulation and prints the measured
static structure factor next to k_BT / (rho mu_c).

Usage: python3 demos/equilibrium_spectrum.py [n_steps]
"""

import os
import sys
import tempfile

import numpy as np

from lowmach.config import load_config
from lowmach.scenarios import build_model, run_scenario, theory_params

HERE = os.path.dirname(os.path.abspath(__file__))

n_steps = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
cfg = load_config(os.path.join(HERE, "..", "configs", "equilibrium.cfg"))
tp = theory_params(cfg, build_model(cfg))
with tempfile.TemporaryDirectory() as out:
    run_scenario(cfg, out_dir=out, n_steps=n_steps)
    data = np.genfromtxt(os.path.join(out, "spectrum_x.csv"), delimiter=",", names=True)

target = tp.inv_mu / tp.rho
print(f"theory S_cc = {target:.4f}")
print(f"{'k':>10} {'S_cc':>10} {'stderr':>10} {'ratio':>8}")
for row in data[1:cfg['grid.nx'] // 4 + 1]:
    print(f"{row['k']:10.4f} {row['S_mean']:10.4f} {row['S_stderr']:10.4f} "
          f"{row['S_mean'] / target:8.3f}")
