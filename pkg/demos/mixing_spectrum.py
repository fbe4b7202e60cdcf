"""Diffusive mixing of two layers: interface spectra at growing times.

Steps the mixing configuration and prints the spectrum of the vertically
averaged concentration at times growing as the square of an index, together
with the local-equilibrium level mean(c(1 - c)) / rho.

Usage: python3 demos/mixing_spectrum.py [batch] [n_times]
"""

import os
import sys

import numpy as np

from lowmach.analysis import interface_observables, interface_spectra
from lowmach.config import load_config
from lowmach.integrators import step
from lowmach.scenarios import build_model, build_scheme, initial_state

HERE = os.path.dirname(os.path.abspath(__file__))

batch = int(sys.argv[1]) if len(sys.argv) > 1 else 4
n_times = int(sys.argv[2]) if len(sys.argv) > 2 else 2
cfg = load_config(os.path.join(HERE, "..", "configs", "mixing.cfg"))
cfg.set("scenario.batch", batch)
model = build_model(cfg)
scheme = build_scheme(cfg)
state = initial_state(cfg, model)
dt = cfg["integrator.dt"]
times = [512 * i * i for i in range(1, n_times + 1)]

for n in range(1, times[-1] + 1):
    state = step(state, model, dt, scheme)
    if n in times:
        c = state.rho1 / state.rho
        Sc, _ = interface_spectra(*interface_observables(c, model.grid), model.grid)
        floor = np.mean(c * (1 - c)) / float(np.mean(state.rho))
        print(f"t = {n * dt:.0f}, local-equilibrium level {floor:.4f}")
        for j in range(1, 9):
            print(f"  k = {Sc.k[j]:.4f}  S = {Sc.mean[j]:.4f} +- {Sc.stderr[j]:.4f}")
