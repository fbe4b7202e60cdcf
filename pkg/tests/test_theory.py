import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from lowmach.analysis import theory_Scc
from lowmach.eos import EosParams, inv_mu_c_kBT
from lowmach.theory_lin import (
    TheoryParams,
    equilibrium_static_factors,
    gravity_cutoff,
    noneq_Scc_full,
    noneq_Scc_simplified,
    rayleigh_peak,
)

BASE = TheoryParams(rho=1.05, beta=0.234, nu=6.1e-3, chi=1.6e-5, kBT=4.11e-14, inv_mu=1e-14,
                    g=981.0, h_par=1.56)


def test_equilibrium_examples():
    tp = TheoryParams(rho=1.3, beta=0.0, inv_mu=0.4, kBT=2.0)
    S_rr, S_vv, S_cc, S_cr = equilibrium_static_factors(tp)
    assert S_rr == 0.0 and S_cr == 0.0
    assert S_vv == pytest.approx(2.0 / 1.3)
    tp = TheoryParams(rho=1.3, beta=0.25, inv_mu=0.4)
    S_rr, _, S_cc, S_cr = equilibrium_static_factors(tp)
    assert S_cr / S_cc == pytest.approx(1.3 * 0.25, rel=1e-15)
    assert S_rr == pytest.approx(0.25**2 * 1.3 * 0.4, rel=1e-15)
    # the compressible term is optional
    S_rr_c = equilibrium_static_factors(TheoryParams(rho=1.3, beta=0.25, inv_mu=0.4, c_T=2.0))[0]
    assert S_rr_c - S_rr == pytest.approx(1.3 / 4.0)


def test_hard_disk_equilibrium_value():
    eos = EosParams(0.764, 0.764, kBT=1.0)
    inv_mu = float(inv_mu_c_kBT(0.5, eos))
    assert inv_mu == pytest.approx(0.25, rel=1e-15)
    S_cc = equilibrium_static_factors(TheoryParams(rho=0.764, inv_mu=inv_mu))[2]
    assert S_cc == pytest.approx(0.25 / 0.764, rel=1e-15)


def test_rayleigh_peak():
    tp = TheoryParams(rho=1.2, beta=0.3, chi=0.7, inv_mu=0.5)
    k = 1.7
    g = tp.chi * k * k
    assert rayleigh_peak(k, 0.0, tp) == pytest.approx(0.09 * 1.2 * 0.5 * 2 / g, rel=1e-14)
    half = rayleigh_peak(k, g, tp) / rayleigh_peak(k, 0.0, tp)
    assert half == pytest.approx(0.5, rel=1e-14)
    total, _ = quad(lambda w: rayleigh_peak(k, w, tp), -np.inf, np.inf)
    assert total / (2 * np.pi) == pytest.approx(equilibrium_static_factors(tp)[0], rel=1e-8)


def test_gradient_free_and_infinite_gravity_limits():
    k = np.array([10.0, 100.0, 1000.0])
    eq = BASE.inv_mu / BASE.rho
    flat = TheoryParams(**{**BASE.__dict__, "h_par": 0.0})
    np.testing.assert_allclose(theory_Scc(k, flat), eq, rtol=1e-15)
    np.testing.assert_allclose(theory_Scc(k, flat, simplified=True), eq, rtol=1e-15)
    heavy = TheoryParams(**{**BASE.__dict__, "g": 1e30})
    np.testing.assert_allclose(theory_Scc(k, heavy), eq, rtol=1e-12)
    np.testing.assert_allclose(noneq_Scc_full(k, BASE, include_equilibrium=False)
                               + eq, theory_Scc(k, BASE), rtol=1e-15)


def test_simplified_form_oracle():
    tp = BASE
    k = 300.0
    want = (tp.nu / (tp.nu + tp.chi)) * tp.kBT * tp.h_par**2 / (
        tp.rho * tp.nu * tp.chi * k**4 + tp.h_par * tp.rho * tp.g * tp.beta)
    assert noneq_Scc_simplified(k, tp) == pytest.approx(want, rel=1e-14)


def test_gravity_cutoff_water_glycerol():
    # beta g = 234 and eta chi = 1e-7 in CGS units
    tp = TheoryParams(rho=1.05, beta=0.234, nu=1e-7 / 1.05, chi=1.0, g=1000.0, h_par=1.56)
    k_g = gravity_cutoff(tp)
    assert k_g == pytest.approx(249.0, rel=0.005)
    # the quoted 246 lies within 1.5 % of the formula
    assert k_g == pytest.approx(246.0, rel=0.015)
    # at k_g the gravity and diffusion terms in the denominator balance
    assert tp.eta * tp.chi * k_g**4 == pytest.approx(tp.h_par * tp.rho * tp.g * tp.beta)


positive = st.floats(1e-3, 1e3)


@settings(max_examples=50, deadline=None)
@given(positive, positive, positive, positive, positive)
def test_monotonic_in_k_and_g(nu, chi, g, h, beta):
    tp = TheoryParams(rho=1.0, beta=beta, nu=nu, chi=chi, g=g, h_par=h)
    k = np.geomspace(1e-2, 1e2, 20)
    S = noneq_Scc_full(k, tp, include_equilibrium=False)
    assert np.all(np.diff(S) <= 0)
    heavier = TheoryParams(**{**tp.__dict__, "g": 2 * g})
    assert np.all(noneq_Scc_full(k, heavier, include_equilibrium=False) <= S)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100.0), st.floats(1.0, 1e3), st.floats(1e-3, 1e3))
def test_unit_scaling(lam, k, h_perp):
    """Rescaling lengths by lam at fixed mass and time scales spectra by lam^3."""
    tp = TheoryParams(rho=1.3, beta=0.2, nu=2.0, chi=0.3, kBT=0.7, inv_mu=0.5, g=9.0,
                      h_par=0.8, h_perp=h_perp)
    sc = TheoryParams(rho=1.3 / lam**3, beta=0.2, nu=2.0 * lam**2, chi=0.3 * lam**2,
                      kBT=0.7 * lam**2, inv_mu=0.5, g=9.0 * lam, h_par=0.8 / lam,
                      h_perp=h_perp / lam)
    for f in (lambda t, q: noneq_Scc_full(q, t),
              lambda t, q: noneq_Scc_simplified(q, t)):
        assert f(sc, k / lam) == pytest.approx(lam**3 * f(tp, k), rel=1e-10)
    assert gravity_cutoff(sc) == pytest.approx(gravity_cutoff(tp) / lam, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 0.01), st.floats(1e-2, 1e3), st.floats(0.0, 1e3))
def test_full_matches_simplified_at_large_schmidt(ratio, k, g):
    tp = TheoryParams(rho=1.1, beta=0.3, nu=1.0, chi=ratio, g=g, h_par=2.0)
    full = noneq_Scc_full(k, tp, include_equilibrium=False)
    simp = noneq_Scc_simplified(k, tp)
    assert full == pytest.approx(simp, rel=0.01)
