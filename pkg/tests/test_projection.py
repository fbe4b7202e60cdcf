import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles as orc
from conftest import channel_grid, periodic_grid
from lowmach.eos import EosParams
from lowmach.errors import DegenerateStateError, SolvabilityError, SolverError
from lowmach.fields import FaceVec, Side
from lowmach.operators import divergence_cell, gradient_faces
from lowmach.projection import (
    MultigridHierarchy,
    PoissonSettings,
    compute_S,
    poisson_apply,
    project_RS,
    solve_variable_poisson,
)

REL_TOL = 1e-11
METHODS = ["mg", "vcycle", "spectral", "direct"]


def settings_for(method, rel_tol=REL_TOL):
    return PoissonSettings(rel_tol=rel_tol, method=method, max_iter=500)


def random_rho_faces(grid, rng, lo=0.5, hi=2.0):
    return FaceVec(rng.uniform(lo, hi, grid.face_shape(0)),
                   rng.uniform(lo, hi, grid.face_shape(1)))


def dense_poisson(grid, rho_f):
    L = orc.Layout(grid)
    B = np.diag(1.0 / orc.flat(rho_f))
    return orc.divergence_matrix(L) @ B @ orc.gradient_matrix(L)


def dense_solve(A, rhs):
    phi = np.linalg.lstsq(A, rhs.ravel() - rhs.mean(), rcond=None)[0]
    return phi - phi.mean()


GRIDS = [
    lambda: periodic_grid(8, 8, 0.5, 0.7),
    lambda: channel_grid(8, 8, 1.0, 0.5),
    lambda: channel_grid(8, 6, 1.0, 1.0, Side("wall_noslip"), Side("wall_freeslip")),
]


@pytest.mark.parametrize("make", GRIDS)
@pytest.mark.parametrize("method", METHODS)
def test_poisson_matches_dense_solve(make, method, rng):
    g = make()
    rho_f = random_rho_faces(g, rng)
    rhs = rng.standard_normal(g.shape)
    rhs -= rhs.mean()
    phi, info = solve_variable_poisson(rho_f, rhs, g, settings_for(method))
    ref = dense_solve(dense_poisson(g, rho_f), rhs).reshape(g.shape)
    scale = np.abs(ref).max()
    assert np.max(np.abs(phi - ref)) < 1e-9 * scale
    assert abs(phi.mean()) < 1e-12 * scale
    resid = poisson_apply(phi, rho_f, g) - rhs
    assert np.max(np.abs(resid)) <= REL_TOL * np.abs(rhs).max() * 1.001


def test_poisson_zero_rhs():
    g = periodic_grid(8, 8)
    phi, _ = solve_variable_poisson(FaceVec(np.ones(g.face_shape(0)), np.ones(g.face_shape(1))),
                                    np.zeros(g.shape), g)
    assert np.all(phi == 0)


@pytest.mark.parametrize("method", METHODS)
def test_poisson_single_fourier_mode(method):
    g = periodic_grid(16, 8, 0.5, 0.25)
    rho = 1.7
    x, y = g.mesh()
    kx, ky = 2 * np.pi * 3 / g.lengths[0], 2 * np.pi * 2 / g.lengths[1]
    rhs = np.cos(kx * x + ky * y)
    symbol = (4 / g.dx**2 * np.sin(kx * g.dx / 2) ** 2 + 4 / g.dy**2 * np.sin(ky * g.dy / 2) ** 2)
    rf = FaceVec(np.full(g.face_shape(0), rho), np.full(g.face_shape(1), rho))
    phi, _ = solve_variable_poisson(rf, rhs, g, settings_for(method))
    np.testing.assert_allclose(phi, -rhs / (symbol / rho), atol=1e-9)


def test_poisson_batched_matches_single(rng):
    g = channel_grid(8, 8)
    rf = random_rho_faces(g, rng)
    rhs = rng.standard_normal((3,) + g.shape)
    rhs -= rhs.mean(axis=(-2, -1), keepdims=True)
    phi, _ = solve_variable_poisson(rf, rhs, g)
    for b in range(3):
        one, _ = solve_variable_poisson(rf, rhs[b], g)
        np.testing.assert_allclose(phi[b], one, atol=1e-9 * np.abs(one).max())


def test_poisson_errors(rng):
    g = periodic_grid(8, 8)
    rf = random_rho_faces(g, rng)
    with pytest.raises(SolvabilityError):
        solve_variable_poisson(rf, np.ones(g.shape), g)
    bad = FaceVec(rf.x.copy(), rf.y.copy())
    bad.x[0, 0] = 0.0
    rhs = rng.standard_normal(g.shape)
    rhs -= rhs.mean()
    with pytest.raises(DegenerateStateError):
        solve_variable_poisson(bad, rhs, g)
    with pytest.raises(SolverError):
        solve_variable_poisson(rf, rhs, g, PoissonSettings(method="vcycle", max_iter=1))
    with pytest.raises(ValueError):
        PoissonSettings(method="jacobi")


def test_multigrid_reduction_factor(rng):
    g = channel_grid(64, 64, 1.0, 1.0)
    x, y = g.mesh()
    # smooth coefficient with contrast 4
    rho = 1.0 + 1.5 * (1 + np.sin(2 * np.pi * x / 64) * np.cos(2 * np.pi * y / 64)) / 2
    from lowmach.fields import interp_cell_to_faces
    rf = interp_cell_to_faces(rho, g)
    rhs = rng.standard_normal(g.shape)
    rhs -= rhs.mean()
    _, info = solve_variable_poisson(rf, rhs, g, PoissonSettings(method="vcycle", max_iter=60))
    h = np.array(info.history)
    factors = h[1:] / h[:-1]
    assert np.max(factors[:8]) <= 0.2


# ---------------------------------------------------------------- S and R_S

def test_compute_S(rng, glycerol):
    g = periodic_grid(4, 4)
    F = FaceVec(rng.standard_normal(g.face_shape(0)), rng.standard_normal(g.face_shape(1)))
    assert np.all(compute_S(F, g, EosParams(1.1, 1.1)) == 0)
    const = FaceVec(np.full(g.face_shape(0), 0.4), np.full(g.face_shape(1), 0.1))
    assert np.allclose(compute_S(const, g, glycerol), 0)
    D = orc.divergence_matrix(orc.Layout(g))
    want = (1 / 1.29 - 1.0) * (D @ orc.flat(F))
    np.testing.assert_allclose(compute_S(F, g, glycerol).ravel(), want, atol=1e-12)


def project_dense(g, m, rho_f, S, v_b=None):
    L = orc.Layout(g)
    B = np.diag(1.0 / orc.flat(rho_f))
    D, G = orc.divergence_matrix(L), orc.gradient_matrix(L)
    v = orc.flat(m) / orc.flat(rho_f)
    if not g.periodic(1):
        nyf = g.ny + 1
        vy = v[L.n_xf:].reshape(g.nx, nyf)
        vy[:, [0, -1]] = 0.0 if v_b is None else v_b.y[:, [0, -1]]
        v[L.n_xf:] = vy.ravel()
    phi = dense_solve(D @ B @ G, D @ v - S.ravel())
    return v - B @ G @ phi


@pytest.mark.parametrize("make", GRIDS)
@pytest.mark.parametrize("method", ["mg", "direct", "spectral"])
def test_projection_dense_oracle(make, method, rng):
    g = make()
    rho_f = random_rho_faces(g, rng)
    m = FaceVec(rng.standard_normal(g.face_shape(0)), rng.standard_normal(g.face_shape(1)))
    S = 0.1 * rng.standard_normal(g.shape)
    v_b = None
    if not g.periodic(1):
        v_b = FaceVec.zeros(g)
        v_b.y[:, 0] = 0.05 * rng.standard_normal(g.nx)
    S -= S.mean()
    if v_b is not None:
        S += (np.sum(0.0 - v_b.y[:, 0]) * g.dx) / (g.lengths[0] * g.lengths[1])
    res = project_RS(m, rho_f, S, g, settings_for(method), v_boundary=v_b)
    want = project_dense(g, m, rho_f, S, v_b)
    np.testing.assert_allclose(orc.flat(res.v), want, atol=1e-9)
    div = divergence_cell(res.v, g)
    assert np.max(np.abs(div - S)) < 100 * REL_TOL * (1 + np.abs(orc.flat(m)).max())


def test_projection_fixed_point(rng):
    g = periodic_grid(8, 8)
    rho_f = random_rho_faces(g, rng)
    m = FaceVec(rng.standard_normal(g.face_shape(0)), rng.standard_normal(g.face_shape(1)))
    S = np.zeros(g.shape)
    once = project_RS(m, rho_f, S, g).m
    twice = project_RS(once, rho_f, S, g).m
    np.testing.assert_allclose(twice.x, once.x, atol=10 * REL_TOL * np.abs(m.x).max())


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=15, deadline=None)
@given(seeds, st.sampled_from([0, 1]))
def test_projection_idempotent(seed, which):
    rng = np.random.default_rng(seed)
    g = [periodic_grid(8, 8), channel_grid(8, 8)][which]
    rho_f = random_rho_faces(g, rng)
    m = FaceVec(rng.standard_normal(g.face_shape(0)), rng.standard_normal(g.face_shape(1)))
    S = 0.1 * rng.standard_normal(g.shape)
    S -= S.mean()
    once = project_RS(m, rho_f, S, g).m
    twice = project_RS(once, rho_f, S, g).m
    scale = max(np.abs(m.x).max(), np.abs(m.y).max())
    tol = 10 * REL_TOL * scale * 10
    assert np.max(np.abs(twice.x - once.x)) < tol
    assert np.max(np.abs(twice.y - once.y)) < tol


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_projection_annihilates_gradients(seed):
    rng = np.random.default_rng(seed)
    g = periodic_grid(8, 8, 0.5, 0.5)
    rho_f = FaceVec(np.full(g.face_shape(0), 1.3), np.full(g.face_shape(1), 1.3))
    psi = rng.standard_normal(g.shape)
    m = gradient_faces(psi, g)
    out = project_RS(m, rho_f, np.zeros(g.shape), g).m
    scale = max(np.abs(m.x).max(), np.abs(m.y).max())
    assert np.max(np.abs(out.x)) < 10 * REL_TOL * scale * 10
    assert np.max(np.abs(out.y)) < 10 * REL_TOL * scale * 10


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_projection_correction_is_gradient(seed):
    """Momentum changes only by a discrete gradient, so totals are conserved."""
    rng = np.random.default_rng(seed)
    g = periodic_grid(8, 6)
    rho_f = random_rho_faces(g, rng)
    m = FaceVec(rng.standard_normal(g.face_shape(0)), rng.standard_normal(g.face_shape(1)))
    S = 0.1 * rng.standard_normal(g.shape)
    S -= S.mean()
    res = project_RS(m, rho_f, S, g)
    dm = m - res.m
    np.testing.assert_allclose(orc.flat(dm), orc.flat(gradient_faces(res.phi, g)), atol=1e-9)
    assert abs(dm.x.sum()) < 1e-10 and abs(dm.y.sum()) < 1e-10


def test_multigrid_hierarchy_apply_matches_dense(rng):
    g = channel_grid(8, 8)
    rho_f = random_rho_faces(g, rng)
    b = FaceVec(1 / rho_f.x, 1 / rho_f.y)
    hier = MultigridHierarchy(FaceVec(b.x[None], b.y[None]), g, PoissonSettings())
    phi = rng.standard_normal((1,) + g.shape)
    np.testing.assert_allclose(hier.apply(phi)[0].ravel(),
                               dense_poisson(g, rho_f) @ phi[0].ravel(), atol=1e-10)
