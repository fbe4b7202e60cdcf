import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import channel_grid, periodic_grid
from lowmach.eos import EosParams, density_from_concentration, eos_residual
from lowmach.errors import DegenerateStateError, FormatError
from lowmach.fields import (
    BoundaryData,
    FaceVec,
    Grid2D,
    Side,
    SimState,
    concentration,
    interp_cell_to_faces,
    read_snapshot,
    velocity_from_momentum,
    vorticity,
    write_snapshot,
)
from lowmach.operators import gradient_faces

finite = st.floats(-10, 10, allow_nan=False)


def test_grid_shapes():
    g = channel_grid(5, 3, 0.5, 2.0)
    assert g.face_shape(0) == (5, 3)
    assert g.face_shape(1) == (5, 4)
    assert g.node_shape == (5, 4)
    assert g.cell_volume == 1.0
    assert Grid2D(3, 4, 1.0, 1.0, thickness=2.0).cell_volume == 2.0


def test_grid_rejects_bad_dimensions():
    with pytest.raises(ValueError):
        Grid2D(4, 4, 0.0, 1.0)
    with pytest.raises(ValueError):
        BoundaryData(Side(), Side("wall_noslip"))
    with pytest.raises(ValueError):
        Side("reservoir")
    with pytest.raises(ValueError):
        Side("wall_noslip", c=0.2)


def test_interp_constant_preserved():
    g = channel_grid()
    f = interp_cell_to_faces(np.full(g.shape, 3.0), g)
    assert np.all(f.x == 3.0) and np.all(f.y == 3.0)


def test_interp_neighbour_mean_periodic():
    g = periodic_grid(2, 2)
    a = np.array([[1.0, 1.0], [3.0, 3.0]])
    f = interp_cell_to_faces(a, g)
    assert np.all(f.x == 2.0)


def test_interp_reservoir_face_takes_boundary_density(glycerol):
    g = channel_grid()
    rho_b = g.bc.reservoir_values(lambda c: density_from_concentration(c, glycerol))
    rho = np.full(g.shape, 1.0)
    f = interp_cell_to_faces(rho, g, rho_b)
    expected = 1.0 / (0.39 / 1.29 + 0.61 / 1.0)
    np.testing.assert_allclose(f.y[:, 0], expected, rtol=1e-15)
    # the wall face copies the adjacent cell
    np.testing.assert_allclose(f.y[:, -1], 1.0)
    np.testing.assert_allclose(f.y[:, 1:-1], 1.0)


def test_velocity_from_momentum():
    g = periodic_grid()
    rho_f = FaceVec(np.full(g.face_shape(0), 1.045847014471604), np.ones(g.face_shape(1)))
    v = velocity_from_momentum(FaceVec.zeros(g), rho_f)
    assert np.all(v.x == 0) and np.all(v.y == 0)
    m = FaceVec(np.full(g.face_shape(0), 2.0), np.full(g.face_shape(1), 0.5))
    v = velocity_from_momentum(m, rho_f)
    np.testing.assert_allclose(v.x, 1.9123255813953488, rtol=1e-14)
    np.testing.assert_allclose(v.y, 0.5)
    with pytest.raises(DegenerateStateError):
        velocity_from_momentum(m, rho_f * 0.0)


def test_concentration_examples():
    g = periodic_grid()
    rho = np.full(g.shape, 1.045847014471604)
    z = FaceVec.zeros(g)
    assert np.all(concentration(SimState(rho, rho.copy(), z)) == 1.0)
    assert np.all(concentration(SimState(rho, 0 * rho, z)) == 0.0)
    c = concentration(SimState(rho, np.full(g.shape, 0.20394016782196278), z))
    np.testing.assert_allclose(c, 0.195, rtol=1e-14)
    with pytest.raises(DegenerateStateError):
        concentration(SimState(0 * rho, rho, z))


def test_vorticity_uniform_and_sine():
    g = periodic_grid(16, 8, 0.25, 0.5)
    v = FaceVec(np.full(g.face_shape(0), 1.5), np.full(g.face_shape(1), -0.5))
    assert np.allclose(vorticity(v, g), 0.0)
    L = g.lengths[0]
    k = 2 * np.pi / L
    # y-velocity sits at x = (i + 1/2) dx, node x = i dx
    xc = (np.arange(g.nx) + 0.5) * g.dx
    w = np.repeat(np.sin(k * xc)[:, None], g.ny, axis=1)
    om = vorticity(FaceVec(np.zeros(g.face_shape(0)), w), g)
    xn = np.arange(g.nx) * g.dx
    factor = np.sin(k * g.dx / 2) / (k * g.dx / 2)
    np.testing.assert_allclose(om[:, 0], k * np.cos(k * xn) * factor, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (5, 6), elements=finite))
def test_curl_of_gradient_vanishes(phi):
    g = periodic_grid(5, 6, 0.3, 0.7)
    assert np.max(np.abs(vorticity(gradient_faces(phi, g), g))) < 1e-9 * (1 + np.abs(phi).max())


@settings(max_examples=30, deadline=None)
@given(arrays(float, (4, 5), elements=finite), arrays(float, (4, 5), elements=finite),
       finite, finite)
def test_interp_is_linear(a, b, alpha, beta):
    g = channel_grid(4, 5)
    bv = (None, None, 0.7, None)
    lhs = interp_cell_to_faces(alpha * a + beta * b, g, (None, None, (alpha + beta) * 0.7, None))
    fa, fb = interp_cell_to_faces(a, g, bv), interp_cell_to_faces(b, g, bv)
    np.testing.assert_allclose(lhs.x, alpha * fa.x + beta * fb.x, atol=1e-12)
    np.testing.assert_allclose(lhs.y, alpha * fa.y + beta * fb.y, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (4, 4), elements=st.floats(0, 1)))
def test_face_densities_satisfy_eos(c):
    p = EosParams(1.29, 1.0)
    g = periodic_grid()
    rho = density_from_concentration(c, p)
    f1 = interp_cell_to_faces(c * rho, g)
    f = interp_cell_to_faces(rho, g)
    for d in range(2):
        assert np.max(np.abs(eos_residual(f1[d], f[d] - f1[d], p))) < 1e-14


def test_snapshot_roundtrip(tmp_path, rng):
    g = periodic_grid(6, 3, 0.1, 0.2)
    data = rng.standard_normal((2,) + g.shape)
    path = tmp_path / "c.snap"
    write_snapshot(path, data, g, name="c", t=1.25, step=7)
    back, meta = read_snapshot(path)
    assert np.array_equal(back, data)
    assert meta["name"] == "c" and meta["step"] == 7 and meta["t"] == 1.25
    path.write_bytes(b"garbage")
    with pytest.raises(FormatError):
        read_snapshot(path)
