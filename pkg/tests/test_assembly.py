import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gelfand.fem.assembly import exp_integral, exp_terms, stiffness
from gelfand.fem.mesh import disk_mesh, polygon_mesh


@pytest.fixture(scope="module")
def mesh():
    return disk_mesh(64)


def test_stiffness_properties(mesh):
    k = stiffness(mesh)
    assert abs(k - k.T).max() <= 1e-14
    assert np.allclose(k @ np.ones(mesh.n_vertices), 0.0, atol=1e-12)
    # energy of a linear function equals |grad|^2 times the area
    u = 2 * mesh.vertices[:, 0] - mesh.vertices[:, 1]
    assert u @ (k @ u) == pytest.approx(5 * mesh.areas.sum(), rel=1e-12)


def test_exp_terms_constant(mesh):
    load, m = exp_terms(mesh, np.zeros(mesh.n_vertices))
    assert load.sum() == pytest.approx(mesh.areas.sum(), rel=1e-12)
    assert m.sum() == pytest.approx(mesh.areas.sum(), rel=1e-12)
    assert exp_integral(mesh, np.full(mesh.n_vertices, np.log(2))) == pytest.approx(2 * mesh.areas.sum())


def test_quadrature_degree_two():
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    m = polygon_mesh(square, 0.25)
    x, y = m.vertices.T
    # exp(u) = 1 + x on the nodes? use u linear, check int x^2 via M against exact
    _, mass = exp_terms(m, np.zeros(m.n_vertices))
    assert x @ (mass @ x) == pytest.approx(1 / 3, rel=1e-12)
    assert x @ (mass @ y) == pytest.approx(1 / 4, rel=1e-12)


def test_jacobian_is_derivative_of_load(mesh, rng):
    u = rng.normal(scale=0.3, size=mesh.n_vertices)
    v = rng.normal(size=mesh.n_vertices)
    _, m = exp_terms(mesh, u)
    h = 1e-6
    fd = (exp_terms(mesh, u + h * v)[0] - exp_terms(mesh, u - h * v)[0]) / (2 * h)
    assert np.abs(fd - m @ v).max() <= 1e-7 * np.abs(m @ v).max()


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_exp_integral_converges(a, b, c):
    mesh = disk_mesh(64)
    u = a + b * mesh.vertices[:, 0] + c * mesh.vertices[:, 1]
    load, _ = exp_terms(mesh, u)
    assert load.sum() == pytest.approx(exp_integral(mesh, u), rel=1e-12)
    assert exp_integral(mesh, u) > 0
