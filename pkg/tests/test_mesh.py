import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gelfand.errors import BudgetExceededError, MeshError
from gelfand.fem.mesh import (
    Mesh,
    bisect,
    disk_mesh,
    dumbbell_polygon,
    graded_disk_mesh,
    polygon_mesh,
    prolong,
    read_mesh,
    refine,
    uniform_refine,
    write_mesh,
)


def conforming(mesh: Mesh) -> bool:
    # every interior edge is shared by exactly two triangles, boundary edges by one
    t = np.sort(mesh.triangles, axis=1)
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [0, 2]]])
    _, counts = np.unique(e, axis=0, return_counts=True)
    if counts.max() > 2:
        return False
    # Euler characteristic of a disk: V - E + T = 1
    return mesh.n_vertices - len(counts) + mesh.n_triangles == 1


@pytest.fixture(scope="module")
def coarse():
    return disk_mesh(64)


def test_disk_mesh_quality(coarse):
    coarse.validate(15.0)
    assert conforming(coarse)
    assert coarse.min_angle >= 15.0
    assert np.all(coarse.areas > 0)
    b = coarse.vertices[coarse.boundary]
    assert np.allclose(np.hypot(*b.T), 1.0)
    assert coarse.boundary.sum() == 64
    assert coarse.areas.sum() == pytest.approx(64 / 2 * np.sin(2 * np.pi / 64), rel=1e-12)
    assert coarse.lumped_areas.sum() == pytest.approx(coarse.areas.sum(), rel=1e-12)


def test_uniform_refine(coarse):
    fine = uniform_refine(coarse)
    assert fine.n_triangles == 4 * coarse.n_triangles
    assert conforming(fine)
    assert fine.min_angle >= 15.0
    assert fine.boundary.sum() == 128
    assert np.allclose(np.hypot(*fine.vertices[fine.boundary].T), 1.0)
    assert fine.h_max == pytest.approx(coarse.h_max / 2, rel=0.1)


def test_bisect_conforming(coarse, rng):
    marked = rng.choice(coarse.n_triangles, 30, replace=False)
    out = bisect(coarse, marked)
    assert conforming(out)
    assert out.n_triangles >= coarse.n_triangles + 30
    assert out.min_angle >= 15.0


def test_refine_uniform_u_does_nothing(coarse):
    out = refine(coarse, 1.0, np.zeros(coarse.n_vertices), budget=5000)
    assert out.n_vertices == coarse.n_vertices


def test_refine_concentrates_at_peak(coarse, disk_ev):
    from gelfand.fem.ansatz import liouville_ansatz

    delta = 0.01
    lam = (delta / 0.125) ** 2
    u = liouville_ansatz(coarse, disk_ev, [[0.0, 0.0]], [0.125], lam)
    out = refine(coarse, lam, u, budget=4000)
    new = out.vertices[coarse.n_vertices:]
    assert len(new) > 0
    assert np.mean(np.hypot(*new.T) < 5 * delta) >= 0.5
    assert out.min_angle >= 15.0
    assert conforming(out)


def test_refine_budget(coarse):
    with pytest.raises(BudgetExceededError):
        refine(coarse, 1.0, np.zeros(coarse.n_vertices), budget=10)


def test_graded_mesh_resolves_core():
    core = 0.01
    m = graded_disk_mesh(core, 0.05)
    m.validate(15.0)
    near = np.hypot(*m.vertices.T) < 2 * core
    assert near.sum() >= 10


def test_mesh_io_roundtrip(coarse, tmp_path):
    path = tmp_path / "disk.mesh"
    write_mesh(coarse, path)
    first = path.read_text().splitlines()[0].split()
    assert [int(x) for x in first] == [coarse.n_vertices, coarse.n_triangles]
    back = read_mesh(path)
    assert np.allclose(back.vertices, coarse.vertices)
    assert np.array_equal(back.boundary, coarse.boundary)
    assert np.array_equal(np.sort(back.triangles, axis=1), np.sort(coarse.triangles, axis=1))


def test_mesh_errors():
    with pytest.raises(MeshError):
        Mesh(np.zeros((3, 3)), [[0, 1, 2]], [True] * 3)
    with pytest.raises(MeshError):
        Mesh(np.eye(3)[:, :2], [[0, 1, 5]], [True] * 3)
    with pytest.raises(MeshError):
        Mesh(np.eye(3)[:, :2], [[0, 1, 2]], [True] * 2)


def test_orientation_fixed():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    m = Mesh(v, [[0, 2, 1]], [True] * 3)
    assert m.areas[0] == pytest.approx(0.5)


def test_locate_interpolate_prolong(coarse, rng):
    pts = rng.uniform(-0.6, 0.6, (20, 2))
    lin = lambda x: 2 * x[:, 0] - 3 * x[:, 1] + 0.5  # noqa: E731
    assert np.allclose(coarse.interpolate(lin(coarse.vertices), pts), lin(pts))
    assert coarse.contains(pts).all()
    assert not coarse.contains(np.array([[1.5, 0.0]])).any()
    fine = uniform_refine(coarse)
    inner = fine.interior
    assert np.allclose(prolong(lin(coarse.vertices), coarse, fine)[inner], lin(fine.vertices[inner]))


def test_boundary_distance(coarse):
    d = coarse.boundary_distance(np.array([[0.0, 0.0], [0.5, 0.0]]))
    assert d == pytest.approx([1.0, 0.5], abs=2e-3)


def test_polygon_meshes():
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    m = polygon_mesh(square, 0.1)
    m.validate(15.0)
    assert m.areas.sum() == pytest.approx(1.0, rel=1e-12)
    for h in (0.2, 0.1):
        db = polygon_mesh(dumbbell_polygon(), h)
        db.validate(15.0)
        assert conforming(db)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 60))
def test_bisection_preserves_area_and_conformity(seed, k):
    mesh = disk_mesh(32)
    marked = np.random.default_rng(seed).choice(mesh.n_triangles, min(k, mesh.n_triangles), replace=False)
    out = bisect(mesh, marked)
    assert conforming(out)
    assert out.min_angle >= 15.0
    # boundary midpoints are snapped onto the circle, so area can only grow
    assert out.areas.sum() >= mesh.areas.sum() - 1e-12
    assert np.allclose(np.hypot(*out.vertices[out.boundary].T), 1.0)
