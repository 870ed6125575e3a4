"""Triangular meshes: storage, file I/O, generators, point location, refinement.

Meshes are immutable. Refinement returns a new :class:`Mesh`; vertex data is
carried over with :func:`prolong` (linear interpolation on the parent mesh).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, cKDTree

from ..errors import BudgetExceededError, MeshError, OutsideDomainError

UNIT_CIRCLE = "unit-circle"


def _orient(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    tri = triangles.copy()
    neg = det < 0
    tri[neg] = tri[neg][:, [0, 2, 1]]
    return tri


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming P1 triangulation of a planar polygon.

    ``curved_boundary`` names the exact boundary curve when the polygon
    approximates one; refinement then snaps new boundary vertices onto it.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    curved_boundary: str | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        b = np.ascontiguousarray(self.boundary, dtype=bool)
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshError("vertices must have shape (V, 2)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must have shape (T, 3)")
        if b.shape != (len(v),):
            raise MeshError("boundary flags must have one entry per vertex")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle index out of range")
        t = _orient(v, t)
        for a in (v, t, b):
            a.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "boundary", b)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def lumped_areas(self) -> np.ndarray:
        out = np.zeros(self.n_vertices)
        np.add.at(out, self.triangles, np.repeat(self.areas[:, None] / 3.0, 3, axis=1))
        return out

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the barycentric basis functions, shape (T, 3, 2)."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        two_a = 2.0 * self.areas[:, None]
        g = np.empty((self.n_triangles, 3, 2))
        g[:, 1] = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / two_a
        g[:, 2] = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / two_a
        g[:, 0] = -g[:, 1] - g[:, 2]
        return g

    @cached_property
    def _edge_data(self):
        t = self.triangles
        # local edge i is opposite local vertex i
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(flat, axis=0, return_inverse=True, return_counts=True)
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """Edge index of local edge i (opposite vertex i) for every triangle."""
        return self._edge_data[1]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        edges, _, counts = self._edge_data
        return edges[counts == 1]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    @property
    def h_max(self) -> float:
        return float(self.edge_lengths.max())

    @property
    def h_min(self) -> float:
        return float(self.edge_lengths.min())

    @cached_property
    def triangle_diameters(self) -> np.ndarray:
        return self.edge_lengths[self.triangle_edges].max(axis=1)

    @cached_property
    def diameter(self) -> float:
        pts = self.vertices[self.boundary]
        hull = ConvexHull(pts)
        h = pts[hull.vertices]
        d = np.linalg.norm(h[:, None, :] - h[None, :, :], axis=-1)
        return float(d.max())

    @cached_property
    def angles(self) -> np.ndarray:
        """Interior angles in degrees, shape (T, 3)."""
        p = self.vertices[self.triangles]
        out = np.empty((self.n_triangles, 3))
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            c = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            out[:, i] = np.degrees(np.arccos(np.clip(c, -1.0, 1.0)))
        return out

    @property
    def min_angle(self) -> float:
        return float(self.angles.min())

    @cached_property
    def neighbor_pairs(self) -> np.ndarray:
        e = self.edges
        return np.concatenate([e, e[:, ::-1]])

    def validate(self, min_angle: float | None = 15.0) -> None:
        """Raise :class:`MeshError` unless the structural invariants hold."""
        if np.any(self.areas <= 0):
            raise MeshError("degenerate or negatively oriented triangle")
        _, _, counts = self._edge_data
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: edge shared by more than two triangles")
        on_bnd = np.zeros(self.n_vertices, dtype=bool)
        on_bnd[self.boundary_edges.ravel()] = True
        if np.any(on_bnd != self.boundary):
            raise MeshError("boundary flags disagree with the boundary edges")
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.triangles.ravel()] = True
        if not used.all():
            raise MeshError("mesh has unreferenced vertices")
        if min_angle is not None and self.min_angle < min_angle:
            raise MeshError(f"minimum angle {self.min_angle:.2f} deg below {min_angle}")

    # -- point location -------------------------------------------------

    @cached_property
    def _centroid_tree(self):
        return cKDTree(self.vertices[self.triangles].mean(axis=1))

    def _barycentric(self, tri_idx, pts):
        p = self.vertices[self.triangles[tri_idx]]
        d1 = p[..., 1, :] - p[..., 0, :]
        d2 = p[..., 2, :] - p[..., 0, :]
        r = pts - p[..., 0, :]
        det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        l1 = (r[..., 0] * d2[..., 1] - r[..., 1] * d2[..., 0]) / det
        l2 = (d1[..., 0] * r[..., 1] - d1[..., 1] * r[..., 0]) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)

    def locate(self, points, tol: float = 1e-12):
        """Containing triangle and barycentric coordinates of each point.

        Points outside the mesh get triangle index -1.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(pts)
        tri = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        k = min(24, self.n_triangles)
        _, cand = self._centroid_tree.query(pts, k=k)
        cand = cand.reshape(n, k)
        lam = self._barycentric(cand, pts[:, None, :])
        ok = lam.min(axis=-1) >= -tol
        hit = ok.any(axis=1)
        first = ok.argmax(axis=1)
        rows = np.flatnonzero(hit)
        tri[rows] = cand[rows, first[rows]]
        bary[rows] = lam[rows, first[rows]]
        for i in np.flatnonzero(~hit):
            lam_all = self._barycentric(np.arange(self.n_triangles), pts[i][None, :])
            worst = lam_all.min(axis=1)
            j = int(np.argmax(worst))
            if worst[j] >= -1e-9:
                tri[i] = j
                bary[i] = lam_all[j]
        return tri, bary

    def interpolate(self, values, points) -> np.ndarray:
        """P1 interpolation of vertex data at arbitrary points.

        ``values`` may be (V,) or (V, k). Raises OutsideDomainError for points
        not covered by the mesh.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tri, bary = self.locate(pts)
        if np.any(tri < 0):
            raise OutsideDomainError(f"{int(np.sum(tri < 0))} point(s) outside the mesh")
        vals = np.asarray(values)[self.triangles[tri]]
        if vals.ndim == 2:
            return np.einsum("pi,pi->p", bary, vals)
        return np.einsum("pi,pik->pk", bary, vals)

    def contains(self, points) -> np.ndarray:
        tri, _ = self.locate(points)
        return tri >= 0

    def boundary_distance(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        e = self.boundary_edges
        a = self.vertices[e[:, 0]]
        d = self.vertices[e[:, 1]] - a
        dd = np.einsum("ij,ij->i", d, d)
        out = np.empty(len(pts))
        for s in range(0, len(pts), 256):
            p = pts[s:s + 256, None, :]
            t = np.clip(np.einsum("pej,ej->pe", p - a, d) / dd, 0.0, 1.0)
            q = a + t[..., None] * d
            out[s:s + 256] = np.linalg.norm(p - q, axis=-1).min(axis=1)
        return out


def prolong(values, coarse: Mesh, fine: Mesh) -> np.ndarray:
    """Interpolate vertex data from ``coarse`` onto the vertices of ``fine``."""
    vals = np.asarray(values, dtype=float)
    tri, bary = coarse.locate(fine.vertices, tol=1e-9)
    out = np.empty(fine.n_vertices)
    inside = tri >= 0
    out[inside] = np.einsum("pi,pi->p", bary[inside], vals[coarse.triangles[tri[inside]]])
    if not inside.all():
        # snapped boundary vertices can sit just outside the parent polygon
        _, nearest = cKDTree(coarse.vertices).query(fine.vertices[~inside])
        out[~inside] = vals[nearest]
    return out


# -- file format ---------------------------------------------------------


def read_mesh(path, curved_boundary: str | None = None) -> Mesh:
    """Read the text format: ``V T`` header, V lines ``x y flag``, T lines ``i j k``."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    try:
        nv, nt = (int(x) for x in lines[0].split()[:2])
        vdata = np.array([[float(x) for x in ln.split()[:3]] for ln in lines[1:1 + nv]])
        tdata = np.array([[int(x) for x in ln.split()[:3]] for ln in lines[1 + nv:1 + nv + nt]], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if vdata.shape != (nv, 3) or tdata.shape != (nt, 3):
        raise MeshError(f"mesh file {path} does not match its header counts")
    return Mesh(vdata[:, :2], tdata, vdata[:, 2] != 0, curved_boundary)


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles}\n")
        for (x, y), b in zip(mesh.vertices, mesh.boundary):
            fh.write(f"{x:.17g} {y:.17g} {int(b)}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")


# -- generators ----------------------------------------------------------


def _ring_radii(size, r_end=1.0):
    radii = []
    r = 0.0
    h_end = size(r_end)
    while True:
        r_next = r + size(r)
        if r_next > r_end - 0.5 * h_end:
            break
        radii.append(r_next)
        r = r_next
    radii = np.asarray(radii)
    if len(radii):
        radii *= (r_end - h_end) / radii[-1]
    return np.append(radii, r_end)


def ring_disk_mesh(size, n_boundary: int | None = None) -> Mesh:
    """Unit-disk mesh from concentric vertex rings, Delaunay-connected.

    ``size(r)`` is the target edge length at radius r; rings are spaced by it
    and carry round(2 pi r / size(r)) vertices, alternately staggered.
    """
    pts = [np.zeros((1, 2))]
    radii = _ring_radii(size)
    for k, r in enumerate(radii):
        n = max(6, int(round(2 * np.pi * r / size(r))))
        if k == len(radii) - 1 and n_boundary:
            n = n_boundary
        th = 2 * np.pi * (np.arange(n) + 0.5 * (k % 2)) / n
        pts.append(np.column_stack([r * np.cos(th), r * np.sin(th)]))
    v = np.concatenate(pts)
    tri = Delaunay(v).simplices
    bnd = np.abs(np.hypot(v[:, 0], v[:, 1]) - 1.0) < 1e-12
    return Mesh(v, tri, bnd, UNIT_CIRCLE)


def disk_mesh(n_boundary: int = 256, h: float | None = None) -> Mesh:
    """Quasi-uniform polygonal unit disk with ``n_boundary`` boundary segments."""
    h = 2 * np.pi / n_boundary if h is None else h
    return ring_disk_mesh(lambda r: h, n_boundary=n_boundary)


def graded_disk_mesh(core: float, grading: float = 0.02, h_max: float = 0.05) -> Mesh:
    """Unit disk graded toward the origin.

    Target edge length is ``min(h_max, grading * sqrt(r**2 + core**2))``; with
    ``core`` the bubble width this resolves a peak at the centre with a fixed
    number of elements per bubble radius.
    """
    return ring_disk_mesh(lambda r: min(h_max, grading * np.hypot(r, core)))


def _points_in_polygon(pts, poly):
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    xj, yj = poly[-1]
    for xi, yi in poly:
        cross = ((yi > y) != (yj > y)) & (x < (xj - xi) * (y - yi) / (yj - yi + 1e-300) + xi)
        inside ^= cross
        xj, yj = xi, yi
    return inside


def polygon_mesh(polygon, h: float, smoothing_steps: int = 30) -> Mesh:
    """Mesh a simple polygon with boundary spacing and lattice spacing ``h``."""
    poly = np.asarray(polygon, dtype=float)
    bpts = []
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / h)))
        t = np.arange(n)[:, None] / n
        bpts.append(a + t * (b - a))
    bpts = np.concatenate(bpts)
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    dy = h * np.sqrt(3) / 2
    rows = []
    for j, yy in enumerate(np.arange(lo[1], hi[1] + dy, dy)):
        xx = np.arange(lo[0] + (0.5 * h if j % 2 else 0.0), hi[0] + h, h)
        rows.append(np.column_stack([xx, np.full_like(xx, yy)]))
    lattice = np.concatenate(rows)
    lattice = lattice[_points_in_polygon(lattice, poly)]
    seg_a = bpts
    seg_d = np.roll(bpts, -1, axis=0) - bpts
    dd = np.einsum("ij,ij->i", seg_d, seg_d)
    t = np.clip(np.einsum("pej,ej->pe", lattice[:, None, :] - seg_a, seg_d) / dd, 0, 1)
    dist = np.linalg.norm(lattice[:, None, :] - (seg_a + t[..., None] * seg_d), axis=-1).min(axis=1)
    lattice = lattice[dist > 0.6 * h]
    v = np.concatenate([bpts, lattice])
    bnd = np.zeros(len(v), dtype=bool)
    bnd[: len(bpts)] = True

    def triangulate(v):
        tri = Delaunay(v).simplices
        return tri[_points_in_polygon(v[tri].mean(axis=1), poly)]

    # Laplacian smoothing of interior vertices lifts the angles near the boundary
    for _ in range(smoothing_steps):
        tri = triangulate(v)
        acc = np.zeros_like(v)
        cnt = np.zeros(len(v))
        for i in range(3):
            for j in (1, 2):
                np.add.at(acc, tri[:, i], v[tri[:, (i + j) % 3]])
                np.add.at(cnt, tri[:, i], 1.0)
        moved = acc / np.maximum(cnt, 1.0)[:, None]
        ok = ~bnd & (cnt > 0) & _points_in_polygon(moved, poly)
        v[ok] = moved[ok]
    tri = triangulate(v)
    used = np.unique(tri)
    remap = -np.ones(len(v), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return Mesh(v[used], remap[tri], bnd[used])


def dumbbell_polygon(lobe_radius: float = 1.0, separation: float = 3.0,
                     neck_half_width: float = 0.2, n_arc: int = 96) -> np.ndarray:
    """Two disks joined by a straight channel along the x axis (CCW vertices)."""
    c = separation / 2
    phi = np.arcsin(neck_half_width / lobe_radius)
    right = np.linspace(-np.pi + phi, np.pi - phi, n_arc)
    left = np.linspace(phi, 2 * np.pi - phi, n_arc)
    rpts = np.column_stack([c + lobe_radius * np.cos(right), lobe_radius * np.sin(right)])
    lpts = np.column_stack([-c + lobe_radius * np.cos(left), lobe_radius * np.sin(left)])
    return np.concatenate([rpts, lpts])


# -- refinement ----------------------------------------------------------


def _snap(mesh: Mesh, pts, on_boundary):
    if mesh.curved_boundary == UNIT_CIRCLE and np.any(on_boundary):
        p = pts[on_boundary]
        pts[on_boundary] = p / np.linalg.norm(p, axis=1)[:, None]
    return pts


def uniform_refine(mesh: Mesh) -> Mesh:
    """Red refinement: split every triangle into four similar children."""
    edges = mesh.edges
    te = mesh.triangle_edges
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    bedge = np.zeros(len(edges), dtype=bool)
    _, _, counts = mesh._edge_data
    bedge[counts == 1] = True
    mids = _snap(mesh, mids, bedge)
    t = mesh.triangles
    m0, m1, m2 = (te[:, i] + nv for i in range(3))  # midpoint opposite vertex i
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    children = np.concatenate([
        np.column_stack([a, m2, m1]),
        np.column_stack([m2, b, m0]),
        np.column_stack([m1, m0, c]),
        np.column_stack([m0, m1, m2]),
    ])
    v = np.concatenate([mesh.vertices, mids])
    bnd = np.concatenate([mesh.boundary, bedge])
    return Mesh(v, children, bnd, mesh.curved_boundary)


def bisect(mesh: Mesh, marked) -> Mesh:
    """Longest-edge bisection of the marked triangles with conforming closure.

    Every marked triangle is split through the midpoint of its longest edge;
    neighbours sharing a split edge are split as well (their longest edge
    first), which keeps the mesh conforming.
    """
    marked = np.asarray(marked)
    if marked.dtype == bool:
        marked = np.flatnonzero(marked)
    te = mesh.triangle_edges
    lengths = mesh.edge_lengths
    t = mesh.triangles
    # rotate each triangle so its longest edge is local edge 0 (opposite vertex 0)
    longest = np.argmax(lengths[te] + 1e-12 * np.arange(3)[None, :], axis=1)
    rot = np.stack([(longest + i) % 3 for i in range(3)], axis=1)
    t = np.take_along_axis(t, rot, axis=1)
    te = np.take_along_axis(te, rot, axis=1)

    split = np.zeros(len(mesh.edges), dtype=bool)
    split[te[marked, 0]] = True
    while True:
        touched = split[te].any(axis=1)
        new = touched & ~split[te[:, 0]]
        if not new.any():
            break
        split[te[new, 0]] = True

    edge_ids = np.flatnonzero(split)
    nv = mesh.n_vertices
    mid_index = -np.ones(len(mesh.edges), dtype=np.int64)
    mid_index[edge_ids] = nv + np.arange(len(edge_ids))
    e = mesh.edges[edge_ids]
    mids = 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])
    _, _, counts = mesh._edge_data
    bedge = counts[edge_ids] == 1
    mids = _snap(mesh, mids, bedge)

    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    m = mid_index[te[:, 0]]  # midpoint of bc
    q = mid_index[te[:, 1]]  # midpoint of ca
    p = mid_index[te[:, 2]]  # midpoint of ab
    s0 = split[te[:, 0]]
    s1 = split[te[:, 1]]
    s2 = split[te[:, 2]]
    out = [t[~s0]]
    sel = s0 & ~s2
    out.append(np.column_stack([a, b, m])[sel])
    sel = s0 & s2
    out.append(np.column_stack([a, p, m])[sel])
    out.append(np.column_stack([p, b, m])[sel])
    sel = s0 & ~s1
    out.append(np.column_stack([a, m, c])[sel])
    sel = s0 & s1
    out.append(np.column_stack([a, m, q])[sel])
    out.append(np.column_stack([q, m, c])[sel])
    v = np.concatenate([mesh.vertices, mids])
    bnd = np.concatenate([mesh.boundary, bedge])
    return Mesh(v, np.concatenate(out), bnd, mesh.curved_boundary)


def refine(mesh: Mesh, lam: float, u, budget: int, factor: float = 4.0, max_sweeps: int = 60) -> Mesh:
    """Adaptive bisection driven by the indicator ``lam * exp(u) * h_T**2``.

    Triangles whose indicator exceeds ``factor`` times the median are
    bisected; sweeps repeat on the refined mesh (``u`` carried over linearly)
    until nothing is marked or the vertex budget is reached.
    """
    if mesh.n_vertices > budget:
        raise BudgetExceededError(f"mesh already has {mesh.n_vertices} vertices > budget {budget}")
    u = np.asarray(u, dtype=float)
    current = mesh
    for _ in range(max_sweeps):
        ind = refinement_indicator(current, lam, u)
        marked = np.flatnonzero(ind > factor * np.median(ind))
        if len(marked) == 0:
            break
        room = budget - current.n_vertices
        if room <= 0:
            break
        if len(marked) > room:
            marked = marked[np.argsort(ind[marked])[::-1][:room]]
        candidate = bisect(current, marked)
        if candidate.n_vertices > budget:
            # closure overshoot: keep only the strongest half until it fits
            while candidate.n_vertices > budget and len(marked) > 1:
                marked = marked[np.argsort(ind[marked])[::-1][: len(marked) // 2]]
                candidate = bisect(current, marked)
            if candidate.n_vertices > budget:
                break
        u = prolong(u, current, candidate)
        current = candidate
    return current


def refinement_indicator(mesh: Mesh, lam: float, u) -> np.ndarray:
    """Per-triangle ``lam * exp(u) * h_T**2`` with exp(u) averaged over vertices."""
    eu = np.exp(np.asarray(u)[mesh.triangles]).mean(axis=1)
    return lam * eu * mesh.triangle_diameters ** 2


def refine_to_size(mesh: Mesh, size, budget: int, max_sweeps: int = 60) -> Mesh:
    """Bisect until every triangle diameter is below ``size(centroid)``."""
    current = mesh
    for _ in range(max_sweeps):
        cent = current.vertices[current.triangles].mean(axis=1)
        marked = np.flatnonzero(current.triangle_diameters > size(cent))
        if len(marked) == 0:
            return current
        candidate = bisect(current, marked)
        if candidate.n_vertices > budget:
            raise BudgetExceededError(f"size field needs more than {budget} vertices")
        current = candidate
    return current
