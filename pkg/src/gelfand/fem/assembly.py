"""P1 assembly: exact stiffness and quadrature for the exponential nonlinearity."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh

# degree-2 rule with interior points; rows are barycentric coordinates, weights 1/3
QUAD_POINTS = np.array([
    [2 / 3, 1 / 6, 1 / 6],
    [1 / 6, 2 / 3, 1 / 6],
    [1 / 6, 1 / 6, 2 / 3],
])


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


@lru_cache(maxsize=16)
def stiffness(mesh: Mesh) -> sp.csr_matrix:
    g = mesh.basis_gradients
    local = np.einsum("tia,tja->tij", g, g) * mesh.areas[:, None, None]
    return _scatter(mesh, local)


def exp_terms(mesh: Mesh, u) -> tuple[np.ndarray, sp.csr_matrix]:
    """Load vector F_i = int e^u phi_i and weighted mass M_ij = int e^u phi_i phi_j."""
    uq = np.asarray(u)[mesh.triangles] @ QUAD_POINTS.T
    e = np.exp(uq)
    w = mesh.areas / 3.0
    fe = (e @ QUAD_POINTS) * w[:, None]
    load = np.zeros(mesh.n_vertices)
    np.add.at(load, mesh.triangles, fe)
    me = np.einsum("tq,qi,qj->tij", e, QUAD_POINTS, QUAD_POINTS) * w[:, None, None]
    return load, _scatter(mesh, me)


def exp_integral(mesh: Mesh, u) -> float:
    """int_Omega e^u with the same quadrature as the load vector."""
    uq = np.asarray(u)[mesh.triangles] @ QUAD_POINTS.T
    return float(np.sum(np.exp(uq).sum(axis=1) * mesh.areas / 3.0))
