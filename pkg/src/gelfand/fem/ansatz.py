"""Liouville-bubble initial guess for blow-up solutions.

Near each peak the guess is the rescaled entire solution
``-log(lam) - 2 log(delta_j) - 2 log(1 + |x - k_j|^2 / (8 delta_j^2))`` with
``delta_j = d_j sqrt(lam)``; away from the peaks it is ``sum_i 8 pi G(x, k_i)``.
The two regimes are spliced by a smoothstep over the annulus
``rho/2 <= |x - k_j| <= rho`` with ``rho = clearance / 4``.
"""

from __future__ import annotations

import numpy as np

from ..errors import OverlapError
from .mesh import Mesh


def clearance(points, domain) -> float:
    """Smallest of the boundary distances and the pairwise distances of the peaks."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c = float(np.min(domain.boundary_distance(pts)))
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            c = min(c, float(np.hypot(*(pts[i] - pts[j]))))
    return c


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def bubble(r2, lam, delta):
    """Rescaled Liouville bubble as a function of squared distance to its centre."""
    return -np.log(lam) - 2.0 * np.log(delta) - 2.0 * np.log1p(r2 / (8.0 * delta**2))


def liouville_ansatz(mesh: Mesh, ev, points, d, lam: float) -> np.ndarray:
    """Nodal initial guess for an m-peak solution at parameter ``lam``.

    ``ev`` is a GreenEvaluator for the same domain, ``points`` the m peak
    locations and ``d`` the peak-scale constants.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if lam <= 0:
        raise ValueError("lambda must be positive")
    clear = clearance(pts, ev.domain)
    rho = clear / 4.0
    deltas = d * np.sqrt(lam)
    if np.any(deltas >= clear / 10.0):
        raise OverlapError(
            f"bubble scale {deltas.max():.3g} is not below clearance/10 = {clear / 10:.3g}")
    x = mesh.vertices
    weights = np.zeros((len(pts), mesh.n_vertices))
    near = np.zeros(mesh.n_vertices)
    for j, (k, delta) in enumerate(zip(pts, deltas)):
        r2 = (x[:, 0] - k[0]) ** 2 + (x[:, 1] - k[1]) ** 2
        weights[j] = 1.0 - smoothstep((np.sqrt(r2) - rho / 2) / (rho / 2))
        near += weights[j] * bubble(r2, lam, delta)
    w_far = 1.0 - weights.sum(axis=0)
    far = np.zeros(mesh.n_vertices)
    mask = w_far > 0
    for k in pts:
        far[mask] += 8.0 * np.pi * ev.green_at(x[mask], k)
    u = near + w_far * far
    u[mesh.boundary] = 0.0
    return u
