"""Dirichlet Green function, regular part and Robin function.

For the unit disk everything is closed form (image charge). On a meshed
polygon the regular part ``K(., y)`` is the harmonic function with boundary
values ``(1/2pi) log|x - y|``; it is obtained by one P1 Dirichlet solve per
source point and cached.

Derivatives on meshes are split by variable. Derivatives in the source
variable are central differences of whole solved fields (smooth in ``y``)
with one Richardson halving. Derivatives in the field variable come from a
harmonic Fourier fit of the field on a circle around ``x``: the P1
interpolant has no usable second derivatives of its own.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from .errors import (
    CoincidentPointsError,
    ConfigError,
    OutsideDomainError,
    StepUnderflowError,
)
from .fem.assembly import stiffness
from .fem.mesh import Mesh, read_mesh

TWO_PI = 2.0 * np.pi
ORDERS = ("grad_x", "grad_y", "hess_xy", "hess_xx")


def as_point(x) -> np.ndarray:
    p = np.asarray(x, dtype=float).reshape(2)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"non-finite point {x!r}")
    return p


@dataclass(frozen=True, eq=False)
class Domain:
    """The planar region: either the analytic unit disk or a meshed polygon."""

    kind: str
    mesh: Mesh | None = None

    def __post_init__(self):
        if self.kind not in ("unit-disk", "meshed-polygon"):
            raise ConfigError(f"unknown domain kind {self.kind!r}")
        if self.kind == "meshed-polygon" and self.mesh is None:
            raise ConfigError("meshed-polygon domain needs a mesh")

    @classmethod
    def unit_disk(cls) -> "Domain":
        return cls("unit-disk")

    @classmethod
    def from_mesh(cls, mesh: Mesh) -> "Domain":
        return cls("meshed-polygon", mesh)

    @classmethod
    def from_json(cls, spec, base_dir=None) -> "Domain":
        """Build from ``{"kind": "unit-disk"}`` or ``{"kind": "mesh", "file": path}``.

        ``spec`` may be a dict, a JSON string or a path to a JSON file.
        """
        if isinstance(spec, (str, Path)) and Path(spec).is_file():
            base_dir = Path(spec).parent if base_dir is None else base_dir
            spec = json.loads(Path(spec).read_text())
        elif isinstance(spec, str):
            spec = json.loads(spec)
        kind = spec.get("kind")
        if kind in ("unit-disk", "disk"):
            return cls.unit_disk()
        if kind == "mesh":
            path = Path(spec["file"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            if not path.is_file():
                raise ConfigError(f"mesh file {path} not found")
            return cls.from_mesh(read_mesh(path, spec.get("curved_boundary")))
        raise ConfigError(f"unknown domain kind {kind!r}")

    @property
    def is_disk(self) -> bool:
        return self.kind == "unit-disk"

    @property
    def diameter(self) -> float:
        return 2.0 if self.is_disk else self.mesh.diameter

    def boundary_distance(self, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if self.is_disk:
            return 1.0 - np.hypot(pts[:, 0], pts[:, 1])
        d = self.mesh.boundary_distance(pts)
        return np.where(self.mesh.contains(pts), d, -d)

    def contains(self, x) -> np.ndarray:
        return self.boundary_distance(x) > 0.0


# -- closed forms on the unit disk ---------------------------------------


def _log_kernel(x, y):
    d = x - y
    r2 = d @ d
    return -np.log(r2) / (4 * np.pi), d, r2


def _log_kernel_derivs(d, r2):
    grad_x = -d / (TWO_PI * r2)
    hess_xx = -(np.eye(2) / r2 - 2.0 * np.outer(d, d) / r2**2) / TWO_PI
    return grad_x, hess_xx


def disk_regular(x, y) -> float:
    q = 1.0 - 2.0 * (x @ y) + (x @ x) * (y @ y)
    return np.log(q) / (4 * np.pi)


def disk_regular_derivs(x, y):
    """(K, grad_x K, grad_y K, K_xx, K_xy) of the disk regular part."""
    xx, yy = x @ x, y @ y
    q = 1.0 - 2.0 * (x @ y) + xx * yy
    qx = -2.0 * y + 2.0 * yy * x
    qy = -2.0 * x + 2.0 * xx * y
    qxx = 2.0 * yy * np.eye(2)
    qxy = -2.0 * np.eye(2) + 4.0 * np.outer(x, y)
    c = 1.0 / (4 * np.pi)
    return (
        c * np.log(q),
        c * qx / q,
        c * qy / q,
        c * (qxx / q - np.outer(qx, qx) / q**2),
        c * (qxy / q - np.outer(qx, qy) / q**2),
    )


def disk_robin(x) -> float:
    return np.log(1.0 - x @ x) / TWO_PI


def disk_robin_grad(x) -> np.ndarray:
    return -x / (np.pi * (1.0 - x @ x))


def disk_robin_hess(x) -> np.ndarray:
    s = 1.0 - x @ x
    return -(np.eye(2) / s + 2.0 * np.outer(x, x) / s**2) / np.pi


# -- evaluator -----------------------------------------------------------


class GreenEvaluator:
    """Evaluates G, K, R and their derivatives on one domain.

    The public surface is read-only. On meshed domains the correction fields
    are filled lazily behind a lock, so concurrent readers are safe.
    """

    def __init__(self, domain: Domain, fd_step: float = 1e-4, fit_radius: float = 0.15,
                 fit_samples: int = 128, cache_size: int = 4096):
        if fd_step <= 0:
            raise ValueError("fd_step must be positive")
        self.domain = domain
        self.fd_step = fd_step
        self.fit_radius = fit_radius
        self.fit_samples = fit_samples
        self._cache_size = cache_size
        self._cache: dict[tuple[int, int], np.ndarray] = {}
        self._lock = threading.Lock()
        self._quantum = 1e-10 * domain.diameter
        if not domain.is_disk:
            mesh = domain.mesh
            if fd_step < 1e-7:
                raise StepUnderflowError("fd_step below the roundoff floor of central differences")
            k = stiffness(mesh).tocsr()
            inner, bnd = mesh.interior, np.flatnonzero(mesh.boundary)
            self._inner, self._bnd = inner, bnd
            self._k_ii = k[inner][:, inner].tocsc()
            self._k_ib = k[inner][:, bnd].tocsr()
            self._lu = spla.splu(self._k_ii)

    @property
    def diameter(self) -> float:
        return self.domain.diameter

    # -- checks ----------------------------------------------------------

    def _interior(self, x) -> np.ndarray:
        p = as_point(x)
        if self.domain.is_disk:
            if p @ p >= 1.0:
                raise OutsideDomainError(f"{p} is not inside the unit disk")
        elif not self.domain.mesh.contains(p[None, :])[0]:
            raise OutsideDomainError(f"{p} is outside the mesh")
        return p

    def _pair(self, x, y):
        x, y = self._interior(x), self._interior(y)
        if np.hypot(*(x - y)) < 1e-12 * self.diameter:
            raise CoincidentPointsError(f"coincident points {x} and {y}")
        return x, y

    # -- meshed-domain machinery ----------------------------------------

    def correction_field(self, y) -> np.ndarray:
        """Nodal values of K(., y): harmonic, equal to (1/2pi) log|x - y| on the boundary."""
        y = as_point(y)
        key = tuple(np.round(y / self._quantum).astype(np.int64))
        field = self._cache.get(key)
        if field is not None:
            return field
        with self._lock:
            field = self._cache.get(key)
            if field is None:
                field = self._solve_field(y)
                if len(self._cache) >= self._cache_size:
                    self._cache.pop(next(iter(self._cache)))
                self._cache[key] = field
        return field

    def _boundary_data(self, y):
        xb = self.domain.mesh.vertices[self._bnd]
        return np.log(np.hypot(xb[:, 0] - y[0], xb[:, 1] - y[1])) / TWO_PI

    def _solve_field(self, y):
        g = self._boundary_data(y)
        field = np.empty(self.domain.mesh.n_vertices)
        field[self._bnd] = g
        field[self._inner] = self._lu.solve(-(self._k_ib @ g))
        field.flags.writeable = False
        return field

    def harmonic_residual(self, y) -> float:
        """Max-norm of the discrete Laplacian of the cached field at interior nodes."""
        field = self.correction_field(y)
        r = self._k_ii @ field[self._inner] + self._k_ib @ field[self._bnd]
        return float(np.abs(r).max())

    def _source_derivative(self, y, beta):
        """d/dy_beta of the correction field: central differences + one Richardson step."""
        h = self.fd_step * self.diameter
        e = np.zeros(2)
        e[beta] = 1.0

        def cd(step):
            return (self.correction_field(y + step * e) - self.correction_field(y - step * e)) / (2 * step)

        return (4.0 * cd(h / 2) - cd(h)) / 3.0

    def _fit_radius(self, x):
        mesh = self.domain.mesh
        dist = float(mesh.boundary_distance(x[None, :])[0])
        rho = min(self.fit_radius * self.diameter, 0.5 * dist)
        tri, _ = mesh.locate(x[None, :])
        local_h = float(mesh.triangle_diameters[tri[0]]) if tri[0] >= 0 else mesh.h_max
        if rho < 3.0 * local_h:
            raise StepUnderflowError(
                f"derivative stencil radius {rho:.3g} is below three local mesh sizes ({local_h:.3g})")
        return rho

    def _harmonic_fit(self, fields, x):
        """Value, gradient and Hessian at x of harmonic fields sampled on a circle.

        ``fields`` has shape (V,) or (V, k). Returns arrays with a trailing k axis.
        """
        rho = self._fit_radius(x)
        n = self.fit_samples
        th = TWO_PI * np.arange(n) / n
        pts = x + rho * np.column_stack([np.cos(th), np.sin(th)])
        f = np.asarray(fields)
        if f.ndim == 1:
            f = f[:, None]
        vals = self.domain.mesh.interpolate(f, pts)  # (n, k)
        c1, s1 = np.cos(th) @ vals, np.sin(th) @ vals
        c2, s2 = np.cos(2 * th) @ vals, np.sin(2 * th) @ vals
        a0 = vals.mean(axis=0)
        grad = np.stack([c1, s1]) * (2.0 / n) / rho
        a2, b2 = c2 * (2.0 / n), s2 * (2.0 / n)
        hess = np.stack([np.stack([a2, b2]), np.stack([b2, -a2])]) * (2.0 / rho**2)
        return a0, grad, hess

    # -- public API ------------------------------------------------------

    def regular(self, x, y) -> float:
        """K(x, y)."""
        x, y = self._interior(x), self._interior(y)
        if self.domain.is_disk:
            return float(disk_regular(x, y))
        return float(self.domain.mesh.interpolate(self.correction_field(y), x[None, :])[0])

    def green(self, x, y) -> float:
        x, y = self._pair(x, y)
        if self.domain.is_disk:
            xx, yy = x @ x, y @ y
            q = 1.0 - 2.0 * (x @ y) + xx * yy
            return float(np.log(q / ((x - y) @ (x - y))) / (4 * np.pi))
        return float(_log_kernel(x, y)[0] + self.regular(x, y))

    def robin(self, x) -> float:
        x = self._interior(x)
        if self.domain.is_disk:
            return float(disk_robin(x))
        return self.regular(x, x)

    def regular_derivatives(self, x, y, order: str) -> np.ndarray:
        """Derivatives of K; same orders as :meth:`green_derivatives`."""
        if order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}")
        x, y = self._interior(x), self._interior(y)
        if self.domain.is_disk:
            _, kx, ky, kxx, kxy = disk_regular_derivs(x, y)
            return {"grad_x": kx, "grad_y": ky, "hess_xx": kxx, "hess_xy": kxy}[order]
        if order == "grad_x":
            return self._harmonic_fit(self.correction_field(y), x)[1][:, 0]
        if order == "hess_xx":
            return self._harmonic_fit(self.correction_field(y), x)[2][:, :, 0]
        src = np.column_stack([self._source_derivative(y, 0), self._source_derivative(y, 1)])
        if order == "grad_y":
            return self.domain.mesh.interpolate(src, x[None, :])[0]
        return self._harmonic_fit(src, x)[1]

    def green_derivatives(self, x, y, order: str) -> np.ndarray:
        """Partial derivatives of G(x, y).

        ``grad_x``/``grad_y`` give 2-vectors; ``hess_xx[a, b]`` is
        d2G/dx_a dx_b and ``hess_xy[a, b]`` is d2G/dx_a dy_b.
        """
        x, y = self._pair(x, y)
        _, d, r2 = _log_kernel(x, y)
        lx, lxx = _log_kernel_derivs(d, r2)
        k = self.regular_derivatives(x, y, order)
        if order == "grad_x":
            return lx + k
        if order == "grad_y":
            return -lx + k
        if order == "hess_xx":
            return lxx + k
        return -lxx + k

    def green_field(self, y) -> np.ndarray:
        """Nodal values of G(., y) on the mesh vertices (disk: closed form); NaN at y itself."""
        if self.domain.mesh is None:
            raise ValueError("green_field needs a meshed domain or an explicit vertex array")
        return self.green_at(self.domain.mesh.vertices, y)

    def green_at(self, points, y) -> np.ndarray:
        """G(x, y) for many x; uses the nodal correction field when points are mesh vertices."""
        y = self._interior(y)
        pts = np.asarray(points, dtype=float)
        d2 = (pts[:, 0] - y[0]) ** 2 + (pts[:, 1] - y[1]) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            logpart = -np.log(d2) / (4 * np.pi)
            if self.domain.is_disk:
                q = 1.0 - 2.0 * (pts @ y) + np.einsum("ij,ij->i", pts, pts) * (y @ y)
                k = np.log(np.maximum(q, 1e-300)) / (4 * np.pi)
            elif pts is self.domain.mesh.vertices or (
                    pts.shape == self.domain.mesh.vertices.shape
                    and np.array_equal(pts, self.domain.mesh.vertices)):
                k = self.correction_field(y)
            else:
                k = self.domain.mesh.interpolate(self.correction_field(y), pts)
            out = logpart + k
        out[d2 < (1e-12 * self.diameter) ** 2] = np.nan
        return out

    def robin_gradient(self, x) -> np.ndarray:
        x = self._interior(x)
        if self.domain.is_disk:
            return disk_robin_grad(x)
        return 2.0 * self.regular_derivatives(x, x, "grad_x")

    def robin_hessian(self, x) -> np.ndarray:
        """Hess R = 2 (K_xx + K_xy) on the diagonal, by symmetry of K."""
        x = self._interior(x)
        if self.domain.is_disk:
            return disk_robin_hess(x)
        kxx = self.regular_derivatives(x, x, "hess_xx")
        kxy = self.regular_derivatives(x, x, "hess_xy")
        kxy = 0.5 * (kxy + kxy.T)
        return 2.0 * (kxx + kxy)


def green(ev: GreenEvaluator, x, y) -> float:
    return ev.green(x, y)


def robin(ev: GreenEvaluator, x) -> float:
    return ev.robin(x)


def green_derivatives(ev: GreenEvaluator, x, y, order: str) -> np.ndarray:
    return ev.green_derivatives(x, y, order)
