"""Numerical checks of exact identities: the bilinear Pohozaev identity on balls,
the boundary-integral table I_ab built from Green derivatives, and sign
preservation of eigenvalues under the congruence H -> D H D.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import polynomial as P

from . import io as gio
from .errors import GeometryError, ZeroDiagonalError


@dataclass(frozen=True)
class TestField:
    """A C^2 function on a ball given by vectorized value, gradient and Laplacian.

    Each callable takes points of shape (N, 2); ``grad`` returns (N, 2).
    """

    __test__ = False  # not a pytest class

    kind: str
    value: Callable
    grad: Callable
    laplacian: Callable

    @classmethod
    def polynomial(cls, coeffs) -> "TestField":
        """``coeffs[i, j]`` multiplies x^i y^j."""
        c = np.atleast_2d(np.asarray(coeffs, dtype=float))
        cx, cy = P.polyder(c, axis=0), P.polyder(c, axis=1)
        lap = P.polyder(c, 2, axis=0)
        lap_y = P.polyder(c, 2, axis=1)

        def ev(coef):
            return lambda pts: P.polyval2d(pts[:, 0], pts[:, 1], coef) if coef.size else np.zeros(len(pts))

        def laplacian(pts):
            out = np.zeros(len(pts))
            if lap.size:
                out += P.polyval2d(pts[:, 0], pts[:, 1], lap)
            if lap_y.size:
                out += P.polyval2d(pts[:, 0], pts[:, 1], lap_y)
            return out

        vx, vy = ev(cx), ev(cy)
        return cls("polynomial", ev(c), lambda pts: np.column_stack([vx(pts), vy(pts)]), laplacian)

    @classmethod
    def harmonic(cls, n: int, imaginary: bool = False, center=(0.0, 0.0)) -> "TestField":
        """Re or Im of (z - center)^n."""
        c = complex(*center)

        def value(pts):
            z = (pts[:, 0] + 1j * pts[:, 1] - c) ** n
            return z.imag if imaginary else z.real

        def grad(pts):
            dz = n * (pts[:, 0] + 1j * pts[:, 1] - c) ** (n - 1) if n else 0 * pts[:, 0]
            # f = Re F: grad = (Re F', -Im F'); f = Im F: grad = (Im F', Re F')
            if imaginary:
                return np.column_stack([np.imag(dz), np.real(dz)])
            return np.column_stack([np.real(dz), -np.imag(dz)])

        return cls("harmonic", value, grad, lambda pts: np.zeros(len(pts)))

    @classmethod
    def green_derived(cls, ev, y) -> "TestField":
        """x -> G(x, y); harmonic away from y."""
        y = np.asarray(y, dtype=float)
        return cls(
            "green-derived",
            lambda pts: np.array([ev.green(p, y) for p in pts]),
            lambda pts: np.array([ev.green_derivatives(p, y, "grad_x") for p in pts]),
            lambda pts: np.zeros(len(pts)),
        )


def pohozaev_sides(p, R: float, f: TestField, g: TestField, n_radial: int = 16,
                   n_angular: int = 64, n_boundary: int = 512) -> tuple[float, float]:
    """Volume and boundary sides of the bilinear Pohozaev identity on B_R(p).

    Volume: Gauss-Legendre in the radius times the trapezoid rule in the angle.
    Boundary: trapezoid rule with ``n_boundary`` nodes.
    """
    p = np.asarray(p, dtype=float)
    xg, wg = np.polynomial.legendre.leggauss(n_radial)
    rho = 0.5 * R * (xg + 1.0)
    wr = 0.5 * R * wg * rho
    th = 2 * np.pi * np.arange(n_angular) / n_angular
    dirs = np.column_stack([np.cos(th), np.sin(th)])
    pts = (p + rho[:, None, None] * dirs[None, :, :]).reshape(-1, 2)
    w = (wr[:, None] * np.full(n_angular, 2 * np.pi / n_angular)).ravel()
    xp = pts - p
    lhs = np.sum(w * (np.einsum("ij,ij->i", xp, f.grad(pts)) * g.laplacian(pts)
                      + f.laplacian(pts) * np.einsum("ij,ij->i", xp, g.grad(pts))))
    tb = 2 * np.pi * np.arange(n_boundary) / n_boundary
    nu = np.column_stack([np.cos(tb), np.sin(tb)])
    bp = p + R * nu
    gf, gg = f.grad(bp), g.grad(bp)
    dfn, dgn = np.einsum("ij,ij->i", gf, nu), np.einsum("ij,ij->i", gg, nu)
    rhs = R * np.sum(2 * dfn * dgn - np.einsum("ij,ij->i", gf, gg)) * (2 * np.pi * R / n_boundary)
    return float(lhs), float(rhs)


def pohozaev_residual(p, R: float, f: TestField, g: TestField, **kw) -> float:
    lhs, rhs = pohozaev_sides(p, R, f, g, **kw)
    return abs(lhs - rhs)


def pohozaev_ok(lhs: float, rhs: float, rel: float = 1e-8, floor: float = 1e-10) -> bool:
    return abs(lhs - rhs) <= max(rel * max(abs(lhs), abs(rhs)), floor)


def random_polynomial(rng, degree: int = 4) -> TestField:
    c = rng.normal(size=(degree + 1, degree + 1))
    i, j = np.indices(c.shape)
    c[i + j > degree] = 0.0
    return TestField.polynomial(c)


# -- I table ---------------------------------------------------------------


@dataclass
class ITableEntry:
    case: str
    alpha: int
    beta: int
    R: float
    integral: float
    closed_form: float

    @property
    def error(self) -> float:
        return abs(self.integral - self.closed_form)


def _same(a, b, scale) -> bool:
    return bool(np.hypot(*(a - b)) <= 1e-12 * scale)


def _check_geometry(ev, z1, z2, z3, R):
    diam = ev.diameter
    for z in (z1, z2, z3):
        if ev.domain.boundary_distance(z)[0] <= 2 * R:
            raise GeometryError(f"point {z} is within 2R of the boundary")
    distinct = [z1]
    for z in (z2, z3):
        if not any(_same(z, q, diam) for q in distinct):
            distinct.append(z)
    for i in range(len(distinct)):
        for j in range(i + 1, len(distinct)):
            if np.hypot(*(distinct[i] - distinct[j])) <= 2 * R:
                raise GeometryError("R must be below half the distance between distinct points")


def i_matrix(ev, z1, z2, z3, R: float, n: int = 1024) -> tuple[str, np.ndarray, np.ndarray]:
    """All four I_ab on the circle |x - z1| = R: (case, integrals, closed forms).

    The integrand is d_nu G_{x_a}(x, z2) G_{y_b}(x, z3) - G_{x_a}(x, z2) d_nu G_{y_b}(x, z3),
    integrated by the trapezoid rule with ``n`` nodes.
    """
    z1, z2, z3 = (np.asarray(z, dtype=float) for z in (z1, z2, z3))
    _check_geometry(ev, z1, z2, z3, R)
    total = np.zeros((2, 2))
    for t in 2 * np.pi * np.arange(n) / n:
        nu = np.array([np.cos(t), np.sin(t)])
        x = z1 + R * nu
        gx = ev.green_derivatives(x, z2, "grad_x")
        dn_gx = ev.green_derivatives(x, z2, "hess_xx") @ nu
        gy = ev.green_derivatives(x, z3, "grad_y")
        dn_gy = nu @ ev.green_derivatives(x, z3, "hess_xy")
        total += np.outer(dn_gx, gy) - np.outer(gx, dn_gy)
    integral = total * 2 * np.pi * R / n

    diam = ev.diameter
    s12, s13 = _same(z1, z2, diam), _same(z1, z3, diam)
    if s12 and s13:
        case, closed = "all-equal", 0.5 * ev.robin_hessian(z1)
    elif s12:
        case, closed = "z1=z2", ev.green_derivatives(z1, z3, "hess_xy")
    elif s13:
        case, closed = "z1=z3", ev.green_derivatives(z1, z2, "hess_xx")
    else:
        case, closed = "distinct", np.zeros((2, 2))
    return case, integral, np.asarray(closed)


def i_table(ev, z1, z2, z3, R: float, alpha: int, beta: int, n: int = 1024) -> ITableEntry:
    """I_{alpha beta}(z1, z2, z3) by quadrature next to its closed form (alpha, beta 1-based)."""
    if alpha not in (1, 2) or beta not in (1, 2):
        raise ValueError("alpha and beta must be 1 or 2")
    case, integral, closed = i_matrix(ev, z1, z2, z3, R, n)
    a, b = alpha - 1, beta - 1
    return ITableEntry(case, alpha, beta, R, float(integral[a, b]), float(closed[a, b]))


# -- sign preservation -------------------------------------------------------


@dataclass
class SignVerdict:
    signs_match: bool
    bounds_hold: bool
    eig_h: np.ndarray
    eig_dhd: np.ndarray

    @property
    def passed(self) -> bool:
        return self.signs_match and self.bounds_hold


def _signs(eigs, tol):
    return np.where(np.abs(eigs) <= tol, 0, np.sign(eigs)).astype(int)


def sign_check(H, D) -> SignVerdict:
    """Compare ascending eigenvalues of H and D H D (D diagonal, given as matrix or vector)."""
    H = np.asarray(H, dtype=float)
    d = np.asarray(D, dtype=float)
    d = np.diag(d) if d.ndim == 2 else d
    if np.any(d == 0):
        raise ZeroDiagonalError("D has a zero diagonal entry")
    if H.shape != (len(d), len(d)):
        raise ValueError("H and D sizes differ")
    H = 0.5 * (H + H.T)
    dhd = d[:, None] * H * d[None, :]
    lam = sla.eigvalsh(H)
    lam_t = sla.eigvalsh(dhd)
    tol_h = 1e-10 * max(np.linalg.norm(H, 2), 1e-300)
    tol_t = 1e-10 * max(np.linalg.norm(dhd, 2), 1e-300)
    match = bool(np.array_equal(_signs(lam, tol_h), _signs(lam_t, tol_t)))
    d2 = d * d
    lo, hi = d2.min(), d2.max()
    slack = 1e-10 * max(np.linalg.norm(dhd, 2), 1.0)
    low = np.where(lam >= 0, lam * lo, lam * hi)
    high = np.where(lam >= 0, lam * hi, lam * lo)
    bounds = bool(np.all(low - slack <= lam_t) and np.all(lam_t <= high + slack))
    return SignVerdict(match, bounds, lam, lam_t)


# -- suite -------------------------------------------------------------------


@dataclass
class SuiteResult:
    pohozaev_max_residual: float
    pohozaev_failures: int
    i_table: list
    i_table_max_error: float
    i_table_r_spread: float
    sign_failures: int
    sign_trials: int

    @property
    def passed(self) -> bool:
        return (self.pohozaev_failures == 0 and self.i_table_max_error <= 1e-4
                and self.i_table_r_spread <= 1e-4 and self.sign_failures == 0)

    def to_dict(self) -> dict:
        return {
            "pohozaev_max_residual": self.pohozaev_max_residual,
            "pohozaev_failures": self.pohozaev_failures,
            "i_table_max_error": self.i_table_max_error,
            "i_table_r_spread": self.i_table_r_spread,
            "sign_failures": self.sign_failures,
            "sign_trials": self.sign_trials,
            "passed": self.passed,
        }

    def to_csv(self, **head) -> str:
        rows = ((e.case, e.alpha, e.beta, e.R, e.integral, e.closed_form, e.error) for e in self.i_table)
        return gio.csv_text(gio.header(**head),
                            ["case", "alpha", "beta", "R", "integral", "closed_form", "error"], rows)


I_CASES = {
    "all-equal": ((0.1, -0.2), (0.1, -0.2), (0.1, -0.2)),
    "z1=z2": ((0.1, -0.2), (0.1, -0.2), (-0.3, 0.35)),
    "z1=z3": ((0.1, -0.2), (-0.3, 0.35), (0.1, -0.2)),
    "distinct": ((0.1, -0.2), (-0.3, 0.35), (0.45, 0.2)),
}


def run_suite(ev, seed: int = 0, n_pohozaev: int = 50, n_sign: int = 500,
              radii=(0.05, 0.1, 0.2), i_nodes: int = 1024) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst, fails = 0.0, 0
    for _ in range(n_pohozaev):
        f, g = random_polynomial(rng), random_polynomial(rng)
        p = rng.uniform(-1, 1, 2)
        R = rng.uniform(0.2, 1.5)
        lhs, rhs = pohozaev_sides(p, R, f, g)
        scale = max(abs(lhs), abs(rhs), 1e-2)
        worst = max(worst, abs(lhs - rhs) / scale)
        fails += not pohozaev_ok(lhs, rhs)
    entries = []
    spread = 0.0
    for z1, z2, z3 in I_CASES.values():
        mats = []
        for R in radii:
            case, integral, closed = i_matrix(ev, z1, z2, z3, R, n=i_nodes)
            mats.append(integral)
            entries += [ITableEntry(case, a + 1, b + 1, R, float(integral[a, b]), float(closed[a, b]))
                        for a in (0, 1) for b in (0, 1)]
        spread = max(spread, float(np.ptp(np.array(mats), axis=0).max()))
    sign_fail = 0
    for _ in range(n_sign):
        n = int(rng.integers(1, 9))
        a = rng.normal(size=(n, n))
        d = rng.uniform(0.1, 10.0, n) * rng.choice([-1.0, 1.0], n)
        sign_fail += not sign_check(a + a.T, d).passed
    return SuiteResult(worst, fails, entries, max(e.error for e in entries), spread, sign_fail, n_sign)
