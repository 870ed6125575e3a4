"""The whole-plane limit problem around the Liouville bubble.

U(x) = -2 log(1 + |x|^2/8) solves -Delta U = e^U on R^2. This module computes
the spectrum of -Delta V = alpha e^U V by Fourier sectors, decomposes the
alpha in {0, 1} modes into translations, dilation and constants, evaluates the
moment integrals of e^U against U, its derivatives and the dilation mode
Ubar = x . grad U + 2, and checks the decay bounds used for blow-up
estimates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate, optimize, special

from . import io as gio

SQRT8 = np.sqrt(8.0)
GAUSS4 = np.polynomial.legendre.leggauss(4)


class TruncationWarning(UserWarning):
    """The lowest eigenvalue moved noticeably when the truncation radius doubled."""


# -- radial profiles -----------------------------------------------------


def exp_u(r):
    return 1.0 / (1.0 + r * r / 8.0) ** 2


def bubble_u(r):
    return -2.0 * np.log1p(r * r / 8.0)


def bubble_du(r):
    """dU/dr; the Cartesian gradient is dU/dr times x/|x|."""
    return -(r / 2.0) / (1.0 + r * r / 8.0)


def bubble_ubar(r):
    return (2.0 - r * r / 4.0) / (1.0 + r * r / 8.0)


# -- radial eigenproblem -------------------------------------------------


def radial_grid(R_T: float = 1e3, n_nodes: int = 1000, r_uniform: float = 0.05,
                n_uniform: int = 10) -> np.ndarray:
    """Uniform near the origin, then geometric out to R_T."""
    if R_T <= r_uniform:
        raise ValueError("R_T must exceed the uniform core radius")
    n_geo = max(n_nodes - n_uniform, 50)
    core = np.linspace(0.0, r_uniform, n_uniform + 1)
    ratio = (R_T / r_uniform) ** (1.0 / n_geo)
    geo = r_uniform * ratio ** np.arange(1, n_geo + 1)
    geo[-1] = R_T
    return np.concatenate([core, geo])


def _radial_matrices(r, ell: int):
    """P1 matrices for int (V'W' + ell^2/r^2 VW) r dr and int e^U VW r dr."""
    xg, wg = GAUSS4
    h = np.diff(r)
    n = len(r)
    a_main, a_off = np.zeros(n), np.zeros(n - 1)
    b_main, b_off = np.zeros(n), np.zeros(n - 1)
    t = 0.5 * (xg + 1.0)
    w = 0.5 * wg
    rq = r[:-1, None] + h[:, None] * t  # (E, 4)
    phi0, phi1 = 1.0 - t, t
    jac = h[:, None] * w
    kin = (rq * jac).sum(axis=1) / h**2
    pot = ell**2 / rq * jac
    wt = exp_u(rq) * rq * jac
    a00 = kin + (pot * phi0 * phi0).sum(axis=1)
    a11 = kin + (pot * phi1 * phi1).sum(axis=1)
    a01 = -kin + (pot * phi0 * phi1).sum(axis=1)
    b00 = (wt * phi0 * phi0).sum(axis=1)
    b11 = (wt * phi1 * phi1).sum(axis=1)
    b01 = (wt * phi0 * phi1).sum(axis=1)
    a_main[:-1] += a00
    a_main[1:] += a11
    a_off += a01
    b_main[:-1] += b00
    b_main[1:] += b11
    b_off += b01
    # far field V' + (ell/R_T) V = 0 matches the harmonic tail r^{-ell}
    a_main[-1] += ell
    a = sp.diags([a_off, a_main, a_off], [-1, 0, 1], format="csc")
    b = sp.diags([b_off, b_main, b_off], [-1, 0, 1], format="csc")
    if ell > 0:  # V(0) = 0
        a, b = a[1:, 1:], b[1:, 1:]
    return a, b


def sector_eigenpairs(ell: int, n_eigs: int, r):
    """Lowest ``n_eigs`` eigenpairs of sector ``ell`` on grid ``r`` (profiles include r=0)."""
    a, b = _radial_matrices(r, ell)
    n = a.shape[0]
    if n <= 400:
        vals, vecs = sla.eigh(a.toarray(), b.toarray(), subset_by_index=[0, n_eigs - 1])
    else:
        vals, vecs = spla.eigsh(a, k=n_eigs, M=b, sigma=-0.5, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    if ell > 0:
        vecs = np.vstack([np.zeros((1, vecs.shape[1])), vecs])
    return vals, vecs


def _double(r):
    mid = 0.5 * (r[:-1] + r[1:])
    out = np.empty(2 * len(r) - 1)
    out[0::2], out[1::2] = r, mid
    return out


def sector_eigenvalues(ell: int, n_eigs: int, R_T: float = 1e3, n_nodes: int = 1000) -> np.ndarray:
    """Sector eigenvalues with one Richardson step on grid doubling (P1 error is O(h^2))."""
    r = radial_grid(R_T, n_nodes)
    coarse, _ = sector_eigenpairs(ell, n_eigs, r)
    fine, _ = sector_eigenpairs(ell, n_eigs, _double(r))
    return (4.0 * fine - coarse) / 3.0


@dataclass
class LimitEigenvalue:
    alpha: float
    multiplicity: int
    sector: int


def limit_eigenvalues(k_max: int = 2, R_T: float = 1e3, n_nodes: int = 1000,
                      check_truncation: bool = True) -> list[LimitEigenvalue]:
    """Eigenvalues up to alpha_{k_max} from sectors 0..k_max, sorted.

    Sector ``ell`` contains alpha_k for k >= ell; ell >= 1 carries the cos and
    sin copies, hence multiplicity 2.
    """
    if R_T < 1e2:
        raise ValueError("R_T must be at least 1e2")
    if n_nodes < 1000:
        raise ValueError("need at least 1000 grid nodes")
    out = []
    for ell in range(k_max + 1):
        vals = sector_eigenvalues(ell, k_max - ell + 1, R_T, n_nodes)
        for v in vals:
            out.append(LimitEigenvalue(float(v), 1 if ell == 0 else 2, ell))
    if check_truncation:
        lo = sector_eigenvalues(0, 2, R_T, n_nodes)[1]
        hi = sector_eigenvalues(0, 2, 2 * R_T, n_nodes)[1]
        if abs(hi - lo) > 1e-3:
            warnings.warn(f"lowest nonzero eigenvalue moved by {abs(hi - lo):.2e} when R_T doubled",
                          TruncationWarning, stacklevel=2)
    out.sort(key=lambda e: (round(e.alpha, 6), e.sector))
    return out


def group_eigenvalues(eigs, tol: float = 1e-2) -> list[tuple[float, int]]:
    """Merge eigenvalues closer than tol into (mean alpha, total multiplicity)."""
    groups: list[list] = []
    for e in sorted(eigs, key=lambda e: e.alpha):
        if groups and abs(e.alpha - groups[-1][0][-1]) <= tol:
            groups[-1][0].append(e.alpha)
            groups[-1][1] += e.multiplicity
        else:
            groups.append([[e.alpha], e.multiplicity])
    return [(float(np.mean(a)), m) for a, m in groups]


def spectrum_csv(eigs, **head) -> str:
    rows = ((e.alpha, e.multiplicity, e.sector) for e in eigs)
    return gio.csv_text(gio.header(**head), ["alpha", "multiplicity", "sector"], rows)


# -- modes ---------------------------------------------------------------


@dataclass
class LimitMode:
    alpha: float
    sector: int
    component: str  # "cos" or "sin" for sector >= 1, "" for sector 0
    r: np.ndarray
    profile: np.ndarray
    decomposition: tuple  # (a: 2-vector, b, c)


def _weighted_lsq(r, v, columns):
    """Least squares for v against columns, weighted by e^U r on the grid."""
    w = np.sqrt(exp_u(r) * np.gradient(r) * np.maximum(r, 1e-12))
    coef, *_ = np.linalg.lstsq(columns * w[:, None], v * w, rcond=None)
    return coef


def limit_modes(R_T: float = 1e3, n_nodes: int = 1000) -> list[LimitMode]:
    """The four modes with alpha in {0, 1}: constant, dilation, and two translations."""
    r = radial_grid(R_T, n_nodes)
    modes = []
    vals0, vecs0 = sector_eigenpairs(0, 2, r)
    for alpha, v in zip(vals0, vecs0.T):
        v = v / v[np.argmax(np.abs(v))]
        b, c = _weighted_lsq(r, v, np.column_stack([bubble_ubar(r), np.ones_like(r)]))
        modes.append(LimitMode(float(alpha), 0, "", r, v, (np.zeros(2), float(b), float(c))))
    vals1, vecs1 = sector_eigenpairs(1, 1, r)
    v = vecs1[:, 0] / vecs1[np.argmax(np.abs(vecs1[:, 0])), 0]
    (a,) = _weighted_lsq(r, v, bubble_du(r)[:, None])
    for comp, avec in (("cos", np.array([a, 0.0])), ("sin", np.array([0.0, a]))):
        modes.append(LimitMode(float(vals1[0]), 1, comp, r, v, (avec, 0.0, 0.0)))
    return modes


def weighted_inner(m1: LimitMode, m2: LimitMode) -> float:
    """int_{R^2} e^U V1 V2 dx for two modes on the same grid."""
    if m1.sector != m2.sector or m1.component != m2.component:
        return 0.0  # Fourier orthogonality
    ang = 2 * np.pi if m1.sector == 0 else np.pi
    _, b = _radial_matrices(m1.r, 0)  # Gauss-weighted P1 mass, the one the modes diagonalize
    return float(ang * (m1.profile @ (b @ m2.profile)))


# -- moment integrals ----------------------------------------------------


MOMENTS = [
    # name, reference label, reference value, radial integrand, angular factor
    ("e^U", "8π", 8 * np.pi, lambda r: 1.0, 2 * np.pi),
    ("e^U U", "-16π", -16 * np.pi, bubble_u, 2 * np.pi),
    ("e^U U_1", "0", 0.0, bubble_du, 0.0),
    ("e^U U_2", "0", 0.0, bubble_du, 0.0),
    ("e^U Ubar", "0", 0.0, bubble_ubar, 2 * np.pi),
    ("e^U U^2", "64π", 64 * np.pi, lambda r: bubble_u(r) ** 2, 2 * np.pi),
    ("e^U U U_1", "0", 0.0, lambda r: bubble_u(r) * bubble_du(r), 0.0),
    ("e^U U U_2", "0", 0.0, lambda r: bubble_u(r) * bubble_du(r), 0.0),
    ("e^U U Ubar", "16π", 16 * np.pi, lambda r: bubble_u(r) * bubble_ubar(r), 2 * np.pi),
    ("e^U U_1 U_1", "4π/3", 4 * np.pi / 3, lambda r: bubble_du(r) ** 2, np.pi),
    ("e^U U_1 U_2", "0", 0.0, lambda r: bubble_du(r) ** 2, 0.0),
    ("e^U U_2 U_2", "4π/3", 4 * np.pi / 3, lambda r: bubble_du(r) ** 2, np.pi),
    ("e^U U_1 Ubar", "0", 0.0, lambda r: bubble_du(r) * bubble_ubar(r), 0.0),
    ("e^U U_2 Ubar", "0", 0.0, lambda r: bubble_du(r) * bubble_ubar(r), 0.0),
    ("e^U Ubar^2", "32π/3", 32 * np.pi / 3, lambda r: bubble_ubar(r) ** 2, 2 * np.pi),
]


@dataclass
class MomentRow:
    name: str
    value: float
    reference_label: str
    reference: float

    @property
    def error(self) -> float:
        """Relative error, or absolute error for zero references."""
        if self.reference == 0.0:
            return abs(self.value)
        return abs(self.value - self.reference) / abs(self.reference)


def radial_quadrature(n_nodes: int = 512, panels: int = 16):
    """Nodes and weights on [0, inf) from r = sqrt(8) t / (1 - t), composite Gauss-Legendre in t.

    Panels are graded toward t = 1, where the logarithmic tails live.
    """
    per = max(n_nodes // panels, 2)
    xg, wg = np.polynomial.legendre.leggauss(per)
    edges = 1.0 - 0.5 ** np.linspace(0.0, 40.0, panels + 1)
    edges[-1] = 1.0
    t, w = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        t.append(lo + (hi - lo) * 0.5 * (xg + 1))
        w.append((hi - lo) * 0.5 * wg)
    t, w = np.concatenate(t), np.concatenate(w)
    r = SQRT8 * t / (1.0 - t)
    return r, w * SQRT8 / (1.0 - t) ** 2


def moment_integrals(n_nodes: int = 512) -> list[MomentRow]:
    """Moments of e^U against U, U_alpha and Ubar; angular parts are exact."""
    r, w = radial_quadrature(n_nodes)
    rows = []
    for name, label, ref, f, ang in MOMENTS:
        radial = float(np.sum(w * exp_u(r) * np.broadcast_to(f(r), r.shape) * r))
        rows.append(MomentRow(name, ang * radial, label, ref))
    return rows


def moments_csv(rows, **head) -> str:
    def err(x):
        return "<1e-8" if x < 1e-8 else f"{x:.2e}"

    body = ((row.name, f"{row.value:.8f}", row.reference_label, err(row.error)) for row in rows)
    return gio.csv_text(gio.header(**head), ["name", "value", "reference", "rel_error"], body)


# -- decay bounds --------------------------------------------------------


def grad_weight(r):
    """(1 + |x|) |grad U(x)|."""
    return (1.0 + r) * r / (2.0 * (1.0 + r * r / 8.0))


def convolution(a: float) -> float:
    """int_{R^2} |x - y|^{-1} (1 + |y|^2/8)^{-2} dy at |x| = a.

    The angular integral is 4/(a + rho) K(4 a rho / (a + rho)^2) with K the
    complete elliptic integral of the first kind (parameter convention).
    """
    def f(rho):
        s = a + rho
        # 1 - m = ((a - rho)/(a + rho))^2, formed without cancellation
        return rho * exp_u(rho) * 4.0 / s * special.ellipkm1(((a - rho) / s) ** 2)

    if a == 0.0:
        return float(integrate.quad(lambda rho: 2 * np.pi * exp_u(rho), 0, np.inf)[0])
    opts = dict(limit=200, epsabs=1e-13, epsrel=1e-10)
    return float(integrate.quad(f, 0, a, **opts)[0] + integrate.quad(f, a, np.inf, **opts)[0])


@dataclass
class DecayReport:
    radii: np.ndarray
    convolution_weighted: np.ndarray
    convolution_sup: float
    gradient_weighted: np.ndarray
    gradient_sup: float
    gradient_argmax: float


def decay_checks(sample_count: int = 64, r_max: float = 1e3) -> DecayReport:
    """Weighted suprema of the kernel convolution and of |grad U| over |x| in [0, r_max]."""
    radii = np.concatenate([[0.0], np.logspace(-2, np.log10(r_max), sample_count - 1)])
    conv = np.array([(1.0 + a) * convolution(a) for a in radii])
    grad = grad_weight(radii)
    res = optimize.minimize_scalar(lambda r: -grad_weight(r), bounds=(0.0, r_max),
                                   method="bounded", options={"xatol": 1e-12})
    gsup = max(float(-res.fun), float(grad.max()))
    return DecayReport(radii, conv, float(conv.max()), grad, gsup, float(res.x))
