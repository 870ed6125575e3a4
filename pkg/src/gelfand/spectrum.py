"""Weighted linearization -Delta v = mu lam e^u v around a discrete solution.

Eigenvalues below one count the Morse index of u. Along a blow-up branch the
lowest m eigenvalues decay like -1/(2 log lam), the next 2m approach one at a
rate set by the scaled Hessian of the Hamiltonian, and the rest stay above one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import io as gio
from .errors import (
    EigensolverBreakdownError,
    InsufficientSamplesError,
    KTooLargeError,
    MismatchedBranchError,
)
from .fem.assembly import exp_terms, stiffness
from .fem.solver import find_peaks

EQ_TOL = 1e-8


@dataclass
class SpectrumReport:
    lam: float
    mu: np.ndarray
    eigenvectors: np.ndarray  # (n_vertices, K), boundary rows zero
    morse_index: int
    augmented_index: int
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "mu": self.mu.tolist(),
                "morse_index": self.morse_index, "augmented_index": self.augmented_index}


def _normalize(v):
    i = np.argmax(np.abs(v))
    return v / v[i]


def linearized_spectrum(mesh, sol, K: int = 5, tol: float = 1e-12,
                        eq_tol: float = EQ_TOL) -> SpectrumReport:
    """Lowest K eigenpairs of (stiffness) v = mu (lam * weighted mass) v on interior vertices.

    Two shift-invert Lanczos runs (shifts 0 and 1) are merged by a
    Rayleigh-Ritz projection on the union of their vectors.
    """
    inner = mesh.interior
    n = len(inner)
    if K < 1 or K >= n - 1:
        raise KTooLargeError(f"K={K} needs at least K+2 interior vertices, have {n}")
    a = stiffness(mesh).tocsr()[inner][:, inner].tocsc()
    _, wm = exp_terms(mesh, sol.u)
    b = (sol.lam * wm.tocsr()[inner][:, inner]).tocsc()

    blocks = []
    for shift in (0.0, 1.0):
        try:
            lu = spla.splu((a - shift * b).tocsc())
            op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
            _, vecs = spla.eigsh(a, k=K, M=b, sigma=shift, OPinv=op, tol=tol,
                                 v0=np.ones(n))
        except (RuntimeError, spla.ArpackError, spla.ArpackNoConvergence) as exc:
            raise EigensolverBreakdownError(f"shift {shift}: {exc}") from exc
        blocks.append(vecs)
    basis = np.hstack(blocks)
    # b-orthonormal basis of the union, dropping near-dependent directions
    gram = basis.T @ (b @ basis)
    w, q = sla.eigh(gram)
    keep = w > 1e-10 * w.max()
    basis = basis @ (q[:, keep] / np.sqrt(w[keep]))
    mu, y = sla.eigh(basis.T @ (a @ basis), basis.T @ (b @ basis))
    if len(mu) < K:
        raise EigensolverBreakdownError("merged subspace is smaller than K")
    vi = basis @ y[:, :K]
    mu = mu[:K]
    res = np.array([np.linalg.norm(a @ vi[:, k] - mu[k] * (b @ vi[:, k])) / np.linalg.norm(vi[:, k])
                    for k in range(K)])
    vecs = np.zeros((mesh.n_vertices, K))
    for k in range(K):
        vecs[inner, k] = _normalize(vi[:, k])
    return SpectrumReport(
        lam=float(sol.lam), mu=mu, eigenvectors=vecs,
        morse_index=int(np.sum(mu < 1.0)),
        augmented_index=int(np.sum(mu <= 1.0 + eq_tol)),
        residuals=res)


@dataclass
class AsymptoticFit:
    """Samples of a scaled eigenvalue against its predicted limit.

    ``values`` holds mu^k (-2 log lam) for the inverse-log law and
    (1 - mu^k) / lam for the linear-in-lambda law.
    """

    k: int
    law: str
    coefficient: float
    residual: float
    target: float
    sample_lambdas: list
    values: list

    def relative_error(self) -> np.ndarray:
        return np.abs(np.asarray(self.values) - self.target) / abs(self.target)


@dataclass
class Theorem2Result:
    fits: list
    above_one: list  # mu^{3m+1} > 1 per sample

    def to_csv(self, **head) -> str:
        rows = ((f.k, f.law, f.coefficient, f.residual) for f in self.fits)
        return gio.csv_text(gio.header(**head), ["k", "law", "coefficient", "residual"], rows)


def _fit(k, law, lams, values, target):
    values = np.asarray(values, dtype=float)
    coef = float(values.mean())
    resid = float(np.max(np.abs(values - coef)) / abs(coef)) if coef else float("inf")
    return AsymptoticFit(k, law, coef, resid, float(target), list(map(float, lams)), values.tolist())


def verify_theorem2(branch, reports, eta, m: int = 1, max_lambda: float = 1e-2,
                    samples: int | None = None) -> Theorem2Result:
    """Scaled eigenvalue laws along a branch.

    Uses the branch points with lam <= max_lambda (the deepest ``samples``
    of them if given). ``eta`` are the ascending eigenvalues of the scaled
    Hessian at the matching critical point; mu^k for m < k <= 3m is paired
    with eta^{2m-(k-m)+1}.
    """
    eta = np.sort(np.asarray(eta, dtype=float))
    if len(eta) != 2 * m:
        raise MismatchedBranchError(f"expected {2 * m} eta values, got {len(eta)}")
    if len(branch) != len(reports):
        raise MismatchedBranchError("branch and reports differ in length")
    pairs = [(b, r) for b, r in zip(branch, reports) if b.lam <= max_lambda]
    pairs.sort(key=lambda br: -br[0].lam)
    if samples is not None:
        pairs = pairs[-samples:]
    if len(pairs) < 3:
        raise InsufficientSamplesError(f"need >= 3 samples with lambda <= {max_lambda}, have {len(pairs)}")
    for b, r in pairs:
        npk = len(find_peaks(b.solution.mesh, b.solution.u, rel=0.5))
        if npk != m:
            raise MismatchedBranchError(f"branch point at s={b.s} has {npk} peaks, expected {m}")
        if len(r.mu) < 3 * m + 1:
            raise MismatchedBranchError("spectrum reports need at least 3m+1 eigenvalues")
    lams = np.array([b.lam for b, _ in pairs])
    mus = np.array([r.mu for _, r in pairs])
    fits = []
    for k in range(1, m + 1):
        fits.append(_fit(k, "inverse-log", lams, mus[:, k - 1] * (-2.0 * np.log(lams)), 1.0))
    for k in range(m + 1, 3 * m + 1):
        e = eta[2 * m - (k - m)]  # 1-based index 2m-(k-m)+1
        fits.append(_fit(k, "linear-in-lambda", lams, (1.0 - mus[:, k - 1]) / lams, 48 * np.pi * e))
    above = [bool(mu[3 * m] > 1.0) for mu in mus]
    return Theorem2Result(fits, above)


def index_inequalities(report: SpectrumReport, hreport, m: int) -> dict:
    """Theorem 1 verdicts for one solution matched to one critical point."""
    ind, ind_star = report.morse_index, report.augmented_index
    lower = m + hreport.neg_morse_index <= ind
    upper = ind_star <= m + hreport.neg_augmented_morse_index
    bounds = m <= ind <= ind_star <= 3 * m
    out = {
        "morse_index": ind,
        "augmented_index": ind_star,
        "lower_bound": bool(lower),
        "upper_bound": bool(upper),
        "universal_bounds": bool(bounds),
        "nondegenerate": not hreport.degenerate,
        "equality": None,
    }
    if not hreport.degenerate:
        out["equality"] = bool(ind == m + hreport.neg_morse_index)
    out["passed"] = bool(lower and upper and bounds and out["equality"] is not False)
    return out
