"""Newton solver and peak-height continuation for -Delta u = lam e^u, u = 0 on the boundary."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import (
    AnsatzFailureError,
    ConvergenceError,
    NewtonDivergenceError,
    SingularJacobianError,
)
from .. import io as gio
from .assembly import exp_integral, exp_terms, stiffness
from .mesh import Mesh

log = logging.getLogger(__name__)


@dataclass
class DiscreteSolution:
    mesh: Mesh
    lam: float
    u: np.ndarray
    residual: float = np.nan
    iterations: int = 0
    peaks: list = field(default_factory=list)
    mass: float = np.nan

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if not self.peaks:
            self.peaks = find_peaks(self.mesh, self.u)
        if np.isnan(self.mass):
            self.mass = self.lam * exp_integral(self.mesh, self.u)

    @property
    def sup(self) -> float:
        return float(self.u.max())

    def to_csv(self, **head) -> str:
        x = self.mesh.vertices
        meta = gio.header(lam=self.lam, mass=self.mass,
                          peaks=[[int(i), float(v)] for i, v in self.peaks], **head)
        rows = ((i, x[i, 0], x[i, 1], self.u[i]) for i in range(self.mesh.n_vertices))
        return gio.csv_text(meta, ["vertex", "x", "y", "u"], rows)


@dataclass
class BranchPoint:
    solution: DiscreteSolution
    s: float
    fold: bool = False
    peak_vertex: int = -1

    @property
    def lam(self) -> float:
        return self.solution.lam

    @property
    def mass(self) -> float:
        return self.solution.mass


def find_peaks(mesh: Mesh, u, rel: float = 0.1) -> list[tuple[int, float]]:
    """Interior local maxima with value above ``rel`` times the global max, highest first."""
    u = np.asarray(u)
    top = u.max()
    if top <= 0:
        return []
    nb_max = np.full(len(u), -np.inf)
    e = mesh.edges
    np.maximum.at(nb_max, e[:, 0], u[e[:, 1]])
    np.maximum.at(nb_max, e[:, 1], u[e[:, 0]])
    idx = np.flatnonzero((u >= nb_max) & (u >= rel * top) & ~mesh.boundary)
    idx = idx[np.argsort(-u[idx], kind="stable")]
    return [(int(i), float(u[i])) for i in idx]


class _System:
    """Interior-restricted pieces of the discrete problem on one mesh."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.inner = mesh.interior
        self.k = stiffness(mesh).tocsr()[self.inner][:, self.inner].tocsc()

    def full(self, ui):
        u = np.zeros(self.mesh.n_vertices)
        u[self.inner] = ui
        return u

    def terms(self, ui):
        load, mass = exp_terms(self.mesh, self.full(ui))
        return load[self.inner], mass.tocsr()[self.inner][:, self.inner]

    def residual(self, ui, lam):
        f, _ = self.terms(ui)
        return self.k @ ui - lam * f


def _factor(a):
    try:
        lu = spla.splu(sp.csc_matrix(a))
    except RuntimeError as exc:
        raise SingularJacobianError(str(exc)) from exc
    return lu


def _check_step(step):
    if not np.all(np.isfinite(step)):
        raise SingularJacobianError("non-finite Newton step")


def solve_newton(mesh: Mesh, lam: float, u0=None, tol: float = 1e-10,
                 max_iter: int = 50) -> DiscreteSolution:
    """Newton iteration for fixed ``lam`` starting from ``u0`` (default zero)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    sysm = _System(mesh)
    ui = np.zeros(len(sysm.inner)) if u0 is None else np.asarray(u0, dtype=float)[sysm.inner].copy()
    best = np.inf
    growth = 0
    for it in range(max_iter + 1):
        f, m = sysm.terms(ui)
        res = sysm.k @ ui - lam * f
        rn = float(np.abs(res).max())
        if not np.isfinite(rn):
            raise NewtonDivergenceError("residual is not finite")
        if rn <= tol:
            return DiscreteSolution(mesh, lam, sysm.full(ui), rn, it)
        growth = growth + 1 if rn > best else 0
        best = min(best, rn)
        if growth >= 5:
            raise NewtonDivergenceError(f"residual grew for 5 steps (now {rn:.3g})")
        step = _factor(sysm.k - lam * m).solve(-res)
        _check_step(step)
        ui = ui + step
    raise NewtonDivergenceError(f"no convergence in {max_iter} iterations (residual {rn:.3g})")


def solve_augmented(sysm: _System, p_local: int, s: float, ui, lam: float,
                    tol: float = 1e-10, max_iter: int = 30):
    """Newton on (u, lam) with the extra equation u[p] = s.

    Returns (ui, lam, residual, iterations). A NaN or persistently growing
    residual raises NewtonDivergenceError.
    """
    n = len(ui)
    ep = sp.csr_matrix(([1.0], ([0], [p_local])), shape=(1, n))
    best = np.inf
    growth = 0
    ui = ui.copy()
    for it in range(max_iter + 1):
        f, m = sysm.terms(ui)
        res = sysm.k @ ui - lam * f
        g = ui[p_local] - s
        rn = max(float(np.abs(res).max()), abs(g))
        if not np.isfinite(rn):
            raise NewtonDivergenceError("residual is not finite")
        if rn <= tol:
            return ui, lam, rn, it
        growth = growth + 1 if rn > best else 0
        best = min(best, rn)
        if growth >= 5 or lam <= 0:
            raise NewtonDivergenceError(f"augmented Newton diverged (residual {rn:.3g})")
        jac = sp.bmat([[sysm.k - lam * m, -f[:, None]], [ep, None]], format="csc")
        step = _factor(jac).solve(-np.concatenate([res, [g]]))
        _check_step(step)
        ui = ui + step[:n]
        lam = lam + step[n]
    raise NewtonDivergenceError(f"augmented Newton: no convergence (residual {rn:.3g})")


def peak_vertex(mesh: Mesh, point) -> int:
    """Interior vertex nearest to ``point``."""
    inner = mesh.interior
    d = np.hypot(*(mesh.vertices[inner] - np.asarray(point, dtype=float)).T)
    return int(inner[np.argmin(d)])


def continue_branch(mesh: Mesh, s_values, *, ev=None, points=None, d=None,
                    initial: DiscreteSolution | None = None, tol: float = 1e-10,
                    max_iter: int = 30, max_halvings: int = 8) -> list[BranchPoint]:
    """Follow the solution branch parameterized by the peak height ``s``.

    The first point starts from ``initial`` if given, otherwise from the
    Liouville ansatz around ``points`` (needs ``ev`` and ``d``). Later points
    use a secant predictor in ``s``; a failed step is retried with the
    increment halved.
    """
    from .ansatz import liouville_ansatz

    s_values = [float(s) for s in s_values]
    if np.any(np.diff(s_values) <= 0):
        raise ValueError("s values must be increasing")
    sysm = _System(mesh)
    if points is None:
        if initial is None:
            raise ValueError("need either peak points or an initial solution")
        pv = initial.peaks[0][0] if initial.peaks else int(np.argmax(initial.u))
    else:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        pv = peak_vertex(mesh, points[0])
    p_local = int(np.searchsorted(sysm.inner, pv))

    s0 = s_values[0]
    if initial is not None:
        ui, lam = initial.u[sysm.inner].copy(), initial.lam
    else:
        if ev is None or d is None:
            raise ValueError("the ansatz needs an evaluator and d constants")
        lam = float(np.exp(-s0 / 2.0) / d[0])
        ui = liouville_ansatz(mesh, ev, points, d, lam)[sysm.inner]
    try:
        ui, lam, rn, its = solve_augmented(sysm, p_local, s0, ui, lam, tol, max_iter)
    except ConvergenceError as exc:
        if initial is None:
            raise AnsatzFailureError(f"first branch point did not converge: {exc}") from exc
        raise

    hist = [(s0, ui, lam)]
    out = [BranchPoint(DiscreteSolution(mesh, lam, sysm.full(ui), rn, its), s0, False, pv)]
    for target in s_values[1:]:
        s_cur = hist[-1][0]
        h = target - s_cur
        halvings = 0
        while s_cur < target - 1e-14:
            s_try = min(s_cur + h, target)
            if len(hist) >= 2:
                (sa, ua, la), (sb, ub, lb) = hist[-2], hist[-1]
                t = (s_try - sb) / (sb - sa)
                guess_u, guess_l = ub + t * (ub - ua), lb + t * (lb - la)
                if guess_l <= 0:
                    guess_l = lb * 0.5
            else:
                guess_u, guess_l = hist[-1][1], hist[-1][2]
            try:
                ui, lam, rn, its = solve_augmented(sysm, p_local, s_try, guess_u, guess_l, tol, max_iter)
            except ConvergenceError:
                halvings += 1
                if halvings > max_halvings:
                    raise
                h /= 2.0
                log.debug("continuation step halved to %g at s=%g", h, s_cur)
                continue
            hist.append((s_try, ui, lam))
            s_cur = s_try
        out.append(BranchPoint(DiscreteSolution(mesh, lam, sysm.full(ui), rn, its), target, False, pv))
    mark_folds(out)
    return out


def mark_folds(branch: list[BranchPoint]) -> None:
    """Flag points where d lam / d s changes sign (the flag sits on the extremal point)."""
    lams = np.array([b.lam for b in branch])
    dl = np.diff(lams)
    for i in range(1, len(branch) - 1):
        branch[i].fold = bool(dl[i - 1] * dl[i] < 0)


def locate_fold(branch: list[BranchPoint]) -> tuple[float, float]:
    """(s, lam) at the first fold, by a parabola through the flagged point and its neighbours."""
    for i, b in enumerate(branch):
        if b.fold:
            s = np.array([branch[i + k].s for k in (-1, 0, 1)])
            lam = np.array([branch[i + k].lam for k in (-1, 0, 1)])
            a2, a1, a0 = np.polyfit(s, lam, 2)
            s_star = -a1 / (2 * a2)
            return float(s_star), float(np.polyval([a2, a1, a0], s_star))
    raise ValueError("no fold flagged on this branch")


def branch_csv(branch: list[BranchPoint], **head) -> str:
    rows = ((b.s, b.lam, b.mass, b.solution.residual, int(b.fold)) for b in branch)
    return gio.csv_text(gio.header(**head), ["s", "lambda", "mass", "residual", "fold"], rows)
