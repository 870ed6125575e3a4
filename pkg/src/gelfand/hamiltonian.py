"""The m-point Hamiltonian built from the Robin and Green functions.

    H(x_1..x_m) = 1/2 sum_j R(x_j) + 1/2 sum_{j != h} G(x_j, x_h)

The second sum runs over ordered pairs, so each unordered pair enters with
coefficient one.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import pdist
from scipy.stats import qmc

from .domain_green import GreenEvaluator
from .errors import CollisionError, ConvergenceError, DomainError, GelfandError

log = logging.getLogger(__name__)

ZERO_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Configuration:
    """An ordered m-tuple of interior points."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if len(pts) == 0 or not np.all(np.isfinite(pts)):
            raise ValueError("configuration needs at least one finite point")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_flat(cls, z) -> "Configuration":
        return cls(np.asarray(z, dtype=float).reshape(-1, 2))

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def flat(self) -> np.ndarray:
        return self.points.ravel().copy()

    def min_separation(self) -> float:
        if self.m < 2:
            return np.inf
        return float(pdist(self.points).min())

    def check(self, domain) -> None:
        """Raise CollisionError unless points are distinct and clear of the boundary."""
        diam = domain.diameter
        if self.min_separation() <= 1e-8 * diam:
            raise CollisionError("configuration has (nearly) coincident points")
        if np.any(domain.boundary_distance(self.points) <= 1e-6 * diam):
            raise CollisionError("configuration touches or leaves the boundary")

    def permuted(self, perm) -> "Configuration":
        return Configuration(self.points[np.asarray(perm)])


def _cfg(c) -> Configuration:
    return c if isinstance(c, Configuration) else Configuration(c)


def h_value(ev: GreenEvaluator, c) -> float:
    c = _cfg(c)
    c.check(ev.domain)
    p = c.points
    val = 0.5 * sum(ev.robin(x) for x in p)
    for j in range(c.m):
        for h in range(j + 1, c.m):
            val += ev.green(p[j], p[h])
    return float(val)


def _disk_grad(p: np.ndarray) -> np.ndarray:
    """Closed-form gradient on the unit disk, vectorized over pairs."""
    g = -p / (2 * np.pi * (1.0 - np.einsum("ij,ij->i", p, p)))[:, None]
    x, y = p[:, None, :], p[None, :, :]
    d = x - y
    r2 = np.einsum("ijk,ijk->ij", d, d)
    yy = np.einsum("ijk,ijk->ij", y, y)
    q = 1.0 - 2.0 * np.einsum("ijk,ijk->ij", x, y) + np.einsum("ijk,ijk->ij", x, x) * yy
    np.fill_diagonal(r2, np.inf)
    pair = -d / (2 * np.pi * r2[..., None]) + (-2.0 * y + 2.0 * yy[..., None] * x) / (4 * np.pi * q[..., None])
    idx = np.arange(len(p))
    pair[idx, idx] = 0.0
    return (g + pair.sum(axis=1)).ravel()


def h_grad(ev: GreenEvaluator, c) -> np.ndarray:
    c = _cfg(c)
    c.check(ev.domain)
    p = c.points
    if ev.domain.is_disk:
        return _disk_grad(p)
    g = np.zeros((c.m, 2))
    for j in range(c.m):
        g[j] = 0.5 * ev.robin_gradient(p[j])
        for k in range(c.m):
            if k != j:
                g[j] += ev.green_derivatives(p[j], p[k], "grad_x")
    return g.ravel()


def h_hess(ev: GreenEvaluator, c) -> np.ndarray:
    c = _cfg(c)
    c.check(ev.domain)
    p, m = c.points, c.m
    hess = np.zeros((2 * m, 2 * m))
    for j in range(m):
        block = 0.5 * ev.robin_hessian(p[j])
        for k in range(m):
            if k != j:
                block = block + ev.green_derivatives(p[j], p[k], "hess_xx")
        hess[2 * j:2 * j + 2, 2 * j:2 * j + 2] = block
        for l in range(m):
            if l != j:
                hess[2 * j:2 * j + 2, 2 * l:2 * l + 2] = ev.green_derivatives(p[j], p[l], "hess_xy")
    # exact for the disk; removes discretization asymmetry on meshes
    return 0.5 * (hess + hess.T)


def d_constants(ev: GreenEvaluator, c) -> np.ndarray:
    """d_j = (1/8) exp(4 pi R(k_j) + 4 pi sum_{i != j} G(k_j, k_i))."""
    c = _cfg(c)
    c.check(ev.domain)
    p = c.points
    d = np.empty(c.m)
    for j in range(c.m):
        e = ev.robin(p[j]) + sum(ev.green(p[j], p[i]) for i in range(c.m) if i != j)
        d[j] = np.exp(4 * np.pi * e) / 8.0
    return d


def scaling_matrix(d) -> np.ndarray:
    """D = diag(d_1, d_1, ..., d_m, d_m)."""
    return np.diag(np.repeat(np.asarray(d, dtype=float), 2))


def count_indices(eigs, tol: float = ZERO_TOL) -> dict:
    """Morse and augmented Morse indices of a symmetric matrix and of its negative."""
    eigs = np.asarray(eigs)
    return {
        "morse_index": int(np.sum(eigs < -tol)),
        "augmented_morse_index": int(np.sum(eigs <= tol)),
        "neg_morse_index": int(np.sum(eigs > tol)),
        "neg_augmented_morse_index": int(np.sum(eigs >= -tol)),
    }


@dataclass
class HamiltonianReport:
    points: np.ndarray
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    d: np.ndarray
    scaled_hessian: np.ndarray
    eta: np.ndarray
    hess_eigs: np.ndarray
    morse_index: int
    augmented_morse_index: int
    neg_morse_index: int
    neg_augmented_morse_index: int
    degenerate: bool

    @property
    def m(self) -> int:
        return len(self.d)

    @property
    def gradient_norm(self) -> float:
        return float(np.abs(self.gradient).max())

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "value": self.value,
            "gradient_norm": self.gradient_norm,
            "hessian": self.hessian.tolist(),
            "d": self.d.tolist(),
            "eta": self.eta.tolist(),
            "morse_index": self.morse_index,
            "augmented_morse_index": self.augmented_morse_index,
            "neg_morse_index": self.neg_morse_index,
            "neg_augmented_morse_index": self.neg_augmented_morse_index,
            "degenerate": self.degenerate,
        }


def report(ev: GreenEvaluator, c, zero_tol: float = ZERO_TOL) -> HamiltonianReport:
    c = _cfg(c)
    hess = h_hess(ev, c)
    d = d_constants(ev, c)
    dm = scaling_matrix(d)
    scaled = dm @ hess @ dm
    eta = np.sort(sla.eigvalsh(scaled))
    lam = np.sort(sla.eigvalsh(hess))
    tol = zero_tol * max(1.0, float(np.abs(lam).max()))
    idx = count_indices(lam, tol)
    return HamiltonianReport(
        points=c.points.copy(), value=h_value(ev, c), gradient=h_grad(ev, c),
        hessian=hess, d=d, scaled_hessian=scaled, eta=eta, hess_eigs=lam,
        degenerate=bool(np.any(np.abs(lam) <= tol)), **idx)


# -- critical points -----------------------------------------------------


@dataclass
class SearchOptions:
    max_iter: int = 100
    tol: float = 1e-10
    step_cap: float = 0.1  # in units of the domain diameter
    max_backtracks: int = 40
    merge_tol: float = 1e-6  # in units of the domain diameter


@dataclass
class SeedFailure:
    seed: np.ndarray
    reason: str


def newton_critical(ev: GreenEvaluator, seed, opts: SearchOptions | None = None) -> Configuration:
    """Damped Newton on grad H with backtracking on |grad H|^2."""
    opts = opts or SearchOptions()
    c = _cfg(seed)
    diam = ev.diameter
    g = h_grad(ev, c)
    for _ in range(opts.max_iter):
        if np.abs(g).max() <= opts.tol:
            return c
        hess = h_hess(ev, c)
        try:
            step = sla.solve(hess, -g, assume_a="sym")
            if not np.all(np.isfinite(step)):
                raise sla.LinAlgError("non-finite step")
        except (sla.LinAlgError, ValueError):
            step = sla.lstsq(hess, -g)[0]
        norm = np.abs(step.reshape(-1, 2)).max()
        if norm > opts.step_cap * diam:
            step *= opts.step_cap * diam / norm
        f0 = g @ g
        t = 1.0
        for _ in range(opts.max_backtracks):
            trial = Configuration.from_flat(c.flat + t * step)
            try:
                g_new = h_grad(ev, trial)
            except (CollisionError, DomainError):
                t *= 0.5
                continue
            if g_new @ g_new <= (1.0 - 1e-4 * t) * f0:
                break
            t *= 0.5
        else:
            if trial.m > 1 and trial.min_separation() < 1e-3 * diam:
                raise CollisionError("Newton drives points together")
            raise ConvergenceError("line search failed")
        c, g = trial, g_new
    if np.abs(g).max() <= opts.tol:
        return c
    raise ConvergenceError(f"no convergence in {opts.max_iter} iterations (|grad| {np.abs(g).max():.3g})")


def sample_seeds(domain, m: int, n: int, seed: int = 0, clearance: float = 0.05) -> list[Configuration]:
    """Low-discrepancy interior m-point configurations with the given relative clearance."""
    diam = domain.diameter
    if domain.is_disk:
        lo, hi = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
    else:
        v = domain.mesh.vertices
        lo, hi = v.min(axis=0), v.max(axis=0)
    sampler = qmc.Halton(d=2 * m, scramble=True, seed=seed)
    out: list[Configuration] = []
    for _ in range(200):
        batch = sampler.random(max(4 * n, 16))
        for row in batch:
            pts = lo + row.reshape(m, 2) * (hi - lo)
            if np.any(domain.boundary_distance(pts) <= clearance * diam):
                continue
            c = Configuration(pts)
            if c.min_separation() <= clearance * diam:
                continue
            out.append(c)
            if len(out) == n:
                return out
    return out


def same_configuration(a: Configuration, b: Configuration, tol: float) -> bool:
    """Equality up to relabeling, with max point distance at most tol."""
    if a.m != b.m:
        return False
    diff = a.points[:, None, :] - b.points[None, :, :]
    cost = np.hypot(diff[..., 0], diff[..., 1])
    rows, cols = linear_sum_assignment(cost)
    return bool(cost[rows, cols].max() <= tol)


def worker_count() -> int:
    try:
        n = int(os.environ.get("GELFAND_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def find_critical(ev: GreenEvaluator, seeds, opts: SearchOptions | None = None,
                  failures: list | None = None) -> list[tuple[Configuration, HamiltonianReport]]:
    """Run Newton from every seed and merge results equal up to permutation.

    Seeds that fail are skipped; if ``failures`` is a list, a SeedFailure is
    appended for each of them.
    """
    opts = opts or SearchOptions()
    seeds = [_cfg(s) for s in seeds]

    def run(seed):
        try:
            seed.check(ev.domain)
            return newton_critical(ev, seed, opts), None
        except GelfandError as exc:
            return None, SeedFailure(seed.flat, f"{type(exc).__name__}: {exc}")

    workers = min(worker_count(), max(1, len(seeds)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]

    found: list[Configuration] = []
    tol = opts.merge_tol * ev.diameter
    for crit, fail in results:
        if fail is not None:
            log.debug("seed rejected: %s", fail.reason)
            if failures is not None:
                failures.append(fail)
            continue
        if not any(same_configuration(crit, f, tol) for f in found):
            found.append(crit)
    return [(c, report(ev, c)) for c in found]
