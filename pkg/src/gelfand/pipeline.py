"""End-to-end runs: critical point -> blow-up branch -> spectra -> verdicts."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .domain_green import Domain, GreenEvaluator
from .errors import ConvergenceError
from .fem.mesh import Mesh, graded_disk_mesh
from .fem.solver import BranchPoint, continue_branch
from .hamiltonian import HamiltonianReport, find_critical, report, sample_seeds, worker_count
from .spectrum import SpectrumReport, Theorem2Result, index_inequalities, linearized_spectrum, verify_theorem2


def radial_core(s: float) -> float:
    """Length scale delta of the exact radial disk solution with peak height s."""
    return 1.0 / np.sqrt(np.expm1(s / 2.0))


def disk_branch_mesh(s_max: float, grading: float = 0.02) -> Mesh:
    """Ring mesh graded to resolve the bubble at the deepest requested peak height."""
    return graded_disk_mesh(radial_core(s_max), grading)


@dataclass
class BranchRun:
    mesh: Mesh
    evaluator: GreenEvaluator
    hreport: HamiltonianReport
    branch: list[BranchPoint]
    spectra: list[SpectrumReport] | None = None


def critical_point(ev: GreenEvaluator, m: int, n_seeds: int = 20, seed: int = 0) -> HamiltonianReport:
    """A critical point of H^m: the centre for m = 1 on the disk, else a seeded search."""
    if ev.domain.is_disk and m == 1:
        return report(ev, [[0.0, 0.0]])
    found = find_critical(ev, sample_seeds(ev.domain, m, n_seeds, seed))
    if not found:
        raise ConvergenceError(f"no critical point of H^{m} found from {n_seeds} seeds")
    found.sort(key=lambda cr: cr[1].value)
    return found[0][1]


def blowup_branch(domain: Domain, m: int, s_values, grading: float = 0.02,
                  mesh: Mesh | None = None, n_seeds: int = 20, seed: int = 0,
                  evaluator: GreenEvaluator | None = None) -> BranchRun:
    s_values = sorted(float(s) for s in s_values)
    ev = evaluator or GreenEvaluator(domain)
    if mesh is None:
        mesh = domain.mesh if not domain.is_disk else disk_branch_mesh(s_values[-1], grading)
    hrep = critical_point(ev, m, n_seeds, seed)
    branch = continue_branch(mesh, s_values, ev=ev, points=hrep.points, d=hrep.d)
    return BranchRun(mesh, ev, hrep, branch)


def branch_spectra(run: BranchRun, K: int | None = None) -> list[SpectrumReport]:
    K = K or 3 * run.hreport.m + 2

    def one(bp):
        return linearized_spectrum(run.mesh, bp.solution, K)

    workers = min(worker_count(), len(run.branch))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            run.spectra = list(pool.map(one, run.branch))
    else:
        run.spectra = [one(bp) for bp in run.branch]
    return run.spectra


def theorem1(run: BranchRun, deepest: int = 3) -> dict:
    """Index verdicts at the deepest samples plus the universal bounds at every sample."""
    m = run.hreport.m
    per = [index_inequalities(r, run.hreport, m) for r in run.spectra]
    deep = per[-deepest:]
    return {
        "samples": [{"s": bp.s, "lambda": bp.lam, **v} for bp, v in zip(run.branch, per)],
        "lower": all(v["lower_bound"] for v in deep),
        "upper": all(v["upper_bound"] for v in deep),
        "universal_bounds": all(v["universal_bounds"] for v in per),
        "morse_index": deep[-1]["morse_index"],
        "expected": m + run.hreport.neg_morse_index,
    }


def theorem2(run: BranchRun, deepest: int = 3) -> Theorem2Result:
    return verify_theorem2(run.branch, run.spectra, run.hreport.eta, run.hreport.m, samples=deepest)


def bubble_scale(solution, center, s: float, t_max: float = 4.0) -> float:
    """Fit delta in u = s - 2 log(1 + |x - center|^2 / (8 delta^2)) near the peak.

    With t = exp((s - u)/2) - 1 the profile is t = r^2 / (8 delta^2); vertices
    with 0 < t <= t_max enter a least-squares fit through the origin.
    """
    x = solution.mesh.vertices - np.asarray(center, dtype=float)
    r2 = np.einsum("ij,ij->i", x, x)
    t = np.expm1((s - solution.u) / 2.0)
    mask = (t > 0) & (t <= t_max) & (r2 > 0)
    if mask.sum() < 3:
        raise ValueError("too few vertices inside the bubble core to fit its scale")
    c = float(np.sum(t[mask] * r2[mask]) / np.sum(r2[mask] ** 2))
    return float(np.sqrt(1.0 / (8.0 * c)))
