"""Point-vortex dynamics dx_i/dt = J grad_{x_i} H, J the rotation by +pi/2.

Unit intensities throughout. Passing ``orientation=-1`` flips J, which is the
same as running time backwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import io as gio
from .errors import ClearanceViolationError, CollisionError, DomainError
from .hamiltonian import Configuration, h_grad, h_hess, h_value

MAX_HALVINGS = 10


@dataclass(frozen=True)
class VortexState:
    configuration: Configuration
    time: float
    energy: float

    @classmethod
    def start(cls, ev, points, time: float = 0.0) -> "VortexState":
        c = points if isinstance(points, Configuration) else Configuration(points)
        return cls(c, time, h_value(ev, c))


def rotate(v: np.ndarray, orientation: int = 1) -> np.ndarray:
    """Apply J (a, b) -> (-b, a) to each consecutive pair of a flat vector."""
    w = v.reshape(-1, 2)
    return (orientation * np.column_stack([-w[:, 1], w[:, 0]])).ravel()


def velocity(ev, z, orientation: int = 1) -> np.ndarray:
    return rotate(h_grad(ev, Configuration.from_flat(z)), orientation)


def _rk4(ev, z, dt, orientation):
    k1 = velocity(ev, z, orientation)
    k2 = velocity(ev, z + 0.5 * dt * k1, orientation)
    k3 = velocity(ev, z + 0.5 * dt * k2, orientation)
    k4 = velocity(ev, z + dt * k3, orientation)
    return z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _advance(ev, z, dt, orientation, clearance):
    z_new = _rk4(ev, z, dt, orientation)
    c = Configuration.from_flat(z_new)
    c.check(ev.domain)
    diam = ev.diameter
    if np.min(ev.domain.boundary_distance(c.points)) <= clearance * diam:
        raise ClearanceViolationError("vortex too close to the boundary")
    if c.min_separation() <= clearance * diam:
        raise ClearanceViolationError("vortices too close to each other")
    return z_new


def step(ev, s: VortexState, dt: float, orientation: int = 1,
         clearance: float = 1e-6) -> VortexState:
    """One RK4 step of length dt; on a clearance failure retry as 2^k substeps, k <= 10."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    z0 = s.configuration.flat
    for k in range(MAX_HALVINGS + 1):
        n_sub = 2**k
        z = z0
        try:
            for _ in range(n_sub):
                z = _advance(ev, z, dt / n_sub, orientation, clearance)
        except (ClearanceViolationError, CollisionError, DomainError):
            continue
        c = Configuration.from_flat(z)
        return VortexState(c, s.time + dt, h_value(ev, c))
    raise ClearanceViolationError(f"step rejected after {MAX_HALVINGS} halvings at t={s.time}")


def integrate(ev, s: VortexState, dt: float, n_steps: int, orientation: int = 1,
              record_every: int = 1) -> list[VortexState]:
    """Trajectory of ``n_steps`` steps; the start and every ``record_every``-th state are kept."""
    out = [s]
    for i in range(1, n_steps + 1):
        s = step(ev, s, dt, orientation)
        if i % record_every == 0 or i == n_steps:
            out.append(s)
    return out


def energy_drift(traj: list[VortexState]) -> float:
    """max |H(t) - H(0)| relative to |H(0)|, absolute when H(0) = 0."""
    e = np.array([st.energy for st in traj])
    scale = abs(e[0]) if e[0] != 0 else 1.0
    return float(np.abs(e - e[0]).max() / scale)


def trajectory_csv(traj: list[VortexState], **head) -> str:
    m = traj[0].configuration.m
    cols = ["t"] + [f"{a}{i + 1}" for i in range(m) for a in ("x", "y")] + ["energy"]
    rows = ([st.time, *st.configuration.flat.tolist(), st.energy] for st in traj)
    return gio.csv_text(gio.header(**head), cols, rows)


@dataclass
class EquilibriumVerdict:
    equilibrium: bool
    field_norm: float
    rates: np.ndarray
    hessian_definite: bool
    purely_imaginary: bool

    def to_dict(self) -> dict:
        return {
            "equilibrium": self.equilibrium,
            "field_norm": self.field_norm,
            "rates_real": self.rates.real.tolist(),
            "rates_imag": self.rates.imag.tolist(),
            "hessian_definite": self.hessian_definite,
            "purely_imaginary": self.purely_imaginary,
        }


def equilibrium_link(ev, critical, tol: float = 1e-8) -> EquilibriumVerdict:
    """Check that a critical point of H is a rest state and linearize the flow there."""
    c = critical if isinstance(critical, Configuration) else Configuration(critical)
    field = velocity(ev, c.flat)
    hess = h_hess(ev, c)
    m = c.m
    jmat = np.kron(np.eye(m), np.array([[0.0, -1.0], [1.0, 0.0]]))
    rates = sla.eigvals(jmat @ hess)
    rates = rates[np.lexsort((rates.imag, rates.real))]
    eigs = sla.eigvalsh(hess)
    definite = bool(np.all(eigs > 0) or np.all(eigs < 0))
    scale = max(float(np.abs(rates).max()), 1e-300)
    imag = bool(np.all(np.abs(rates.real) <= 1e-9 * scale))
    norm = float(np.abs(field).max())
    return EquilibriumVerdict(norm <= tol, norm, rates, definite, imag)
