"""Independent reference values for the tests.

The radial disk solutions of -Delta u = lam e^u are known in closed form:
u = log(8 d^2 / (lam (d^2 + r^2)^2)) with lam = 8 d^2 / (1 + d^2)^2. Their
linearized eigenproblem -Delta v = mu lam e^u v is conformally the Laplacian
on a spherical cap, so mu = nu (nu + 1) / 2 where P_nu^l(cos theta0) = 0 and
theta0 = 2 arctan(1/d). The table below was produced by ``cap_eigenvalues``
(mpmath, 30 digits) and is frozen here.
"""

from __future__ import annotations

import numpy as np

# s, lam, mu1, mu2 (= mu3), mu4
CAP_TABLE = [
    (8.0, 0.143841, 0.150834, 1.051416, 1.611569),
    (10.0, 0.0535404, 0.117633, 1.019488, 1.456730),
    (12.0, 0.0197809, 0.0960596, 1.0073019, 1.360184),
    (14.0, 0.00728840, 0.0810071, 1.0027125, 1.295362),
    (14.5, 0.00567736, 0.0779357, 1.0021157, 1.282437),
    (15.0, 0.00442223, 0.0750834, 1.0016498, 1.270533),
    (15.5, 0.00344446, 0.0724280, 1.0012862, 1.259540),
    (16.0, 0.00268280, 0.0699502, 1.0010026, 1.249361),
    (18.0, 0.000987157, 0.0615055, 1.0003696, 1.215273),
]


def cap_row(s: float):
    for row in CAP_TABLE:
        if row[0] == s:
            return row
    raise KeyError(s)


def radial_delta2(s: float) -> float:
    """delta^2 of the exact solution with u(0) = s (s > 0)."""
    return 1.0 / np.expm1(s / 2.0)


def radial_lambda_from_delta2(d2: float) -> float:
    return 8.0 * d2 / (1.0 + d2) ** 2


def radial_lambda(s: float) -> float:
    return radial_lambda_from_delta2(radial_delta2(s))


def radial_solution(points, d2: float) -> np.ndarray:
    lam = radial_lambda_from_delta2(d2)
    r2 = np.einsum("ij,ij->i", points, points)
    return np.log(8.0 * d2 / (lam * (d2 + r2) ** 2))


MINIMAL_DELTA2_AT_LAMBDA_1 = 3.0 + 2.0 * np.sqrt(2.0)
MINIMAL_PEAK_AT_LAMBDA_1 = float(np.log(8.0 / MINIMAL_DELTA2_AT_LAMBDA_1))  # 0.3169
FOLD_LAMBDA = 2.0
FOLD_PEAK = float(np.log(4.0))


def cap_eigenvalues(s: float, digits: int = 30):
    """(lam, mu1, mu2, mu4) of the radial solution with peak s via Legendre zeros.

    Root guesses suit s in roughly [12, 18].
    """
    import mpmath as mp

    mp.mp.dps = digits
    d2 = 1 / (mp.e ** (mp.mpf(s) / 2) - 1)
    lam = 8 * d2 / (1 + d2) ** 2
    x0 = mp.cos(2 * mp.atan(1 / mp.sqrt(d2)))
    mus = []
    for ell, guess in ((0, 0.35), (1, 1.0), (0, 1.4)):
        nu = mp.findroot(lambda v: mp.legenp(v, ell, x0, type=2), guess)
        mus.append(nu * (nu + 1) / 2)
    return float(lam), float(mus[0]), float(mus[1]), float(mus[2])


def central_gradient(f, z, h=1e-6):
    z = np.asarray(z, dtype=float)
    g = np.zeros_like(z)
    for i in range(len(z)):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2 * h)
    return g


def central_jacobian(f, z, h=1e-6):
    z = np.asarray(z, dtype=float)
    cols = []
    for i in range(len(z)):
        e = np.zeros_like(z)
        e[i] = h
        cols.append((np.asarray(f(z + e)) - np.asarray(f(z - e))) / (2 * h))
    return np.array(cols).T


def rel_err(a, b, floor=1e-12):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), floor))
