import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from gelfand.io import read_csv
from gelfand.limit_problem import (
    MOMENTS,
    TruncationWarning,
    bubble_du,
    bubble_u,
    bubble_ubar,
    convolution,
    decay_checks,
    exp_u,
    grad_weight,
    group_eigenvalues,
    limit_eigenvalues,
    limit_modes,
    moment_integrals,
    moments_csv,
    radial_grid,
    sector_eigenvalues,
    spectrum_csv,
    weighted_inner,
)


@pytest.fixture(scope="module")
def modes():
    return limit_modes()


@pytest.fixture(scope="module")
def eigs():
    return limit_eigenvalues(2)


def test_profiles():
    r = np.array([0.0, 1.0, 5.0])
    assert bubble_u(r) == pytest.approx(-2 * np.log1p(r**2 / 8))
    assert exp_u(r) == pytest.approx(np.exp(bubble_u(r)))
    h = 1e-6
    assert bubble_du(r[1:]) == pytest.approx((bubble_u(r[1:] + h) - bubble_u(r[1:] - h)) / (2 * h), rel=1e-7)
    # Ubar = x.grad U + 2 is the dilation mode: 2 at the origin, -2 at infinity
    assert bubble_ubar(0.0) == pytest.approx(2.0)
    assert bubble_ubar(1e6) == pytest.approx(-2.0, abs=1e-9)


def test_radial_grid():
    r = radial_grid(1e3, 1000)
    assert r[0] == 0.0 and r[-1] == pytest.approx(1e3)
    assert len(r) >= 1000 and np.all(np.diff(r) > 0)
    with pytest.raises(ValueError):
        radial_grid(0.01)


def test_limit_eigenvalue_examples(eigs):
    groups = group_eigenvalues(eigs)
    (a0, m0), (a1, m1), (a3, m3) = groups
    assert abs(a0) <= 1e-3 and m0 == 1
    assert abs(a1 - 1) <= 1e-3 and m1 == 3
    assert abs(a3 - 3) <= 1e-2 and m3 == 5
    sectors = sorted((round(e.alpha), e.sector) for e in eigs)
    assert (1, 0) in sectors and (1, 1) in sectors and (3, 2) in sectors


def test_truncation_stability():
    a = sector_eigenvalues(1, 2, R_T=1e3)
    b = sector_eigenvalues(1, 2, R_T=2e3)
    assert np.abs(a - b).max() <= 1e-3


def test_limit_eigenvalue_errors():
    with pytest.raises(ValueError):
        limit_eigenvalues(1, R_T=50)
    with pytest.raises(ValueError):
        limit_eigenvalues(1, n_nodes=100)


def test_truncation_warning_quiet_at_default():
    with warnings.catch_warnings():
        warnings.simplefilter("error", TruncationWarning)
        limit_eigenvalues(1)


def test_modes_structure(modes):
    zero = [m for m in modes if abs(m.alpha) < 0.5]
    one = [m for m in modes if abs(m.alpha - 1) < 0.5]
    assert len(zero) == 1 and len(one) == 3
    z = zero[0]
    assert np.ptp(z.profile) <= 1e-6
    a, b, c = z.decomposition
    assert np.all(a == 0) and abs(b) <= 1e-6 and c == pytest.approx(1.0, abs=1e-6)
    for m in one:
        a, b, c = m.decomposition
        assert abs(c) <= 1e-3
        assert np.linalg.norm(a) + abs(b) > 0.1
        assert np.abs(m.profile).max() == pytest.approx(1.0)
    dil = [m for m in one if m.sector == 0][0]
    # the dilation mode is Ubar up to scale
    assert np.abs(dil.profile - dil.decomposition[1] * bubble_ubar(dil.r)).max() <= 1e-2


def test_modes_orthogonal(modes):
    for i, p in enumerate(modes):
        for q in modes[i + 1:]:
            denom = np.sqrt(weighted_inner(p, p) * weighted_inner(q, q))
            assert abs(weighted_inner(p, q)) <= 1e-6 * denom


def test_moment_examples():
    rows = {r.name: r for r in moment_integrals()}
    assert len(rows) == len(MOMENTS) == 15
    assert rows["e^U"].value == pytest.approx(8 * np.pi, rel=1e-8)
    assert rows["e^U U^2"].value == pytest.approx(64 * np.pi, rel=1e-8)
    assert rows["e^U Ubar^2"].value == pytest.approx(32 * np.pi / 3, rel=1e-8)
    assert rows["e^U U_1 U_1"].value == pytest.approx(4 * np.pi / 3, rel=1e-8)
    assert abs(rows["e^U U_1"].value) <= 1e-10
    assert abs(rows["e^U Ubar"].value) <= 1e-10


def test_moments_stable_under_doubling():
    a = moment_integrals(512)
    b = moment_integrals(1024)
    for x, y in zip(a, b):
        assert abs(x.value - y.value) <= 1e-10 * max(1.0, abs(y.value))


def test_moments_against_scipy_quad():
    rows = {r.name: r for r in moment_integrals()}
    for name, f, ang in (("e^U U", bubble_u, 2 * np.pi), ("e^U U Ubar", lambda r: bubble_u(r) * bubble_ubar(r), 2 * np.pi)):
        ref = ang * integrate.quad(lambda r: exp_u(r) * f(r) * r, 0, np.inf, limit=200)[0]
        assert rows[name].value == pytest.approx(ref, rel=1e-8)


def test_moments_csv(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text(moments_csv(moment_integrals(), command="integrals"))
    _, rows = read_csv(path)
    assert list(rows[0]) == ["name", "value", "reference", "rel_error"]
    first = rows[0]
    assert first["name"] == "e^U" and first["reference"] == "8π"
    assert first["value"] == f"{8 * np.pi:.8f}"
    assert first["rel_error"] == "<1e-8"


def test_spectrum_csv(eigs, tmp_path):
    path = tmp_path / "s.csv"
    path.write_text(spectrum_csv(eigs, command="limit-spectrum"))
    _, rows = read_csv(path)
    assert list(rows[0]) == ["alpha", "multiplicity", "sector"]
    assert sum(int(r["multiplicity"]) for r in rows) == 9


def test_gradient_weight():
    assert grad_weight(0.0) == 0.0
    rep = decay_checks(16)
    r_star = 8 + 6 * np.sqrt(2)
    assert rep.gradient_argmax == pytest.approx(r_star, rel=1e-6)
    assert rep.gradient_sup == pytest.approx(grad_weight(r_star), rel=1e-12)
    assert rep.gradient_sup == pytest.approx(4.1213, abs=1e-4)
    assert grad_weight(1e6) == pytest.approx(4.0, rel=1e-5)


def _conv_oracle(a):
    # polar coordinates around x absorb the 1/|x-y| singularity
    def f(s, phi):
        y2 = a * a + 2 * a * s * np.cos(phi) + s * s
        return (1 + y2 / 8) ** -2

    return integrate.dblquad(f, 0, 2 * np.pi, 0, np.inf, epsabs=1e-11, epsrel=1e-9)[0]


@pytest.mark.parametrize("a", [0.0, 0.1, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 30.0, 100.0])
def test_convolution_vs_2d_quadrature(a):
    assert convolution(a) == pytest.approx(_conv_oracle(a), rel=1e-6)


def test_convolution_sup_stable_under_doubling():
    a = decay_checks(32)
    b = decay_checks(64)
    assert np.isfinite(a.convolution_sup)
    assert b.convolution_sup == pytest.approx(a.convolution_sup, rel=0.05)
    assert np.all(np.isfinite(b.convolution_weighted))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 1e3))
def test_convolution_weighted_bounded(a):
    # far field behaves like 8 pi / a
    assert (1 + a) * convolution(a) <= 40.0
