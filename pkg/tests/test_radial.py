import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppoisson.exponents import validate_context
from ppoisson.profiles import PowerLawAffine, Sampled
from ppoisson.quadrature import QuadratureConfig, QuadratureError
from ppoisson.radial import (
    ResidualWindowError,
    cumulative_source,
    flux,
    p_laplacian_residual,
    phi,
    phi_inverse,
    power_source_solution,
    solve_radial,
)
from ppoisson.sharpness import build_example

MID = np.geomspace(0.01, 0.99, 60)


def test_phi_examples():
    assert phi(2.0, 3) == 4.0
    assert phi_inverse(4.0, 3) == pytest.approx(2.0, rel=1e-15)
    assert phi(-2.0, 3) == -4.0
    for t in (-1.0, 0.0, 7.0):
        assert phi(t, 2) == t
    assert isinstance(phi(1.0, 2.5), float)


def test_phi_rejects_non_finite():
    with pytest.raises(ValueError):
        phi(np.inf, 2)
    with pytest.raises(ValueError):
        phi_inverse(np.array([1.0, np.nan]), 2)


@given(st.floats(-1e6, 1e6).filter(lambda t: t == 0 or abs(t) > 1e-20), st.floats(1.1, 6.0))
def test_phi_inverse_round_trip(t, p):
    assert phi_inverse(phi(t, p), p) == pytest.approx(t, rel=1e-11, abs=1e-300)


@given(st.floats(-50, 50), st.floats(1.1, 6.0))
def test_phi_is_odd(t, p):
    assert phi(-t, p) == -phi(t, p)


def test_cumulative_source_examples(ctx_sub):
    assert cumulative_source(PowerLawAffine.constant(1.0), 1.0, ctx_sub) == pytest.approx(1 / 3, rel=1e-15)
    assert cumulative_source(PowerLawAffine.constant(0.0), 0.7, ctx_sub) == 0.0


def test_cumulative_source_singular_closed_form_vs_quadrature(ctx_sub):
    ex = build_example(ctx_sub, 1.0)
    k = ex.f.exponent
    exact = -1.0 / (k + 3)
    closed = cumulative_source(ex.f, 1.0, ctx_sub)
    quad = cumulative_source(ex.f, 1.0, ctx_sub, method="quadrature")
    assert closed == pytest.approx(exact, rel=1e-14)
    assert quad == pytest.approx(closed, rel=1e-10)


def test_cumulative_source_rejects_non_integrable(ctx_sub):
    with pytest.raises(QuadratureError):
        cumulative_source(PowerLawAffine(1.0, -3.5), 0.5, ctx_sub)
    with pytest.raises(ValueError):
        cumulative_source(PowerLawAffine.constant(1.0), 1.5, ctx_sub)


def test_constant_source_exact_solution(ctx_sub):
    u = solve_radial(PowerLawAffine.constant(1.0), ctx_sub, grid_size=512)
    assert u.radii.size == 512
    assert np.max(np.abs(u.values - (1 - u.radii**2) / 6)) <= 1e-8
    assert u.values[-1] == 0.0


def test_sampled_source_against_polynomial_solution(ctx_sub):
    # f = 1 + r gives u = (1 - r^2)/6 + (1 - r^3)/12 for p = 2, n = 3;
    # a values-only source is interpolated to third order
    r = np.geomspace(1e-8, 1, 400)
    f = Sampled(r, 1 + r)
    u = solve_radial(f, ctx_sub)
    exact = (1 - u.radii**2) / 6 + (1 - u.radii**3) / 12
    assert np.max(np.abs(u.values - exact)) < 1e-7


def test_sharpness_source_matches_closed_form(ctx_sub):
    ex = build_example(ctx_sub, 1.0)
    u = solve_radial(ex.f, ctx_sub)
    sel = (u.radii >= 0.01) & (u.radii <= 0.99)
    exact = ex.u(u.radii[sel])
    assert np.max(np.abs(u.values[sel] / exact - 1)) <= 1e-6


def test_p3_flux_inversion():
    ctx = validate_context(4, 3, 1.1)
    f = PowerLawAffine(-2.0, -1.5)
    exact = power_source_solution(f, ctx)
    u = solve_radial(f, ctx)
    sel = (u.radii >= 0.01) & (u.radii <= 0.99)
    assert np.max(np.abs(u.values[sel] / exact(u.radii[sel]) - 1)) < 1e-10


@given(
    st.sampled_from([(3, 1.5), (3, 2.0), (4, 3.0), (5, 2.5)]),
    st.floats(-2.5, 3.0),
    st.floats(0.2, 5.0) | st.floats(-5.0, -0.2),
)
def test_solver_matches_power_source_formula(np_, k, a):
    n, p = np_
    ctx = validate_context(n, p, 1.2, warn=False)
    f = PowerLawAffine(a, k)
    exact = power_source_solution(f, ctx)
    u = solve_radial(f, ctx, grid_size=256)
    sel = (u.radii >= 0.01) & (u.radii <= 0.99)
    ref = exact(u.radii[sel])
    assert np.max(np.abs(u.values[sel] - ref) / np.abs(ref)) < 1e-9


@pytest.mark.parametrize("p", [1.5, 2.0, 2.5])
def test_homogeneity_of_solution_map(p):
    ctx = validate_context(3, p, 1.2, warn=False)
    f = PowerLawAffine(1.0, 1.0, 1.0)
    u1 = solve_radial(f, ctx)
    u10 = solve_radial(f.scaled(10.0), ctx)
    np.testing.assert_allclose(u10.values[:-1], 10 ** (1 / (p - 1)) * u1.values[:-1], rtol=1e-10)


def test_residual_examples(ctx_sub):
    one = PowerLawAffine.constant(1.0)
    u = PowerLawAffine(-1 / 6, 2.0, -1.0)
    assert p_laplacian_residual(u, one, ctx_sub, MID) <= 1e-8
    ex = build_example(ctx_sub, 1.0)
    assert p_laplacian_residual(ex.u, ex.f, ctx_sub, MID) <= 1e-6
    assert p_laplacian_residual(PowerLawAffine(0.0, 0.0), one, ctx_sub, MID) == pytest.approx(1.0)


def test_residual_of_solver_output(ctx_sub):
    f = PowerLawAffine(1.0, 1.0, 1.0)
    u = solve_radial(f, ctx_sub)
    assert p_laplacian_residual(u, f, ctx_sub, MID) < 1e-8


def test_residual_window(ctx_sub):
    one = PowerLawAffine.constant(1.0)
    u = PowerLawAffine(-1 / 6, 2.0, -1.0)
    with pytest.raises(ResidualWindowError):
        p_laplacian_residual(u, one, ctx_sub, [0.995])
    with pytest.raises(ResidualWindowError):
        p_laplacian_residual(u, one, ctx_sub, [1e-9])


def test_flux_identity_on_solver_grid(ctx_sub):
    f = PowerLawAffine(3.0, -1.0)
    u = solve_radial(f, ctx_sub)
    r = u.radii[10:-10]
    F = np.array([cumulative_source(f, x, ctx_sub) for x in r])
    np.testing.assert_allclose(flux(u, r, ctx_sub), -F, rtol=1e-10)


def test_grid_guards(ctx_sub):
    one = PowerLawAffine.constant(1.0)
    with pytest.raises(ValueError):
        solve_radial(one, ctx_sub, grid_size=10)
    with pytest.raises(ValueError):
        solve_radial(one, ctx_sub, QuadratureConfig(origin_cutoff=1e-6), r_min=1e-7)


def test_power_source_solution_declines_affine_sources(ctx_sub):
    assert power_source_solution(PowerLawAffine(1.0, 1.0, 1.0), ctx_sub) is None
    assert power_source_solution(PowerLawAffine(1.0, -4.0), ctx_sub) is None
    u = power_source_solution(PowerLawAffine.constant(1.0), ctx_sub)
    assert u.coefficient == pytest.approx(-1 / 6) and u.exponent == 2 and u.offset == -1
    assert math.isclose(u.boundary_value, 0.0, abs_tol=0)
