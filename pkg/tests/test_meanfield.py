import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mp, mpf, factorial, exp as mexp

from twosite.meanfield import (
    borel_coeff,
    borel_mass_sum,
    gel_fraction,
    sigma_meanfield,
    solve_u,
    u_grid,
)

# frozen from an independent bisection on u exp(2 (1 - u)) = 1 (see test below)
U_1_2 = 0.20318786997997995


def test_borel_monomers():
    for t in (0.0, 0.3, 1.0, 2.5):
        assert borel_coeff(t, 1) == pytest.approx(math.exp(-t), rel=1e-14)
    assert borel_coeff(0.0, 1) == 1.0
    assert borel_coeff(0.0, 5) == 0.0


def test_borel_dimer_at_one():
    assert borel_coeff(1.0, 2) == pytest.approx(math.exp(-2) / 2, rel=1e-14)
    assert borel_coeff(1.0, 2) == pytest.approx(0.067668, abs=1e-6)


def test_borel_large_mass_finite():
    v = borel_coeff(1.0, 10**5)
    assert 0.0 < v < 1e-10 and math.isfinite(v)


@pytest.mark.parametrize("t,m", [(0.8, 7), (1.0, 40), (1.7, 150), (0.2, 3)])
def test_borel_against_arbitrary_precision(t, m):
    mp.dps = 40
    ref = mpf(t) ** (m - 1) * mpf(m) ** (m - 2) * mexp(-mpf(t) * m) / factorial(m)
    assert borel_coeff(t, m) == pytest.approx(float(ref), rel=1e-12)


def test_borel_array_input():
    ms = np.arange(1, 6)
    assert np.allclose(borel_coeff(0.5, ms), [borel_coeff(0.5, int(m)) for m in ms], rtol=1e-15)


def test_borel_domain():
    with pytest.raises(ValueError):
        borel_coeff(-1.0, 1)
    with pytest.raises(ValueError):
        borel_coeff(1.0, 0)


def _bisect(t, x=1.0, lo=0.0, hi=None):
    hi = min(1.0, 1.0 / t) if hi is None else hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * math.exp(t * (1 - mid)) < x:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_u_at_two_matches_bisection():
    assert _bisect(2.0) == pytest.approx(U_1_2, abs=1e-15)
    assert solve_u(1.0, 2.0) == pytest.approx(U_1_2, abs=1e-14)
    assert 0 < solve_u(1.0, 2.0) < 0.5


def test_u_trivial_cases():
    for t in (0.0, 0.5, 1.0):
        assert solve_u(1.0, t) == 1.0
    for t in (0.0, 1.0, 3.0):
        assert solve_u(0.0, t) == 0.0


def test_u_domain_errors():
    with pytest.raises(ValueError):
        solve_u(1.5, 1.0)
    with pytest.raises(ValueError):
        solve_u(-0.1, 1.0)
    with pytest.raises(ValueError):
        solve_u(0.5, -1.0)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(0.0, 1.0), t=st.floats(0.0, 6.0))
def test_u_residual_and_branch(x, t):
    u = solve_u(x, t)
    assert 0.0 <= u <= min(1.0, 1.0 / t if t > 0 else 1.0) + 1e-15
    assert abs(u * math.exp(t * (1 - u)) - x) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(x1=st.floats(0.0, 1.0), x2=st.floats(0.0, 1.0), t=st.floats(0.0, 4.0))
def test_u_monotone_in_x(x1, x2, t):
    lo, hi = sorted((x1, x2))
    assert solve_u(lo, t) <= solve_u(hi, t) + 1e-15


def test_gel_fraction_values():
    assert gel_fraction(0.9) == 0.0
    assert gel_fraction(1.0) == 0.0
    assert gel_fraction(2.0) == pytest.approx(1 - U_1_2, abs=1e-14)
    assert gel_fraction(2.0) == pytest.approx(0.7968, abs=1e-4)
    assert gel_fraction(1.0 + 1e-9) < 1e-8


def test_gel_right_slope_two():
    q = [gel_fraction(1 + h) / h for h in (1e-2, 1e-3, 1e-4)]
    assert all(abs(v - 2) < 0.03 for v in q)
    assert abs(q[-1] - 2) < abs(q[0] - 2)


def test_sigma_values():
    assert sigma_meanfield(0.0) == 1.0
    assert sigma_meanfield(0.5) == pytest.approx(2.0, rel=1e-14)
    assert sigma_meanfield(1.0) == math.inf
    for h in (1e-3, 1e-4, 1e-5):
        assert sigma_meanfield(1 + h) * h == pytest.approx(1.0, abs=5 * h + 1e-6)


def test_borel_mass_sums():
    assert borel_mass_sum(1.5, 10**5) == pytest.approx(solve_u(1.0, 1.5), abs=1e-3)
    assert borel_mass_sum(1.5, 10**5) <= solve_u(1.0, 1.5) + 1e-12
    partial = [borel_mass_sum(1.5, m) for m in (10, 100, 1000)]
    assert partial == sorted(partial)
    for t in (0.3, 0.7):
        assert borel_mass_sum(t, 2000) == pytest.approx(1.0, abs=1e-12)


def test_generating_function_matches_series():
    x, t = 0.6, 1.3
    m = np.arange(1, 400)
    series = float(np.sum(m * borel_coeff(t, m) * x**m))
    assert solve_u(x, t) == pytest.approx(series, abs=1e-12)


def test_u_grid_shape():
    g = u_grid([0.0, 0.5, 1.0], [0.5, 2.0])
    assert g.shape == (2, 3)
    assert g[1, 2] == pytest.approx(U_1_2, abs=1e-14)
