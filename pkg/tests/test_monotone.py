import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import qmc

from chbs.monotone import (GraphPair, check_compatibility, envelope,
                           envelope_boundary, logarithmic_graph,
                           minimal_section, obstacle_graph, polynomial_graph,
                           resolvent, yosida, yosida_boundary, yosida_prime)

POLY = polynomial_graph()
LOG = logarithmic_graph()
OBST = obstacle_graph()

#: per kind: (graph, sample window inside the effective domain,
#:            window for the envelope-derivative check away from kinks)
KINDS = {
    "polynomial": (POLY, (-10.0, 10.0), (-5.0, 5.0)),
    "logarithmic": (LOG, (-1.0 + 1e-6, 1.0 - 1e-6), (-0.95, 0.95)),
    "obstacle": (OBST, (-1.0, 1.0), (-0.9, 0.9)),
}


def sobol_points(lo, hi, m=10, seed=7):
    sampler = qmc.Sobol(d=1, scramble=True, seed=seed)
    return lo + (hi - lo) * sampler.random_base2(m=m).ravel()


# --- resolvent -----------------------------------------------------------

def test_resolvent_polynomial_exact_point():
    # j = 1 solves j + j**3 = 2 exactly
    assert resolvent(POLY, 1.0, 2.0) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("g", [POLY, LOG, OBST])
def test_resolvent_fixes_zero(g):
    assert resolvent(g, 0.3, 0.0) == 0.0


def test_resolvent_obstacle_is_projection():
    assert resolvent(OBST, 0.5, 3.0) == 1.0
    assert resolvent(OBST, 2.0, -7.0) == -1.0
    assert resolvent(OBST, 2.0, 0.25) == 0.25


@pytest.mark.parametrize("kind", ["polynomial", "logarithmic"])
@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_resolvent_residual_postcondition(kind, eps):
    g, window, _ = KINDS[kind]
    if kind == "logarithmic":
        # stay where the root is resolvable in double precision: one ulp of
        # j near saturation moves the residual by roughly eps*exp(beta)*1e-16
        window = (-1.0 - eps * 3.0, 1.0 + eps * 3.0)
    r = sobol_points(*window)
    j = resolvent(g, eps, r)
    if kind == "polynomial":
        beta = j ** 3
    else:
        beta = np.log1p(j) - np.log1p(-j)
    resid = np.abs(j + eps * beta - r)
    assert np.all(resid <= 1e-14 * np.maximum(1.0, np.abs(r)))


def test_resolvent_rejects_bad_input():
    with pytest.raises(ValueError):
        resolvent(POLY, 0.0, 1.0)
    with pytest.raises(ValueError):
        resolvent(POLY, 1.0, np.nan)


@given(st.floats(-1e6, 1e6), st.floats(1e-3, 1.0))
@settings(max_examples=200, deadline=None)
def test_resolvent_polynomial_contracts_to_zero(r, eps):
    j = resolvent(POLY, eps, r)
    assert abs(j) <= abs(r) + 1e-12
    assert j * r >= 0.0


@given(st.floats(-50.0, 50.0), st.floats(-50.0, 50.0), st.floats(1e-2, 1.0))
@settings(max_examples=200, deadline=None)
def test_resolvent_contraction_pairwise(r1, r2, eps):
    for g in (POLY, OBST):
        d = abs(resolvent(g, eps, r1) - resolvent(g, eps, r2))
        assert d <= abs(r1 - r2) + 1e-10 * max(1.0, abs(r1), abs(r2))


# --- yosida --------------------------------------------------------------

def test_yosida_trivial_values():
    assert yosida(OBST, 0.5, 3.0) == pytest.approx(4.0, abs=1e-14)
    assert yosida(POLY, 1.0, 2.0) == pytest.approx(1.0, abs=1e-13)
    assert yosida(LOG, 0.1, 0.0) == 0.0


@pytest.mark.parametrize("kind", list(KINDS))
@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_yosida_monotone_and_lipschitz(kind, eps):
    g, _, _ = KINDS[kind]
    r = np.sort(sobol_points(-3.0, 3.0))
    y = yosida(g, eps, r)
    slopes = np.diff(y) / np.diff(r)
    assert np.all(slopes >= -1e-9)
    assert np.all(slopes <= 1.0 / eps + 1e-8)


@pytest.mark.parametrize("kind", list(KINDS))
@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_yosida_bounded_by_minimal_section(kind, eps):
    g, window, _ = KINDS[kind]
    r = sobol_points(*window)
    assert np.all(np.abs(yosida(g, eps, r)) <= np.abs(minimal_section(g, r)) + 1e-12)


# --- boundary scaling ------------------------------------------------------

def test_yosida_boundary_scaled_parameter():
    pair = GraphPair(bulk=OBST, boundary=OBST, rho=2.0, c0=0.0)
    # effective parameter eps*rho = 1, resolvent is the projection
    assert yosida_boundary(pair, 0.5, 3.0) == pytest.approx(2.0, abs=1e-14)
    assert yosida_boundary(pair, 0.5, 0.0) == 0.0


def test_yosida_boundary_coincides_for_unit_rho():
    pair = GraphPair(bulk=POLY, boundary=POLY, rho=1.0, c0=0.0)
    r = sobol_points(-5.0, 5.0, m=8)
    np.testing.assert_allclose(yosida_boundary(pair, 0.2, r), yosida(POLY, 0.2, r),
                               rtol=0, atol=1e-14)


def test_yosida_signs_agree_with_boundary():
    pair = GraphPair(bulk=POLY, boundary=OBST, rho=1.0, c0=1.0)
    r = sobol_points(-4.0, 4.0, m=8)
    yb = yosida(pair.bulk, 0.3, r)
    yg = yosida_boundary(pair, 0.3, r)
    assert np.all(yb * yg >= 0.0)


# --- envelope --------------------------------------------------------------

def test_envelope_trivial_values():
    assert envelope(OBST, 0.5, 3.0) == pytest.approx(4.0, abs=1e-14)
    assert envelope(POLY, 1.0, 2.0) == pytest.approx(0.75, abs=1e-13)
    for g in (POLY, LOG, OBST):
        assert envelope(g, 0.2, 0.0) == 0.0


@pytest.mark.parametrize("kind", list(KINDS))
@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_envelope_between_zero_and_primitive(kind, eps):
    from chbs.monotone import beta_hat
    g, window, _ = KINDS[kind]
    r = sobol_points(*window)
    env = envelope(g, eps, r)
    assert np.all(env >= 0.0)
    assert np.all(env <= beta_hat(g, r) + 1e-12)


@pytest.mark.parametrize("kind", list(KINDS))
def test_envelope_nonincreasing_in_eps(kind):
    g, window, _ = KINDS[kind]
    r = sobol_points(*window, m=8)
    prev = envelope(g, 0.01, r)
    for eps in (0.05, 0.2, 1.0):
        cur = envelope(g, eps, r)
        assert np.all(cur <= prev + 1e-12)
        prev = cur


@pytest.mark.parametrize("kind", list(KINDS))
@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_envelope_derivative_is_yosida(kind, eps):
    g, _, window = KINDS[kind]
    r = sobol_points(*window)
    h = 1e-5
    fd = (envelope(g, eps, r + h) - envelope(g, eps, r - h)) / (2.0 * h)
    assert np.max(np.abs(fd - yosida(g, eps, r))) <= 1e-6


# --- minimal section ---------------------------------------------------------

def test_minimal_section_values():
    assert minimal_section(OBST, 0.7) == 0.0
    assert minimal_section(OBST, 1.0) == 0.0
    assert minimal_section(POLY, -2.0) == -8.0
    assert minimal_section(LOG, 0.5) == pytest.approx(math.log(3.0), abs=1e-12)


def test_minimal_section_domain_errors():
    with pytest.raises(ValueError):
        minimal_section(OBST, 1.5)
    with pytest.raises(ValueError):
        minimal_section(LOG, 1.0)


@pytest.mark.parametrize("kind", list(KINDS))
def test_minimal_section_nondecreasing(kind):
    g, window, _ = KINDS[kind]
    r = np.sort(sobol_points(*window, m=8))
    sec = minimal_section(g, r)
    assert np.all(np.diff(sec) >= -1e-12)


def test_convex_primitive_vanishes_at_origin():
    from chbs.monotone import beta_hat
    for g in (POLY, LOG, OBST):
        assert beta_hat(g, 0.0) == 0.0


# --- graph pair and compatibility --------------------------------------------

def test_graph_pair_rejects_uncontained_domain():
    with pytest.raises(ValueError):
        GraphPair(bulk=OBST, boundary=POLY)  # R not inside [-1, 1]
    with pytest.raises(ValueError):
        # closed boundary endpoints on an open bulk domain
        GraphPair(bulk=LOG, boundary=OBST, rho=1.0, c0=1.0)


def test_graph_pair_validates_domination_constants():
    with pytest.raises(ValueError):
        GraphPair(bulk=POLY, boundary=OBST, rho=1.0, c0=0.0)
    GraphPair(bulk=POLY, boundary=OBST, rho=1.0, c0=1.0)


def _doctored_pair(pair, c0):
    # bypass construction-time validation to probe a failing candidate
    bad = object.__new__(GraphPair)
    object.__setattr__(bad, "bulk", pair.bulk)
    object.__setattr__(bad, "boundary", pair.boundary)
    object.__setattr__(bad, "rho", pair.rho)
    object.__setattr__(bad, "c0", c0)
    return bad


def test_check_compatibility_equal_graphs():
    pair = GraphPair(bulk=POLY, boundary=POLY, rho=1.0, c0=0.0)
    report = check_compatibility(pair, 0.5, np.linspace(-10, 10, 2001))
    assert report.passed
    assert report.worst_slack >= 0.0


def test_check_compatibility_empty_is_vacuous():
    pair = GraphPair(bulk=POLY, boundary=POLY, rho=1.0, c0=0.0)
    report = check_compatibility(pair, 0.5, [])
    assert report.passed
    assert report.n_samples == 0


def test_check_compatibility_mixed_pair_against_dense_oracle():
    pair = GraphPair(bulk=POLY, boundary=OBST, rho=1.0, c0=1.0)
    eps = 0.5
    samples = np.linspace(-10.0, 10.0, 4001)
    report = check_compatibility(pair, eps, samples)

    # oracle: closed-form obstacle Yosida, cubic-root polynomial Yosida
    y_bnd = (samples - np.clip(samples, -1.0, 1.0)) / (eps * pair.rho)
    y_blk = np.empty_like(samples)
    for i, r in enumerate(samples):
        roots = np.roots([eps, 0.0, 1.0, -r])
        real = roots[np.abs(roots.imag) < 1e-9].real
        j = real[np.argmin(np.abs(real - r))]
        y_blk[i] = (r - j) / eps
    oracle_slack = pair.rho * np.abs(y_bnd) + pair.c0 - np.abs(y_blk)
    assert report.passed == bool(oracle_slack.min() >= -1e-9)
    assert report.worst_slack == pytest.approx(oracle_slack.min(), abs=1e-8)


def test_check_compatibility_flags_bad_candidate():
    pair = GraphPair(bulk=POLY, boundary=OBST, rho=1.0, c0=1.0)
    bad = _doctored_pair(pair, c0=0.2)
    report = check_compatibility(bad, 0.5, np.linspace(-2.0, 2.0, 801))
    assert not report.passed
    assert report.worst_slack < 0.0


def test_check_compatibility_rejects_bad_eps():
    pair = GraphPair(bulk=POLY, boundary=POLY)
    with pytest.raises(ValueError):
        check_compatibility(pair, 1.5, [0.0])


# --- misc -------------------------------------------------------------------

def test_yosida_prime_matches_finite_differences():
    r = sobol_points(-3.0, 3.0, m=7)
    h = 1e-6
    for g, eps in ((POLY, 0.3), (LOG, 0.3)):
        fd = (yosida(g, eps, r + h) - yosida(g, eps, r - h)) / (2.0 * h)
        assert np.max(np.abs(fd - yosida_prime(g, eps, r))) < 1e-5


def test_envelope_boundary_uses_scaled_parameter():
    pair = GraphPair(bulk=OBST, boundary=OBST, rho=2.0, c0=0.0)
    # envelope at parameter eps*rho = 1: (3-1)^2/2 = 2
    assert envelope_boundary(pair, 0.5, 3.0) == pytest.approx(2.0, abs=1e-14)
