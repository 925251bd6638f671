import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oseledets import oracles
from oseledets.errors import EmptyAccumulatorError, ParameterError, SingularStepError
from oseledets.maps import chirikov_taylor, generic_from_expressions, mcmillan
from oseledets.mobius import (
    MobiusStepInput,
    classify_convergence,
    gamma,
    general_series,
    iter_general_chunks,
    mobius_eta_step,
    mobius_ftle,
    mobius_slope_step,
)
from oseledets.tangent import TangentState, boundary_term, direction, eta_step, reduced_ftle, slope_step, tangent_series

rng = np.random.default_rng(17)


def test_gamma_examples():
    assert gamma(2.5, 1.0, 0.0) == 2.5
    assert gamma(2.5, 0.0, 1.0) == 1.0
    assert gamma(3.0, 2.0, -1.0) == 5.0


def test_slope_step_examples():
    ident = MobiusStepInput(1.0, 0.0, 0.0, 1.0)
    assert mobius_slope_step(1.7, -1, ident) == (1.7, -1)
    rot = MobiusStepInput(0.0, -1.0, 1.0, 0.0)
    assert mobius_slope_step(2.0, 1, rot)[0] == -0.5


def test_mcmillan_reduction_random_inputs():
    fp = rng.uniform(-10, 10, 10_000)
    fpp = rng.uniform(-10, 10, 10_000)
    psi = rng.uniform(-5, 5, 10_000)
    eta = rng.uniform(-5, 5, 10_000)
    for a, b, p, e in zip(fp, fpp, psi, eta):
        j = MobiusStepInput.mcmillan(a, b)
        s, _ = mobius_slope_step(p, 1, j)
        assert abs(s - slope_step(p, a)) <= 1e-15 * max(1.0, abs(s))
        h = mobius_eta_step(e, p, j)
        ref = eta_step(e, p, b)
        assert abs(h - ref) <= 1e-15 * max(1.0, abs(ref))


def test_eta_step_examples():
    assert mobius_eta_step(0.37, 1.2, MobiusStepInput(1.0, 0.0, 0.0, 1.0)) == 0.37
    assert mobius_eta_step(16.0, 0.9, MobiusStepInput(0.5, 0.0, 0.0, 2.0)) == 2.0


def test_determinant_is_checked():
    with pytest.raises(ParameterError):
        MobiusStepInput(1.0, 0.0, 0.0, 1.0, detJ=2.0)


def test_ftle_examples():
    assert mobius_ftle([1.0, 1.0, 1.0]) == 0.0
    assert mobius_ftle([2.0, 8.0]) == pytest.approx(2 * math.log(2), abs=1e-15)
    with pytest.raises(EmptyAccumulatorError):
        mobius_ftle([])
    with pytest.raises(SingularStepError):
        mobius_ftle([1.0, 0.0])


def _sl2(r):
    a, b, c = r.uniform(-2, 2, 3)
    while abs(a) < 0.1:
        a = r.uniform(-2, 2)
    return MobiusStepInput(a, b, c, (1 + b * c) / a)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.floats(-4, 4).filter(lambda v: abs(v) > 1e-3))
def test_composition(seed, psi):
    r = np.random.default_rng(seed)
    j1, j2 = _sl2(r), _sl2(r)
    M = j2.matrix() @ j1.matrix()
    j12 = MobiusStepInput(*M.ravel())
    g1 = gamma(psi, j1.C, j1.D)
    p1, s1 = mobius_slope_step(psi, 1, j1)
    g2 = gamma(p1, j2.C, j2.D)
    p2, s2 = mobius_slope_step(p1, s1, j2)
    q, s = mobius_slope_step(psi, 1, j12)
    if min(abs(g1), abs(g2)) < 1e-3:
        return
    assert abs(p2 - q) <= 1e-10 * max(1.0, abs(q)) and s == s2
    assert g1 * g2 == pytest.approx(gamma(psi, j12.C, j12.D), rel=1e-10, abs=1e-12)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.floats(-4, 4).filter(lambda v: abs(v) > 1e-3), st.sampled_from([1, -1]))
def test_projective_consistency(seed, psi, sigma):
    j = _sl2(np.random.default_rng(seed))
    p1, s1 = mobius_slope_step(psi, sigma, j)
    w = j.matrix() @ direction(psi, sigma)
    w /= np.linalg.norm(w)
    u = direction(p1, s1)
    assert abs(w[0] * u[1] - w[1] * u[0]) < 1e-10 and w @ u > 0


@pytest.mark.parametrize("K", [math.pi / 2, 2 * math.pi])
def test_engine_reduction(K):
    m = chirikov_taylor(K)
    s = tangent_series((1e-3, 2e-3), m, 10_000, TangentState(0.8, eta=0.5))
    g = general_series((1e-3, 2e-3), m, 10_000, TangentState(0.8, eta=0.5))
    assert np.array_equal(s.psi, g.psi) and np.array_equal(s.eta, g.eta)
    assert np.array_equal(s.sigma, g.sigma) and np.array_equal(s.psi, g.gamma)
    assert reduced_ftle(s.accumulator()) == reduced_ftle(g.accumulator())


def test_singular_step_matches_scalar_engine():
    m = mcmillan(lambda x: x, lambda x: 1.0, lambda x: 0.5, geometry="plane")
    s = tangent_series((0.0, 0.0), m, 6, TangentState(1.0, eta=0.25))
    g = general_series((0.0, 0.0), m, 6, TangentState(1.0, eta=0.25))
    assert np.array_equal(s.singular, g.singular)
    ok = ~s.singular
    assert np.allclose(s.eta[ok], g.eta[ok], rtol=1e-12)


def _sheared():
    # conjugate of a standard-like map by a shear: A, B, C, D all non-trivial
    fx = "x + 0.4*sin(x + y) + 0.2*y"
    fy = "y + 0.4*sin(x + y) - 0.1*x"
    return generic_from_expressions(fx, fy, {}, "plane")


def test_generic_map_ftle_matches_vector_iteration():
    m = _sheared()
    seed = TangentState(0.6)
    g = general_series((0.2, 0.1), m, 800, seed)
    full = g.accumulator().value - boundary_term(seed.psi, g.end_state.psi, 800)
    ref = oracles.benettin_ftle((0.2, 0.1), m, 800, seed.vector())
    assert full == pytest.approx(ref, rel=1e-10, abs=1e-13)


def test_generic_chunks_continue_exactly():
    m = _sheared()
    whole = general_series((0.2, 0.1), m, 3000, TangentState(0.6, eta=0.3))
    parts = list(iter_general_chunks((0.2, 0.1), m, 3000, TangentState(0.6, eta=0.3), chunk=1000))
    assert np.array_equal(whole.psi, np.concatenate([p.psi for p in parts]))
    assert np.array_equal(whole.eta, np.concatenate([p.eta for p in parts]))


def test_classification_area_preserving():
    c = classify_convergence(1.172, -1.172)
    assert c.kind == "hyperbolic"
    assert c.psi_rate == pytest.approx(-2 * 1.172) and c.eta_rate_plus == pytest.approx(-3 * 1.172)
    assert c.psi_converges and c.eta_converges_plus and c.eta_converges_minus


def test_classification_expansive():
    c = classify_convergence(3.0, 1.0)
    assert c.kind == "purely-expansive" and c.psi_converges and c.eta_converges_plus
    c = classify_convergence(3.0, 2.0)
    assert c.psi_converges and c.eta_converges_plus and not c.eta_converges_minus


def test_classification_contractive_and_degenerate():
    assert classify_convergence(-1.0, -3.0).kind == "purely-contractive"
    c = classify_convergence(0.5, 0.5)
    assert not (c.psi_converges or c.eta_converges_plus or c.eta_converges_minus)
    with pytest.raises(ParameterError):
        classify_convergence(1.0, 2.0)
