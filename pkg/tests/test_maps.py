import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oseledets.errors import DivergenceError, ParameterError
from oseledets.maps import (
    REFLECTION,
    chirikov_taylor,
    fixed_point_spectrum,
    fixed_points,
    generic_from_expressions,
    jacobian,
    jacobian_product,
    mcmillan,
    mcmillan_from_expression,
    mcmillan_inverse_step,
    mcmillan_step,
    orbit,
    orbit_with_derivatives,
    reflect,
)

CT = chirikov_taylor(2 * math.pi)
coord = st.floats(0.0, 2 * math.pi, allow_nan=False)


def test_origin_is_fixed():
    assert mcmillan_step((0.0, 0.0), CT) == (0.0, 0.0)


def test_pi_maps_to_origin_column():
    x, y = mcmillan_step((math.pi, 0.0), CT)
    assert min(x, 2 * math.pi - x) < 1e-12 and y == pytest.approx(math.pi)
    back = mcmillan_inverse_step((0.0, math.pi), CT)
    assert back.x == pytest.approx(math.pi) and min(back.y, 2 * math.pi - back.y) < 1e-12


def test_weak_chaos_first_step_by_hand():
    K = math.pi / 2
    x, y = mcmillan_step((1e-3, 2e-3), chirikov_taylor(K))
    assert x == pytest.approx(2e-3 + K * math.sin(1e-3) - 2e-3, rel=1e-12)
    assert y == 1e-3


def test_inverse_round_trip():
    p = mcmillan_inverse_step(mcmillan_step((1.0, 2.0), CT), CT)
    assert p.x == pytest.approx(1.0, abs=1e-12) and p.y == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=100)
@given(coord, coord)
def test_reflection_conjugates_inverse(x, y):
    plane = chirikov_taylor(2 * math.pi, "plane")
    lhs = reflect(mcmillan_step((x, y), plane))
    rhs = mcmillan_inverse_step(reflect((x, y)), plane)
    assert abs(lhs.x - rhs.x) < 1e-12 and abs(lhs.y - rhs.y) < 1e-12


def test_jacobian_examples():
    J, det = jacobian((0.0, 0.3), CT)
    assert np.allclose(J, [[2 + 2 * math.pi, -1], [1, 0]]) and det == 1.0
    J, _ = jacobian((math.pi / 2, 0.0), chirikov_taylor(1.7))
    assert np.allclose(J, [[2, -1], [1, 0]], atol=1e-15)


@given(coord, coord)
def test_area_preservation(x, y):
    assert abs(jacobian((x, y), CT)[1] - 1.0) < 1e-14


def test_product_determinant_along_orbit():
    F = jacobian_product((0.3, 1.1), CT, 50)
    assert abs(np.linalg.det(F) - 1.0) < 1e-9 * max(1.0, np.abs(F).max() ** 2)


@settings(max_examples=25)
@given(coord, coord, st.integers(1, 10), st.integers(1, 10))
def test_cocycle_composition(x, y, j, k):
    p = (x, y)
    xs, ys = orbit(p, CT, k + 1)
    pk = (xs[k], ys[k])
    lhs = jacobian_product(p, CT, j + k)
    rhs = jacobian_product(pk, CT, j) @ jacobian_product(p, CT, k)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.abs(lhs).max())


@settings(max_examples=25)
@given(coord, coord, st.integers(1, 10))
def test_cocycle_reversibility(x, y, k):
    lhs = jacobian_product((x, y), CT, k)
    rhs = REFLECTION @ jacobian_product(reflect((x, y)), CT, -k) @ REFLECTION
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.abs(lhs).max())


def test_fixed_points_weak_chaos():
    reps = fixed_points(chirikov_taylor(math.pi / 2))
    xs = sorted(r.location.x for r in reps)
    assert len(reps) == 2 and xs[0] == pytest.approx(0.0, abs=1e-10) and xs[1] == pytest.approx(math.pi, abs=1e-10)
    kinds = {round(r.location.x, 6): r.kind for r in reps}
    assert kinds[0.0] == "hyperbolic" and kinds[round(math.pi, 6)] == "elliptic"


def test_fixed_points_strong_chaos():
    reps = fixed_points(CT)
    xs = sorted(r.location.x for r in reps)
    assert np.allclose(xs, [0, math.pi / 2, math.pi, 3 * math.pi / 2], atol=1e-9)
    origin = min(reps, key=lambda r: r.location.x)
    # independent closed form: lambda = arccosh(f'/2)
    assert origin.lyapunov == pytest.approx(math.acosh((2 + 2 * math.pi) / 2), abs=1e-12)
    assert origin.lyapunov == pytest.approx(2.0993, abs=1e-4)
    for r in reps:
        assert r.location.x == r.location.y
        res = math.remainder(CT.f(r.location.x) - 2 * r.location.x, 2 * math.pi)
        assert abs(res) < 1e-10


def test_synthetic_spectrum():
    kind, cp, cm = fixed_point_spectrum(4.0)
    assert kind == "hyperbolic"
    assert cp == pytest.approx(2 + math.sqrt(3), abs=1e-12) and cm == pytest.approx(2 - math.sqrt(3), abs=1e-12)
    assert math.log(abs(cp)) == pytest.approx(1.3170, abs=1e-4)
    assert fixed_point_spectrum(-2.0)[0] == "parabolic"
    kind, cp, cm = fixed_point_spectrum(0.0)
    assert kind == "elliptic" and abs(cp * cm - 1) < 1e-15


def test_plane_fixed_points_need_bounds():
    with pytest.raises(ParameterError):
        fixed_points(chirikov_taylor(1.0, "plane"))


def test_expression_map_matches_builtin():
    m = mcmillan_from_expression("2*x + K*sin(x)", {"K": 2 * math.pi})
    a = orbit_with_derivatives((0.4, 1.3), m, 20)
    b = orbit_with_derivatives((0.4, 1.3), CT, 20)
    assert np.allclose(a[0], b[0], atol=1e-9) and np.allclose(a[2], b[2], atol=1e-9)


def test_generic_expressions_reduce_to_mcmillan():
    g = generic_from_expressions("2*x + K*sin(x) - y", "x", {"K": 1.3}, "plane")
    m = chirikov_taylor(1.3, "plane")
    assert np.allclose(g.jacobian_entries(0.7, 0.2), m.jacobian_entries(0.7, 0.2))
    assert np.allclose(g.step((0.7, 0.2)), m.step((0.7, 0.2)))


def test_compiled_orbit_matches_python_stepping():
    xs, ys, fp, fpp, end = orbit_with_derivatives((1e-3, 2e-3), chirikov_taylor(math.pi / 2), 5000)
    p = (1e-3, 2e-3)
    m = chirikov_taylor(math.pi / 2)
    for i in range(5000):
        assert (xs[i], ys[i]) == tuple(p)
        p = m.step(p)
    assert tuple(end) == tuple(p)


def test_plane_divergence_is_reported():
    m = mcmillan(lambda x: x * x * x, lambda x: 3 * x * x, lambda x: 6 * x)
    with pytest.raises(DivergenceError):
        orbit_with_derivatives((3.0, 0.0), m, 100)
