import math

import numpy as np
import pytest

from oseledets import oracles
from oseledets.errors import NoConvergenceError, ParameterError
from oseledets.maps import chirikov_taylor, mcmillan
from oseledets.tangent import TangentState, curvature, ftle_along

R3 = math.sqrt(3.0)


def _quadratic():
    # fixed point at the origin with f' = 4 and f'' = 1
    return mcmillan(lambda x: 4 * x + 0.5 * x * x, lambda x: 4 + x, lambda x: 1.0)


def test_benettin_at_fixed_point():
    # seeded on the unstable eigenvector the boundary transient vanishes
    lam = oracles.benettin_ftle((0.0, 0.0), _quadratic(), 1000, [2 + R3, 1.0])
    assert lam == pytest.approx(math.log(2 + R3), abs=1e-8)
    generic = oracles.benettin_ftle((0.0, 0.0), _quadratic(), 1000, [0.3, 1.0])
    assert generic == pytest.approx(math.log(2 + R3), abs=1e-2)


def test_benettin_parabolic_shear_decays():
    m = mcmillan(lambda x: 2 * x, lambda x: 2.0, lambda x: 0.0)
    a = oracles.benettin_ftle((0.0, 0.0), m, 1000, [1.0, 0.0])
    b = oracles.benettin_ftle((0.0, 0.0), m, 100_000, [1.0, 0.0])
    assert 0 < b < a < 0.01
    assert b == pytest.approx(math.log(100_000) / 100_000, rel=0.1)


def test_benettin_matches_scalar_engine():
    m = chirikov_taylor(2 * math.pi)
    ref = oracles.benettin_ftle((1e-3, 2e-3), m, 10**6, [1.0, 0.3])
    lam, _ = ftle_along((1e-3, 2e-3), m, 10**6, TangentState(1 / 0.3))
    assert abs(lam - ref) < 1e-3


def test_benettin_rejects_zero_seed():
    with pytest.raises(ParameterError):
        oracles.benettin_ftle((0.0, 0.0), _quadratic(), 10, [0.0, 0.0])


def test_clv_at_fixed_point():
    plus, minus = oracles.clv_directions((0.0, 0.0), _quadratic(), 200)
    assert plus == pytest.approx(2 + R3, abs=1e-10) and minus == pytest.approx(2 - R3, abs=1e-10)


def test_clv_fails_at_elliptic_point():
    with pytest.raises(NoConvergenceError):
        oracles.clv_directions((math.pi, math.pi), chirikov_taylor(math.pi / 2), 200)


def test_circle_curvature():
    s = np.arange(5) * 1e-3
    assert oracles.fd_curvature(np.c_[np.cos(s), np.sin(s)]) == pytest.approx(1.0, abs=1e-6)


def test_collinear_curvature():
    assert oracles.fd_curvature([[0, 0], [1, 2], [2, 4], [3, 6]]) == 0.0
    with pytest.raises(ParameterError):
        oracles.fd_curvature([[0, 0], [1, 1]])


def test_unstable_curve_curvature():
    psi = 2 + R3
    eta = 1.0 / (1.0 - psi ** -3)
    m = _quadratic()
    steps = 6
    pts = oracles.trace_unstable_curve((0.0, 0.0), m, psi, 1e-2 * psi ** -steps, 11, steps)
    spacing = np.hypot(*np.diff(pts, axis=0).T).mean()
    assert spacing == pytest.approx(1e-3, rel=0.01)
    assert oracles.fd_curvature(pts) == pytest.approx(curvature(psi, eta), rel=0.01)
