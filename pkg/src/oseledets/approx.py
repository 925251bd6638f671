"""Explicit approximants of the unstable slope from the backward orbit.

Unrolling ``psi_n = f'(x_{n-1}) - 1/psi_{n-1}`` along preimages turns the
unstable slope at a point into a continued fraction in ``f'`` evaluated at
the y-coordinates of successive preimages.  Truncating at depth ``N`` and
seeding the innermost level with ``f'`` itself gives the approximants
``psi^(0) = f'(y)``, ``psi^(1) = f'(y) - 1/f'(y_{-1})``, and so on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DivergenceError, ParameterError, SingularStepError
from .maps import MapModel, PlanarPoint, mcmillan_inverse_step, wrap_array

MAX_ORDER = 16


@dataclass(frozen=True)
class ApproxOrder:
    N: int
    maximum: int = MAX_ORDER

    def __post_init__(self) -> None:
        if not 0 <= self.N <= self.maximum:
            raise ParameterError(f"order must lie in [0, {self.maximum}], got {self.N}")


def _order(N) -> int:
    return ApproxOrder(int(N.N if isinstance(N, ApproxOrder) else N)).N


def preimage_chain(p: Sequence[float], m: MapModel, N) -> tuple[float, ...]:
    """``(y_0, y_{-1}, ..., y_{-N})`` from repeated inverse steps."""
    if not m.is_mcmillan:
        raise ParameterError("preimage chains need a McMillan map")
    N = _order(N)
    q = PlanarPoint(float(p[0]), float(p[1]))
    ys = [q.y]
    for k in range(N):
        q = mcmillan_inverse_step(q, m)
        if not (math.isfinite(q.x) and math.isfinite(q.y)):
            raise DivergenceError(f"preimage {k + 1} is not finite")
        ys.append(q.y)
    return tuple(ys)


def cf_slope(p: Sequence[float], m: MapModel, N) -> float:
    """Depth-``N`` continued-fraction slope, evaluated innermost level first."""
    ys = preimage_chain(p, m, N)
    t = m.fprime(ys[-1])
    for yq in reversed(ys[:-1]):
        if t == 0.0:
            raise SingularStepError("zero partial denominator in continued fraction")
        t = m.fprime(yq) - 1.0 / t
    return t


def cf_slopes(x: np.ndarray, y: np.ndarray, m: MapModel, N) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`cf_slope` over many points.

    Returns ``(slopes, singular)``; points hitting a zero partial denominator
    get ``nan`` and are flagged.
    """
    if not m.is_mcmillan:
        raise ParameterError("continued fractions need a McMillan map")
    N = _order(N)
    x = np.asarray(x, dtype=float).copy()
    y = np.asarray(y, dtype=float).copy()
    chain = [y.copy()]
    for _ in range(N):
        fy = m.f_vec(y) if m.f_vec is not None else np.vectorize(m.f, otypes=[float])(y)
        x, y = y, fy - x
        if m.on_torus:
            y = wrap_array(y)
        chain.append(y)
    t = m.fprime_array(chain[-1])
    bad = np.zeros(t.shape, dtype=bool)
    for yq in reversed(chain[:-1]):
        z = t == 0.0
        bad |= z
        with np.errstate(divide="ignore", invalid="ignore"):
            t = m.fprime_array(yq) - 1.0 / t
    t[bad] = np.nan
    return t, bad


def series_weight_bound(lam: float, N, fprime_max: float) -> float:
    """Size of the first discarded term, ``max|f'| * exp(-2 N lambda)``."""
    if not lam > 0.0:
        raise ParameterError("lambda must be positive")
    return float(fprime_max) * math.exp(-2.0 * _order(N) * lam)


def fprime_sup(m: MapModel, samples: int = 4096) -> float:
    """``max |f'|`` over one period, sampled on a fine grid."""
    xs = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
    return float(np.max(np.abs(m.fprime_array(xs))))
