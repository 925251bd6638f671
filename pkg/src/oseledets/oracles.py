"""Reference computations that never touch the slope recursions.

Everything here works with explicit tangent vectors and Jacobian matrices
so that tests can check the scalar engines against an independent route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NoConvergenceError, ParameterError
from .maps import MapModel, PlanarPoint, jacobian

# two iterated vectors count as aligned once |sin(angle)| drops below this
ALIGN_TOL = 1e-9


@dataclass
class VectorState:
    v: np.ndarray
    log_norm: float = 0.0

    def push(self, J: np.ndarray) -> None:
        w = J @ self.v
        n = math.hypot(w[0], w[1])
        self.log_norm += math.log(n)
        self.v = w / n


def _unit(w: Sequence[float]) -> np.ndarray:
    v = np.asarray(w, dtype=float)
    n = math.hypot(v[0], v[1])
    if n == 0.0 or not math.isfinite(n):
        raise ParameterError("seed direction must be a finite nonzero vector")
    return v / n


def _jac(p: PlanarPoint, m: MapModel) -> np.ndarray:
    return jacobian(p, m)[0]


def _inv_jac(p: PlanarPoint, m: MapModel) -> np.ndarray:
    # inverse of the Jacobian at p, mapping tangent vectors at step(p) back to p
    J = _jac(p, m)
    if m.is_mcmillan:
        return np.array([[0.0, 1.0], [-1.0, J[0, 0]]])
    return np.linalg.inv(J)


def benettin_ftle(start: Sequence[float], m: MapModel, steps: int, w0: Sequence[float]) -> float:
    """``(1/k) ln |F^k w0|`` for unit ``w0``, renormalizing every step."""
    if steps < 1:
        raise ParameterError("steps must be at least 1")
    p = m.wrap(float(start[0]), float(start[1]))
    state = VectorState(_unit(w0))
    for _ in range(steps):
        state.push(_jac(p, m))
        p = m.step(p)
    return state.log_norm / steps


def _cot(v: np.ndarray) -> float:
    return math.inf if v[1] == 0.0 else v[0] / v[1]


def _cross(a: np.ndarray, b: np.ndarray) -> float:
    return abs(a[0] * b[1] - a[1] * b[0])


_SEEDS = (np.array([1.0, 0.3]), np.array([-0.4, 1.0]))


def _converge(mats: list[np.ndarray]) -> np.ndarray:
    vs = [VectorState(_unit(s)) for s in _SEEDS]
    for J in mats:
        for s in vs:
            s.push(J)
    if _cross(vs[0].v, vs[1].v) > ALIGN_TOL:
        raise NoConvergenceError("tangent vectors did not align; spectrum looks degenerate")
    return vs[0].v


def clv_directions(start: Sequence[float], m: MapModel, warmup: int = 200) -> tuple[float, float]:
    """Cotangents ``(psi+, psi-)`` of the covariant directions at ``start``.

    The unstable direction comes from pushing vectors forward along
    ``warmup`` preimages of ``start``; the stable one from pulling vectors
    back with inverse Jacobians from ``warmup`` steps in the future.
    """
    if warmup < 1:
        raise ParameterError("warmup must be positive")
    p0 = m.wrap(float(start[0]), float(start[1]))
    past = [p0]
    for _ in range(warmup):
        past.append(m.inverse_step(past[-1]))
    forward = [_jac(q, m) for q in reversed(past[1:])]
    future = [p0]
    for _ in range(warmup):
        future.append(m.step(future[-1]))
    backward = [_inv_jac(q, m) for q in reversed(future[:-1])]
    return _cot(_converge(forward)), _cot(_converge(backward))


def _circum_curvature(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    ab, bc, ca = b - a, c - b, a - c
    cross = ab[0] * (c - a)[1] - ab[1] * (c - a)[0]
    denom = math.hypot(*ab) * math.hypot(*bc) * math.hypot(*ca)
    if denom == 0.0:
        raise ParameterError("curvature needs pairwise distinct points")
    return 2.0 * abs(cross) / denom


def fd_curvature(points: Sequence[Sequence[float]]) -> float:
    """Mean circumcircle curvature over consecutive triples of curve points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ParameterError("need at least three planar points")
    ks = [_circum_curvature(pts[i], pts[i + 1], pts[i + 2]) for i in range(pts.shape[0] - 2)]
    return float(np.mean(ks))


def trace_unstable_curve(
    p: Sequence[float], m: MapModel, psi: float, length: float, n: int, steps: int
) -> np.ndarray:
    """Points of a short segment through ``p`` with slope ``psi``, mapped ``steps`` times.

    Used to sample a local unstable curve: near a hyperbolic fixed point the
    image of any short transversal segment aligns with the unstable manifold.
    """
    direction = np.array([psi, 1.0]) / math.hypot(psi, 1.0)
    s = np.linspace(-0.5 * length, 0.5 * length, n)
    pts = np.asarray(p, dtype=float)[None, :] + s[:, None] * direction[None, :]
    out = np.empty_like(pts)
    for i, q in enumerate(pts):
        r = PlanarPoint(*q)
        for _ in range(steps):
            r = m.step(r)
        out[i] = r
    return out
