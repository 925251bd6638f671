"""Stable slopes, splitting angles and the transposed-grid construction.

The stable slope ``psi-`` is obtained by running the slope recursion
backwards along a stored forward orbit, ``psi-_n = 1 / (f'(x_n) - psi-_{n+1})``,
so forward and backward slopes always refer to the same points.  The
splitting angle is the angle between the two directions, as lines, in
``(-pi/2, pi/2]``.

For McMillan maps the swap ``(x, y) -> (y, x)`` exchanges stable and unstable
slopes, ``psi-(x, y) = 1 / psi+(y, x)``, so a phase-space field of averaged
unstable slopes yields the splitting angle through its own transpose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import _kernels
from .errors import ParameterError
from .maps import MapModel, PlanarPoint
from .tangent import (
    HALF_PI,
    SINGULAR_GUARD,
    TangentSeries,
    TangentState,
    arccot,
    iter_tangent_chunks,
)

TANGENCY_TOL = 1e-12


@dataclass(frozen=True)
class SplitSample:
    point: PlanarPoint
    psi_plus: float
    psi_minus: float
    theta: float

    @classmethod
    def at(cls, point: Sequence[float], psi_plus: float, psi_minus: float) -> "SplitSample":
        return cls(PlanarPoint(float(point[0]), float(point[1])), psi_plus, psi_minus,
                   splitting_angle(psi_plus, psi_minus))


def wrap_half(d: float) -> float:
    """Reduce an angle difference modulo ``pi`` into ``(-pi/2, pi/2]``."""
    d = math.remainder(d, math.pi)
    return HALF_PI if d <= -HALF_PI else d


def splitting_angle(psi_plus: float, psi_minus: float) -> float:
    """``theta = alpha- - alpha+`` as lines, in ``(-pi/2, pi/2]``."""
    if psi_plus == psi_minus:
        return 0.0
    return wrap_half(arccot(psi_minus) - arccot(psi_plus))


def splitting_angles(psi_plus: np.ndarray, psi_minus: np.ndarray) -> np.ndarray:
    """Vectorized :func:`splitting_angle` via ``tan theta = (p - m) / (p m + 1)``."""
    p = np.asarray(psi_plus, dtype=float)
    q = np.asarray(psi_minus, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        theta = _arccot_array((p * q + 1.0) / (p - q))
        # infinite slopes: fall back on the angle-difference form
        bad = ~np.isfinite(p) | ~np.isfinite(q) | ~np.isfinite(theta)
    if np.any(bad):
        idx = np.flatnonzero(bad)
        theta[idx] = [splitting_angle(float(a), float(b)) for a, b in zip(p[idx], q[idx])]
    theta[p == q] = 0.0
    return theta


def _arccot_array(c: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        a = np.arctan(1.0 / c)
    return np.where(a <= -HALF_PI, HALF_PI, a)


@dataclass
class BackwardSweep:
    psi_minus: np.ndarray
    # False on the dropped final transient and on singular samples
    valid: np.ndarray
    singular: np.ndarray


def _fprime_of(orbit, m: MapModel) -> np.ndarray:
    if isinstance(orbit, TangentSeries):
        return orbit.fprime
    if isinstance(orbit, np.ndarray) and orbit.ndim == 1:
        return m.fprime_array(orbit)
    xs = np.asarray([q[0] for q in orbit], dtype=float)
    return m.fprime_array(xs)


def backward_slope_sweep(
    orbit,
    m: MapModel,
    seed: float = 0.0,
    transient: int = 100,
    guard: float = SINGULAR_GUARD,
) -> BackwardSweep:
    """Stable slopes along a stored orbit, swept from its last point to its first.

    ``orbit`` is a :class:`~oseledets.tangent.TangentSeries`, an array of
    x-coordinates or a sequence of points.  ``seed`` is the slope assigned to
    the last point; the final ``transient`` samples are marked invalid.
    """
    if not m.is_mcmillan:
        raise ParameterError("backward sweep needs a McMillan map")
    fp = np.ascontiguousarray(_fprime_of(orbit, m), dtype=float)
    n = fp.shape[0]
    if transient < 0 or n <= 2 * transient:
        raise ParameterError(f"orbit of length {n} too short for transient {transient}")
    out, flags = _kernels.backward_slopes(fp, float(seed), guard)
    valid = ~flags
    if transient:
        valid[n - transient:] = False
    return BackwardSweep(out, valid, flags)


@dataclass
class SplitBlock:
    """Samples of one orbit window with both slopes and the angle between them."""

    x: np.ndarray
    y: np.ndarray
    psi_plus: np.ndarray
    psi_minus: np.ndarray
    eta: np.ndarray
    lam1: np.ndarray
    log_kappa: np.ndarray
    theta: np.ndarray
    valid: np.ndarray
    first_index: int

    def __len__(self) -> int:
        return self.x.shape[0]

    def samples(self) -> Iterator[SplitSample]:
        for i in np.flatnonzero(self.valid):
            yield SplitSample(PlanarPoint(self.x[i], self.y[i]), self.psi_plus[i],
                              self.psi_minus[i], self.theta[i])


def split_blocks(
    start: Sequence[float],
    m: MapModel,
    steps: int,
    seed: TangentState,
    transient: int = 100,
    chunk: int = 1_000_000,
    overlap: int = 1_000,
    backward_seed: float = 0.0,
) -> Iterator[SplitBlock]:
    """Direct splitting samples along one orbit in bounded-memory windows.

    Each window of ``chunk`` samples is swept backwards from a point
    ``overlap`` steps into the next window, whose slope has forgotten the
    arbitrary ``backward_seed``.  The forward transient at the start and the
    backward transient at the very end are marked invalid.
    """
    if overlap < 1 or chunk < 1:
        raise ParameterError("chunk and overlap must be positive")
    if steps <= 2 * transient:
        raise ParameterError("orbit too short for the transient")
    total = steps + transient  # extra tail so the last kept sample has a settled psi-
    blocks = iter_tangent_chunks(start, m, total, seed, chunk)
    cur = next(blocks)
    for nxt in blocks:
        tail = nxt.fprime[:overlap]
        if tail.shape[0] < overlap:
            # short last window: merge it so the sweep still has a full overlap
            cur = _concat(cur, nxt)
            continue
        yield _finish(cur, np.concatenate([cur.fprime, tail]), backward_seed, transient, steps)
        cur = nxt
    yield _finish(cur, cur.fprime, backward_seed, transient, steps)


def _concat(a: TangentSeries, b: TangentSeries) -> TangentSeries:
    return TangentSeries(
        *(np.concatenate([getattr(a, k), getattr(b, k)])
          for k in ("x", "y", "fprime", "fsecond", "psi", "sigma", "eta", "singular")),
        end_point=b.end_point, end_state=b.end_state, first_index=a.first_index,
    )


def _finish(block: TangentSeries, fp: np.ndarray, seed: float, transient: int, steps: int) -> SplitBlock:
    n = len(block)
    psi_m, flags = _kernels.backward_slopes(np.ascontiguousarray(fp), seed, SINGULAR_GUARD)
    psi_m, flags = psi_m[:n], flags[:n]
    idx = block.first_index + np.arange(n)
    valid = ~block.singular & ~flags & (idx >= transient) & (idx < steps)
    theta = splitting_angles(block.psi, psi_m)
    return SplitBlock(block.x, block.y, block.psi, psi_m, block.eta, block.lam1,
                      block.log_kappa, theta, valid, block.first_index)


@dataclass
class SplitGrid:
    theta: np.ndarray
    empty: np.ndarray
    tangency: np.ndarray


def grid_split_field(psi_plus_field: np.ndarray, empty: np.ndarray | None = None) -> SplitGrid:
    """Splitting angle on a square phase-space grid from cell-averaged ``psi+``.

    Cell ``(j, k)`` covers ``x`` bin ``j`` and ``y`` bin ``k``; its stable
    slope is ``1 / psi+`` of the transposed cell, giving
    ``cot theta = (p + q) / (p q - 1)`` with ``q = psi+(k, j)``.
    Empty cells (NaN or masked) propagate; ``|p q - 1| < 1e-12`` is a tangency.
    """
    p = np.asarray(psi_plus_field, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ParameterError("psi+ field must be a square grid")
    mask = ~np.isfinite(p) if empty is None else (np.asarray(empty, dtype=bool) | ~np.isfinite(p))
    q = p.T
    mask = mask | mask.T
    num = p * q - 1.0
    den = p + q
    tang = ~mask & (np.abs(num) < TANGENCY_TOL)
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = np.where(den == 0.0, HALF_PI, np.arctan(num / den))
    theta = np.where(theta <= -HALF_PI, HALF_PI, theta)
    theta[tang] = 0.0
    theta[mask] = np.nan
    return SplitGrid(theta, mask, tang)
