"""Scalar tangent dynamics for McMillan maps.

A tangent direction is stored as its cotangent ``psi``, an orientation sign
``sigma`` and the curvature auxiliary ``eta`` of the curve it is tangent to.
Along an orbit ``x_n`` of ``(x, y) -> (f(x) - y, x)`` these evolve as

    psi_{n+1}   = f'(x_n) - 1 / psi_n
    sigma_{n+1} = sigma_n * sign(psi_n)
    eta_{n+1}   = f''(x_n) + eta_n / psi_n**3

and the finite-time Lyapunov exponent over ``k`` steps is the Birkhoff mean
of ``ln|psi_q|`` plus a boundary term that decays like ``1/k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from . import _kernels
from ._kernels import advance, recip
from .errors import (
    DivergenceError,
    EmptyAccumulatorError,
    HorizontalTangentError,
    ParameterError,
    SingularStepError,
)
from .maps import MapModel, PlanarPoint, orbit_with_derivatives

# Slopes with |psi| below this are stepped in extended arithmetic and flagged.
SINGULAR_GUARD = 1e-300

HALF_PI = 0.5 * math.pi


def arccot(psi: float) -> float:
    """Direction angle of a slope, in ``(-pi/2, pi/2]``."""
    if psi == 0.0:
        return HALF_PI
    a = math.atan(1.0 / psi)
    return HALF_PI if a <= -HALF_PI else a


def cot(alpha: float) -> float:
    s = math.sin(alpha)
    if s == 0.0:
        raise HorizontalTangentError("direction angle has zero sine")
    return math.cos(alpha) / s


def slope_step(psi: float, fprime: float) -> float:
    """``f' - 1/psi``; a zero slope maps to ``-+inf`` per IEEE rules."""
    return fprime - recip(psi)


def sign_step(sigma: int, psi: float) -> int:
    if psi == 0.0 or math.isnan(psi):
        raise SingularStepError("orientation undefined for psi = 0")
    return sigma if psi > 0.0 else -sigma


def eta_step(eta: float, psi: float, fsecond: float) -> float:
    if psi == 0.0:
        raise SingularStepError("curvature update undefined for psi = 0")
    return fsecond + eta / (psi * psi * psi)


def curvature(psi: float, eta: float) -> float:
    """Unsigned curvature ``|eta| / (1 + psi^2)^(3/2)``."""
    h = math.hypot(1.0, psi)
    return abs(eta) / (h * h * h)


def log_curvature(psi: float, eta: float) -> float:
    """``ln kappa``, computed without overflow for large ``psi`` or ``eta``."""
    if eta == 0.0:
        return -math.inf
    return math.log(abs(eta)) - 3.0 * math.log(math.hypot(1.0, psi))


def log_curvature_array(psi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.log(np.abs(eta)) - 3.0 * np.log(np.hypot(1.0, psi))


def one_step_exponent(psi: float) -> float:
    """``ln|psi|``; ``-inf`` for a zero slope."""
    if psi == 0.0:
        return -math.inf
    return math.log(abs(psi))


def expanding_factor(psi_n: float, psi_next: float) -> float:
    """Growth of a unit tangent vector over one step."""
    if psi_n == 0.0:
        raise SingularStepError("expanding factor undefined for psi_n = 0")
    return abs(psi_n) * math.hypot(1.0, psi_next) / math.hypot(1.0, psi_n)


def direction(psi: float, sigma: int = 1) -> np.ndarray:
    """Unit vector ``sigma * (psi, 1) / sqrt(1 + psi^2)``."""
    if math.isinf(psi):
        return np.array([math.copysign(1.0, psi) * sigma, 0.0])
    h = math.hypot(1.0, psi)
    return np.array([sigma * psi / h, sigma / h])


@dataclass(frozen=True)
class TangentState:
    psi: float
    sigma: int = 1
    eta: float = 0.0
    singular: bool = False
    # (numerator, denominator) of a curvature update deferred by a singular step
    carry: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.sigma not in (1, -1):
            raise ParameterError(f"sigma must be +1 or -1, got {self.sigma!r}")

    @classmethod
    def from_angle(cls, alpha: float, eta: float = 0.0, sigma: int = 1) -> "TangentState":
        return cls(psi=cot(alpha), sigma=sigma, eta=eta)

    @classmethod
    def from_vector(cls, w: Sequence[float], eta: float = 0.0) -> "TangentState":
        """State whose direction and orientation match the vector ``w``."""
        wx, wy = float(w[0]), float(w[1])
        if wy == 0.0:
            raise HorizontalTangentError("horizontal seed vector")
        return cls(psi=wx / wy, sigma=1 if wy > 0 else -1, eta=eta)

    @property
    def alpha(self) -> float:
        return arccot(self.psi)

    @property
    def kappa(self) -> float:
        return curvature(self.psi, self.eta)

    @property
    def log_kappa(self) -> float:
        return log_curvature(self.psi, self.eta)

    @property
    def exponent(self) -> float:
        return one_step_exponent(self.psi)

    def vector(self) -> np.ndarray:
        return direction(self.psi, self.sigma)


def default_seed(rng: np.random.Generator) -> TangentState:
    """Random direction with ``alpha ~ U(-pi/2, pi/2)``, flat curve, ``sigma = +1``."""
    alpha = rng.uniform(-HALF_PI, HALF_PI)
    while alpha == -HALF_PI or alpha == 0.0:
        alpha = rng.uniform(-HALF_PI, HALF_PI)
    return TangentState.from_angle(alpha)


def transient_length(lyapunov_estimate: float | None) -> int:
    """Default number of leading samples to discard."""
    if lyapunov_estimate is None or not lyapunov_estimate > 0.0:
        return 100
    return max(100, math.ceil(30.0 / lyapunov_estimate))


@dataclass
class FtleAccumulator:
    """Running ``sum ln|psi|`` over non-singular steps."""

    sum_log: float = 0.0
    steps: int = 0
    singular_events: int = 0

    def add(self, psi: float, singular: bool = False) -> None:
        if singular or psi == 0.0 or not math.isfinite(psi):
            self.singular_events += 1
            return
        self.sum_log += math.log(abs(psi))
        self.steps += 1

    def add_log(self, total: float, steps: int, singular: int = 0) -> None:
        self.sum_log += total
        self.steps += steps
        self.singular_events += singular

    def merge(self, other: "FtleAccumulator") -> "FtleAccumulator":
        return FtleAccumulator(
            self.sum_log + other.sum_log,
            self.steps + other.steps,
            self.singular_events + other.singular_events,
        )

    __add__ = merge

    @property
    def value(self) -> float:
        return reduced_ftle(self)


def reduced_ftle(acc: FtleAccumulator) -> float:
    if acc.steps < 1:
        raise EmptyAccumulatorError("no non-singular steps accumulated")
    return acc.sum_log / acc.steps


def full_ftle(acc: FtleAccumulator, alpha_0: float, alpha_k: float) -> float:
    """Reduced FTLE minus the boundary term ``(1/k) ln|sin a_k / sin a_0|``."""
    s0, sk = math.sin(alpha_0), math.sin(alpha_k)
    if s0 == 0.0 or sk == 0.0:
        raise HorizontalTangentError("horizontal tangent at an end of the window")
    lam = reduced_ftle(acc)
    return lam - math.log(abs(sk / s0)) / acc.steps


def boundary_term(psi_0: float, psi_k: float, k: int) -> float:
    """``(1/k) ln|sin a_k / sin a_0|`` written in terms of the slopes."""
    return (math.log(math.hypot(1.0, psi_0)) - math.log(math.hypot(1.0, psi_k))) / k


class TangentRecord(NamedTuple):
    step: int
    x: float
    y: float
    psi: float
    sigma: int
    eta: float
    lam1: float
    log_kappa: float
    singular: bool


def _require_mcmillan(m: MapModel) -> None:
    if not m.is_mcmillan:
        raise ParameterError("scalar tangent engine needs a McMillan map; use oseledets.mobius")


def _unpack(seed: TangentState) -> tuple[float, float, float, bool, float, float]:
    if seed.carry is None:
        return float(seed.psi), float(seed.sigma), float(seed.eta), False, 0.0, 0.0
    return float(seed.psi), float(seed.sigma), float(seed.eta), True, seed.carry[0], seed.carry[1]


def _pack(psi, sigma, eta, guard, pending, num, den) -> TangentState:
    return TangentState(
        psi=psi,
        sigma=1 if sigma > 0 else -1,
        eta=eta,
        singular=abs(psi) < guard,
        carry=(num, den) if pending else None,
    )


def evolve_tangent(
    start: Sequence[float],
    seed: TangentState,
    m: MapModel,
    steps: int,
    sink: Callable[[TangentRecord], None] | None = None,
    guard: float = SINGULAR_GUARD,
    first_index: int = 0,
) -> tuple[PlanarPoint, TangentState, FtleAccumulator]:
    """Step point and tangent state together, one sample at a time.

    Sample ``n`` pairs ``(x_n, y_n)`` with ``psi_n``; it is reported to
    ``sink`` before the step to ``n + 1``.  Returns the point and state after
    ``steps`` steps, ready to be passed back in to continue the run.
    """
    _require_mcmillan(m)
    if steps < 1:
        raise ParameterError("steps must be at least 1")
    p = m.wrap(float(start[0]), float(start[1]))
    psi, sigma, eta, pending, num, den = _unpack(seed)
    acc = FtleAccumulator()
    fp, fpp = m.fprime, m.fsecond
    for n in range(steps):
        if psi == 0.0 and guard <= 0.0:
            raise SingularStepError(f"psi is exactly zero at step {first_index + n}")
        x = p.x
        psi1, sigma1, eta1, flag, pending, num, den = advance(
            psi, sigma, eta, fp(x), fpp(x), guard, pending, num, den
        )
        acc.add(psi, flag)
        if sink is not None:
            sink(
                TangentRecord(
                    first_index + n, x, p.y, psi, int(sigma), eta,
                    one_step_exponent(psi), log_curvature(psi, eta), flag,
                )
            )
        p = m.step(p)
        if not (math.isfinite(p.x) and math.isfinite(p.y)):
            raise DivergenceError(f"orbit left the finite plane at step {first_index + n + 1}")
        psi, sigma, eta = psi1, sigma1, eta1
    return p, _pack(psi, sigma, eta, guard, pending, num, den), acc


@dataclass
class TangentSeries:
    """Arrays of samples ``0 .. n-1`` from a bulk run, plus the state after it."""

    x: np.ndarray
    y: np.ndarray
    fprime: np.ndarray
    fsecond: np.ndarray
    psi: np.ndarray
    sigma: np.ndarray
    eta: np.ndarray
    singular: np.ndarray
    end_point: PlanarPoint
    end_state: TangentState
    first_index: int = 0
    _lam1: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.psi.shape[0]

    @property
    def lam1(self) -> np.ndarray:
        if self._lam1 is None:
            with np.errstate(divide="ignore"):
                self._lam1 = np.log(np.abs(self.psi))
        return self._lam1

    @property
    def log_kappa(self) -> np.ndarray:
        return log_curvature_array(self.psi, self.eta)

    @property
    def alpha(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            a = np.arctan(1.0 / self.psi)
        return np.where(a <= -HALF_PI, HALF_PI, a)

    def accumulator(self, skip: int = 0) -> FtleAccumulator:
        good = ~self.singular[skip:]
        lam = self.lam1[skip:]
        return FtleAccumulator(float(np.sum(lam[good])), int(good.sum()), int((~good).sum()))

    def tail(self, skip: int) -> "TangentSeries":
        return TangentSeries(
            self.x[skip:], self.y[skip:], self.fprime[skip:], self.fsecond[skip:],
            self.psi[skip:], self.sigma[skip:], self.eta[skip:], self.singular[skip:],
            self.end_point, self.end_state, self.first_index + skip,
        )


def tangent_series(
    start: Sequence[float],
    m: MapModel,
    steps: int,
    seed: TangentState,
    guard: float = SINGULAR_GUARD,
    first_index: int = 0,
) -> TangentSeries:
    """Bulk version of :func:`evolve_tangent`; same arithmetic, array output."""
    _require_mcmillan(m)
    if steps < 1:
        raise ParameterError("steps must be at least 1")
    xs, ys, fp, fpp, end = orbit_with_derivatives(start, m, steps)
    psi, sigma, eta, pending, num, den = _unpack(seed)
    if guard <= 0.0 and psi == 0.0:
        raise SingularStepError("psi is exactly zero at the first step")
    out = _kernels.forward_tangent(fp, fpp, psi, sigma, eta, guard, pending, num, den)
    psis, sigmas, etas, flags, psi, sigma, eta, pending, num, den = out
    if guard <= 0.0:
        zeros = np.flatnonzero(psis == 0.0)
        if zeros.size:
            raise SingularStepError(f"psi is exactly zero at step {first_index + zeros[0]}")
    return TangentSeries(
        xs, ys, fp, fpp, psis, sigmas.astype(np.int8), etas, flags, end,
        _pack(psi, sigma, eta, guard, pending, num, den), first_index,
    )


def iter_tangent_chunks(
    start: Sequence[float],
    m: MapModel,
    steps: int,
    seed: TangentState,
    chunk: int = 1_000_000,
    guard: float = SINGULAR_GUARD,
) -> Iterator[TangentSeries]:
    """Yield consecutive :class:`TangentSeries` blocks covering ``steps`` samples."""
    if chunk < 1:
        raise ParameterError("chunk must be positive")
    p, state, done = start, seed, 0
    while done < steps:
        n = min(chunk, steps - done)
        block = tangent_series(p, m, n, state, guard, first_index=done)
        yield block
        p, state, done = block.end_point, block.end_state, done + n


def ftle_along(
    start: Sequence[float],
    m: MapModel,
    steps: int,
    seed: TangentState,
    transient: int = 0,
    chunk: int = 1_000_000,
) -> tuple[float, FtleAccumulator]:
    """Reduced FTLE over ``steps`` samples, ignoring the first ``transient``."""
    acc = FtleAccumulator()
    for block in iter_tangent_chunks(start, m, steps, seed, chunk):
        skip = max(0, transient - block.first_index)
        if skip < len(block):
            acc = acc.merge(block.accumulator(skip))
    return reduced_ftle(acc), acc
