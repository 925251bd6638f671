"""Moebius evolution of slope and curvature for arbitrary C2 planar maps.

With Jacobian ``[[A, B], [C, D]]`` and ``gamma = C psi + D`` the slope moves
by the Moebius transformation ``psi' = (A psi + B) / gamma`` and the
curvature auxiliary by

    eta' = (det J * eta + a + b psi + c psi^2) / gamma^3

where ``a, b, c`` are directional derivatives of entry combinations along
``v = (psi, 1)``.  For the McMillan entries ``(f', -1, 1, 0)`` this collapses
to the scalar recursions of :mod:`oseledets.tangent`.

Both updates are evaluated in partial-fraction form around the pole
``psi = -D/C`` whenever ``|C psi| >= |D|``::

    psi' = A/C - det J / (C gamma)
    eta' = e3 + e2/gamma + e1/gamma^2 + e0/gamma^3

This avoids the cancellation in ``A psi + B`` near ``psi' = 0`` and, for
McMillan maps, performs exactly the floating-point operations of the scalar
engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import (
    DivergenceError,
    EmptyAccumulatorError,
    ParameterError,
    SingularStepError,
)
from .maps import MapModel, PlanarPoint
from .tangent import (
    SINGULAR_GUARD,
    FtleAccumulator,
    TangentState,
    log_curvature,
    log_curvature_array,
)

Vec2 = tuple[float, float]
_ZERO: Vec2 = (0.0, 0.0)
NAN = math.nan


@dataclass(frozen=True)
class MobiusStepInput:
    """Jacobian entries, their gradients and the determinant at one orbit point."""

    A: float
    B: float
    C: float
    D: float
    gradA: Vec2 = _ZERO
    gradB: Vec2 = _ZERO
    gradC: Vec2 = _ZERO
    gradD: Vec2 = _ZERO
    detJ: float | None = None

    def __post_init__(self) -> None:
        det = self.A * self.D - self.B * self.C
        if self.detJ is None:
            object.__setattr__(self, "detJ", det)
        elif abs(self.detJ - det) > 1e-12 * max(1.0, abs(det)):
            raise ParameterError(f"detJ={self.detJ!r} disagrees with AD - BC = {det!r}")

    @classmethod
    def mcmillan(cls, fprime: float, fsecond: float) -> "MobiusStepInput":
        return cls(fprime, -1.0, 1.0, 0.0, (fsecond, 0.0), detJ=1.0)

    @classmethod
    def at(cls, m: MapModel, x: float, y: float) -> "MobiusStepInput":
        A, B, C, D = m.jacobian_entries(x, y)
        gA, gB, gC, gD = m.jacobian_gradients(x, y)
        if m.is_mcmillan:
            return cls(A, B, C, D, gA, gB, gC, gD, detJ=1.0)
        return cls(A, B, C, D, gA, gB, gC, gD)

    def matrix(self) -> np.ndarray:
        return np.array([[self.A, self.B], [self.C, self.D]])

    def cubic(self) -> tuple[float, float, float, float]:
        """Coefficients ``(n3, n2, n1, n0)`` of ``a + b psi + c psi^2`` as a cubic in ``psi``."""
        A, B, C, D = self.A, self.B, self.C, self.D
        (Ax, Ay), (Bx, By), (Cx, Cy), (Dx, Dy) = self.gradA, self.gradB, self.gradC, self.gradD
        a1, a0 = D * Bx - B * Dx, D * By - B * Dy
        b1 = D * Ax - A * Dx + C * Bx - B * Cx
        b0 = D * Ay - A * Dy + C * By - B * Cy
        c1, c0 = C * Ax - A * Cx, C * Ay - A * Cy
        return c1, c0 + b1, b0 + a1, a0

    def coefficients(self, psi: float) -> tuple[float, float, float]:
        """The ``(a, b, c)`` of the curvature update at slope ``psi``."""
        A, B, C, D = self.A, self.B, self.C, self.D
        (Ax, Ay), (Bx, By), (Cx, Cy), (Dx, Dy) = self.gradA, self.gradB, self.gradC, self.gradD
        a = psi * (D * Bx - B * Dx) + (D * By - B * Dy)
        b = psi * (D * Ax - A * Dx + C * Bx - B * Cx) + (D * Ay - A * Dy + C * By - B * Cy)
        c = psi * (C * Ax - A * Cx) + (C * Ay - A * Cy)
        return a, b, c


def gamma(psi: float, C: float, D: float) -> float:
    return C * psi + D


def _pole_form(psi: float, j: MobiusStepInput) -> bool:
    return j.C != 0.0 and abs(j.C * psi) >= abs(j.D)


def _slope(psi: float, g: float, j: MobiusStepInput) -> float:
    if _pole_form(psi, j):
        q = j.C * g
        r = math.copysign(math.inf, q) if q == 0.0 else j.detJ / q
        return j.A / j.C - r
    return (j.A * psi + j.B) / g


def _eta_parts(psi: float, g: float, j: MobiusStepInput) -> tuple[float, float]:
    """Returns ``(head, e0, g3)`` with ``eta' = head + (e0 + det J * eta) / g3``."""
    n3, n2, n1, n0 = j.cubic()
    if _pole_form(psi, j):
        C = j.C
        p0 = -j.D / C
        e3 = n3 / (C * C * C)
        e2 = (3.0 * n3 * p0 + n2) / (C * C)
        e1 = ((3.0 * n3 * p0 + 2.0 * n2) * p0 + n1) / C
        e0 = ((n3 * p0 + n2) * p0 + n1) * p0 + n0
        g3 = g * g * g
        return (e3 + e2 / g) + e1 / (g * g), e0, g3
    g3 = g * g * g
    return 0.0, ((n3 * psi + n2) * psi + n1) * psi + n0, g3


def mobius_slope_step(
    psi: float, sigma: int, j: MobiusStepInput, guard: float = SINGULAR_GUARD
) -> tuple[float, int]:
    g = gamma(psi, j.C, j.D)
    if g == 0.0 and guard <= 0.0:
        raise SingularStepError("gamma vanished with the guard disabled")
    s = sigma if math.copysign(1.0, g) > 0 else -sigma
    return _slope(psi, g, j), s


def mobius_eta_step(eta: float, psi: float, j: MobiusStepInput) -> float:
    g = gamma(psi, j.C, j.D)
    if g == 0.0:
        raise SingularStepError("curvature update undefined for gamma = 0")
    head, e0, g3 = _eta_parts(psi, g, j)
    return head + (e0 + j.detJ * eta) / g3


def mobius_ftle(gammas: Iterable[float]) -> float:
    g = np.asarray(list(gammas) if not isinstance(gammas, np.ndarray) else gammas, dtype=float)
    if g.size == 0:
        raise EmptyAccumulatorError("empty gamma sequence")
    if np.any(g == 0.0):
        raise SingularStepError("zero gamma in FTLE average")
    return float(np.mean(np.log(np.abs(g))))


def compose(j1: MobiusStepInput, j2: MobiusStepInput) -> np.ndarray:
    """Matrix of ``j1`` followed by ``j2``."""
    return j2.matrix() @ j1.matrix()


def advance_general(psi, sigma, eta, j: MobiusStepInput, guard, carry):
    """One general step with the singular-step policy of the scalar engine.

    ``carry`` is ``None`` or ``(T0, P0, g0)`` from a preceding singular step,
    where ``T0`` is the curvature numerator and ``P0 / g0`` the slope.  The
    deferred update uses ``gamma_0 * gamma_1 = C_1 P0 + D_1 g0``, which stays
    finite as ``g0 -> 0``.
    Returns ``(psi', sigma', eta', gamma, flagged, carry')``.
    """
    g = gamma(psi, j.C, j.D)
    psi1 = _slope(psi, g, j)
    sigma1 = sigma * math.copysign(1.0, g)
    if abs(g) < guard:
        n3, n2, n1, n0 = j.cubic()
        T = ((n3 * psi + n2) * psi + n1) * psi + n0 + j.detJ * eta
        return psi1, sigma1, NAN, g, True, (T, j.A * psi + j.B, g)
    head, e0, g3 = _eta_parts(psi, g, j)
    if carry is not None:
        T0, P0, g0 = carry
        w = j.C * P0 + j.D * g0
        return psi1, sigma1, (head + e0 / g3) + j.detJ * T0 / (w * w * w), g, True, None
    return psi1, sigma1, head + (e0 + j.detJ * eta) / g3, g, False, None


class GeneralRecord(NamedTuple):
    step: int
    x: float
    y: float
    psi: float
    sigma: int
    eta: float
    gamma: float
    lam1: float
    log_kappa: float
    singular: bool


@dataclass
class GeneralSeries:
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    sigma: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    singular: np.ndarray
    end_point: PlanarPoint
    end_state: TangentState
    first_index: int = 0

    def __len__(self) -> int:
        return self.psi.shape[0]

    @property
    def lam1(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.gamma))

    @property
    def log_kappa(self) -> np.ndarray:
        return log_curvature_array(self.psi, self.eta)

    def accumulator(self, skip: int = 0) -> FtleAccumulator:
        good = ~self.singular[skip:]
        return FtleAccumulator(float(np.sum(self.lam1[skip:][good])), int(good.sum()), int((~good).sum()))


def evolve_general(
    start: Sequence[float],
    seed: TangentState,
    m: MapModel,
    steps: int,
    sink: Callable[[GeneralRecord], None] | None = None,
    guard: float = SINGULAR_GUARD,
    first_index: int = 0,
) -> tuple[PlanarPoint, TangentState, FtleAccumulator]:
    """Per-step driver for any map; the accumulator sums ``ln|gamma|``."""
    if steps < 1:
        raise ParameterError("steps must be at least 1")
    p = m.wrap(float(start[0]), float(start[1]))
    psi, sigma, eta = float(seed.psi), float(seed.sigma), float(seed.eta)
    carry = _carry_in(seed)
    acc = FtleAccumulator()
    for n in range(steps):
        j = MobiusStepInput.at(m, p.x, p.y)
        if guard <= 0.0 and gamma(psi, j.C, j.D) == 0.0:
            raise SingularStepError(f"gamma is exactly zero at step {first_index + n}")
        psi1, sigma1, eta1, g, flag, carry = advance_general(psi, sigma, eta, j, guard, carry)
        acc.add(g, flag)
        if sink is not None:
            lam = math.log(abs(g)) if g != 0.0 else -math.inf
            sink(GeneralRecord(first_index + n, p.x, p.y, psi, int(sigma), eta, g, lam,
                               log_curvature(psi, eta), flag))
        p = m.step(p)
        if not (math.isfinite(p.x) and math.isfinite(p.y)):
            raise DivergenceError(f"orbit left the finite plane at step {first_index + n + 1}")
        psi, sigma, eta = psi1, sigma1, eta1
    return p, _carry_out(psi, sigma, eta, guard, carry), acc


def _carry_in(seed: TangentState):
    # A carry produced by the scalar engine holds (T0, f'psi - 1) for McMillan
    # maps; with g0 = psi_0 lost we store the equivalent triple (T0, P0, 0).
    if seed.carry is None:
        return None
    if len(seed.carry) == 3:
        return tuple(seed.carry)
    T0, den = seed.carry
    return (T0, den, 0.0)


def _carry_out(psi, sigma, eta, guard, carry) -> TangentState:
    return TangentState(
        psi=psi,
        sigma=1 if sigma > 0 else -1,
        eta=eta,
        singular=carry is not None,
        carry=carry,
    )


def general_series(
    start: Sequence[float],
    m: MapModel,
    steps: int,
    seed: TangentState,
    guard: float = SINGULAR_GUARD,
    first_index: int = 0,
) -> GeneralSeries:
    """Array output of :func:`evolve_general`."""
    cols = {k: np.empty(steps) for k in ("x", "y", "psi", "sigma", "eta", "gamma")}
    flags = np.zeros(steps, dtype=bool)

    def sink(r: GeneralRecord) -> None:
        i = r.step - first_index
        cols["x"][i], cols["y"][i], cols["psi"][i] = r.x, r.y, r.psi
        cols["sigma"][i], cols["eta"][i], cols["gamma"][i] = r.sigma, r.eta, r.gamma
        flags[i] = r.singular

    p, state, _ = evolve_general(start, seed, m, steps, sink, guard, first_index)
    return GeneralSeries(cols["x"], cols["y"], cols["psi"], cols["sigma"].astype(np.int8),
                         cols["eta"], cols["gamma"], flags, p, state, first_index)


def iter_general_chunks(
    start: Sequence[float],
    m: MapModel,
    steps: int,
    seed: TangentState,
    chunk: int = 100_000,
    guard: float = SINGULAR_GUARD,
) -> Iterator[GeneralSeries]:
    if chunk < 1:
        raise ParameterError("chunk must be positive")
    p, state, done = start, seed, 0
    while done < steps:
        n = min(chunk, steps - done)
        block = general_series(p, m, n, state, guard, first_index=done)
        yield block
        p, state, done = block.end_point, block.end_state, done + n


@dataclass(frozen=True)
class ConvergenceClass:
    lambda_plus: float
    lambda_minus: float
    kind: str
    psi_rate: float
    eta_rate_plus: float
    eta_rate_minus: float
    psi_converges: bool
    eta_converges_plus: bool
    eta_converges_minus: bool


def classify_convergence(lambda_plus: float, lambda_minus: float) -> ConvergenceClass:
    """Convergence exponents of slope and curvature given the orbit exponents.

    ``eta_rate_plus`` governs the unstable (forward) curvature and
    ``eta_rate_minus`` the stable (backward) one; both are decay rates per
    step in their own time direction, so negative means convergent.
    """
    lp, lm = float(lambda_plus), float(lambda_minus)
    if not (math.isfinite(lp) and math.isfinite(lm)):
        raise ParameterError("exponents must be finite")
    if lp < lm:
        raise ParameterError("need lambda_plus >= lambda_minus")
    if lm < 0.0 < lp:
        kind = "hyperbolic"
    elif lm >= 0.0:
        kind = "purely-expansive"
    else:
        kind = "purely-contractive"
    gap = lp - lm
    psi_rate = -gap
    rate_p = -gap - lp
    rate_m = -gap + lm
    distinct = gap > 0.0
    return ConvergenceClass(
        lambda_plus=lp,
        lambda_minus=lm,
        kind=kind,
        psi_rate=psi_rate,
        eta_rate_plus=rate_p,
        eta_rate_minus=rate_m,
        psi_converges=distinct,
        eta_converges_plus=distinct and rate_p < 0.0,
        eta_converges_minus=distinct and rate_m < 0.0,
    )
