"""Planar maps: the McMillan standard-like family and generic C2 maps.

A McMillan map acts as ``(x, y) -> (f(x) - y, x)``.  Its Jacobian depends on
``x`` only, has unit determinant, and the swap ``X(x, y) = (y, x)``
conjugates the map to its inverse.  The Chirikov-Taylor map is the member
``f(x) = 2x + K sin x`` taken on the 2-torus.

Generic maps supply their image, Jacobian entries ``A, B, C, D`` and the
gradients of those entries explicitly, which is what the Moebius engine in
:mod:`oseledets.mobius` consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.optimize import bisect

from . import _kernels
from ._kernels import wrap as wrap_angle
from .errors import DivergenceError, DomainError, ParameterError

TWO_PI = 2.0 * math.pi

# |trace/2| within this distance of 1 is reported as parabolic.
PARABOLIC_TOL = 1e-10


class PlanarPoint(NamedTuple):
    x: float
    y: float


def wrap_array(v: np.ndarray) -> np.ndarray:
    """Elementwise :func:`wrap_angle`."""
    r = np.fmod(v, TWO_PI)
    r = np.where(r < 0.0, r + TWO_PI, r)
    return np.where(r >= TWO_PI, r - TWO_PI, r)


def _check_finite(x: float, y: float) -> None:
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DomainError(f"non-finite coordinates ({x!r}, {y!r})")


@dataclass(frozen=True)
class MapModel:
    """Immutable description of a planar map.

    For ``family == "mcmillan"`` the scalar callables ``f``, ``fprime`` and
    ``fsecond`` are required.  For ``family == "generic"`` the map is given
    by ``image`` (and optionally ``inverse``), ``entries`` returning the
    Jacobian ``(A, B, C, D)`` and ``gradients`` returning the four gradient
    pairs ``((A_x, A_y), (B_x, B_y), (C_x, C_y), (D_x, D_y))``.
    """

    name: str
    family: str
    geometry: str = "torus"
    params: Mapping[str, float] = field(default_factory=dict)
    f: Callable[[float], float] | None = None
    fprime: Callable[[float], float] | None = None
    fsecond: Callable[[float], float] | None = None
    f_vec: Callable[[np.ndarray], np.ndarray] | None = None
    fprime_vec: Callable[[np.ndarray], np.ndarray] | None = None
    fsecond_vec: Callable[[np.ndarray], np.ndarray] | None = None
    image: Callable[[float, float], tuple[float, float]] | None = None
    inverse: Callable[[float, float], tuple[float, float]] | None = None
    entries: Callable[[float, float], tuple[float, float, float, float]] | None = None
    gradients: Callable[[float, float], tuple] | None = None
    # name of a compiled orbit kernel, if one exists for this map
    kernel: str | None = None

    def __post_init__(self) -> None:
        if self.family not in ("mcmillan", "generic"):
            raise ParameterError(f"unknown map family {self.family!r}")
        if self.geometry not in ("torus", "plane"):
            raise ParameterError(f"unknown geometry {self.geometry!r}")
        if self.family == "mcmillan" and None in (self.f, self.fprime, self.fsecond):
            raise ParameterError("McMillan maps need f, fprime and fsecond")
        if self.family == "generic" and None in (self.image, self.entries, self.gradients):
            raise ParameterError("generic maps need image, entries and gradients")

    @property
    def is_mcmillan(self) -> bool:
        return self.family == "mcmillan"

    @property
    def on_torus(self) -> bool:
        return self.geometry == "torus"

    def wrap(self, x: float, y: float) -> PlanarPoint:
        if self.on_torus:
            return PlanarPoint(wrap_angle(x), wrap_angle(y))
        return PlanarPoint(x, y)

    def step(self, p: Sequence[float]) -> PlanarPoint:
        if self.is_mcmillan:
            return mcmillan_step(p, self)
        x, y = float(p[0]), float(p[1])
        _check_finite(x, y)
        return self.wrap(*self.image(x, y))

    def inverse_step(self, p: Sequence[float]) -> PlanarPoint:
        if self.is_mcmillan:
            return mcmillan_inverse_step(p, self)
        if self.inverse is None:
            raise ParameterError(f"map {self.name!r} has no inverse")
        x, y = float(p[0]), float(p[1])
        _check_finite(x, y)
        return self.wrap(*self.inverse(x, y))

    def jacobian_entries(self, x: float, y: float) -> tuple[float, float, float, float]:
        if self.is_mcmillan:
            return (self.fprime(x), -1.0, 1.0, 0.0)
        return tuple(float(v) for v in self.entries(x, y))

    def jacobian_gradients(self, x: float, y: float) -> tuple:
        if self.is_mcmillan:
            return ((self.fsecond(x), 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0))
        return tuple((float(g[0]), float(g[1])) for g in self.gradients(x, y))

    def fprime_array(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self.fprime_vec is not None:
            return self.fprime_vec(xs)
        return np.vectorize(self.fprime, otypes=[float])(xs)

    def fsecond_array(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self.fsecond_vec is not None:
            return self.fsecond_vec(xs)
        return np.vectorize(self.fsecond, otypes=[float])(xs)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "family": self.family,
            "geometry": self.geometry,
            "params": dict(self.params),
        }


def chirikov_taylor(K: float, geometry: str = "torus") -> MapModel:
    """Chirikov-Taylor map in the ``(x, y)`` representation."""
    K = float(K)
    if not math.isfinite(K):
        raise ParameterError("K must be finite")

    def f(x: float) -> float:
        return 2.0 * x + K * math.sin(x)

    def fp(x: float) -> float:
        return 2.0 + K * math.cos(x)

    def fpp(x: float) -> float:
        return -K * math.sin(x)

    return MapModel(
        name="ct",
        family="mcmillan",
        geometry=geometry,
        params={"K": K},
        f=f,
        fprime=fp,
        fsecond=fpp,
        f_vec=lambda xs: 2.0 * xs + K * np.sin(xs),
        fprime_vec=lambda xs: 2.0 + K * np.cos(xs),
        fsecond_vec=lambda xs: -K * np.sin(xs),
        kernel="ct",
    )


def mcmillan(
    f: Callable[[float], float],
    fprime: Callable[[float], float],
    fsecond: Callable[[float], float],
    *,
    name: str = "mcmillan",
    geometry: str = "plane",
    params: Mapping[str, float] | None = None,
    f_vec: Callable | None = None,
    fprime_vec: Callable | None = None,
    fsecond_vec: Callable | None = None,
) -> MapModel:
    return MapModel(
        name=name,
        family="mcmillan",
        geometry=geometry,
        params=dict(params or {}),
        f=f,
        fprime=fprime,
        fsecond=fsecond,
        f_vec=f_vec,
        fprime_vec=fprime_vec,
        fsecond_vec=fsecond_vec,
    )


def generic_map(
    image: Callable[[float, float], tuple[float, float]],
    entries: Callable[[float, float], tuple[float, float, float, float]],
    gradients: Callable[[float, float], tuple],
    *,
    inverse: Callable[[float, float], tuple[float, float]] | None = None,
    name: str = "generic",
    geometry: str = "plane",
    params: Mapping[str, float] | None = None,
) -> MapModel:
    return MapModel(
        name=name,
        family="generic",
        geometry=geometry,
        params=dict(params or {}),
        image=image,
        inverse=inverse,
        entries=entries,
        gradients=gradients,
    )


def mcmillan_from_expression(
    expr: str, params: Mapping[str, float] | None = None, geometry: str = "torus"
) -> MapModel:
    """Build a McMillan map from a SymPy-parsable expression ``f(x)``.

    Derivatives are taken symbolically, so ``f'`` and ``f''`` are exact.
    """
    import sympy as sp

    params = dict(params or {})
    x = sp.Symbol("x")
    local = {k: sp.Float(v) for k, v in params.items()}
    local["x"] = x
    try:
        fx = sp.sympify(expr, locals=local)
    except (sp.SympifyError, TypeError) as exc:
        raise ParameterError(f"cannot parse f(x) = {expr!r}: {exc}") from None
    extra = fx.free_symbols - {x}
    if extra:
        raise ParameterError(f"unbound symbols in f(x): {sorted(map(str, extra))}")
    d1, d2 = sp.diff(fx, x), sp.diff(fx, x, 2)
    scalar = [sp.lambdify(x, e, "math") for e in (fx, d1, d2)]
    vector = [sp.lambdify(x, e, "numpy") for e in (fx, d1, d2)]

    def vec(fn):
        return lambda xs: np.broadcast_to(np.asarray(fn(xs), dtype=float), np.shape(xs)).copy()

    return mcmillan(
        lambda u: float(scalar[0](u)),
        lambda u: float(scalar[1](u)),
        lambda u: float(scalar[2](u)),
        name="mcmillan-custom",
        geometry=geometry,
        params={**params, "f": expr},
        f_vec=vec(vector[0]),
        fprime_vec=vec(vector[1]),
        fsecond_vec=vec(vector[2]),
    )


def generic_from_expressions(
    fx: str, fy: str, params: Mapping[str, float] | None = None, geometry: str = "plane"
) -> MapModel:
    """Build a generic C2 map ``(x, y) -> (fx, fy)`` from SymPy expressions."""
    import sympy as sp

    params = dict(params or {})
    x, y = sp.symbols("x y")
    local = {k: sp.Float(v) for k, v in params.items()}
    local.update(x=x, y=y)
    try:
        comps = [sp.sympify(e, locals=local) for e in (fx, fy)]
    except (sp.SympifyError, TypeError) as exc:
        raise ParameterError(f"cannot parse map components: {exc}") from None
    for c in comps:
        extra = c.free_symbols - {x, y}
        if extra:
            raise ParameterError(f"unbound symbols in map: {sorted(map(str, extra))}")
    jac = [sp.diff(comps[0], x), sp.diff(comps[0], y), sp.diff(comps[1], x), sp.diff(comps[1], y)]
    grads = [(sp.diff(e, x), sp.diff(e, y)) for e in jac]
    img = sp.lambdify((x, y), comps, "math")
    ent = sp.lambdify((x, y), jac, "math")
    grd = sp.lambdify((x, y), grads, "math")
    return generic_map(
        lambda u, v: tuple(float(c) for c in img(u, v)),
        lambda u, v: tuple(float(c) for c in ent(u, v)),
        lambda u, v: grd(u, v),
        name="generic",
        geometry=geometry,
        params={**params, "fx": fx, "fy": fy},
    )


def _require_mcmillan(m: MapModel) -> None:
    if not m.is_mcmillan:
        raise ParameterError(f"map {m.name!r} is not of McMillan form")


def mcmillan_step(p: Sequence[float], m: MapModel) -> PlanarPoint:
    """Forward image ``(f(x) - y, x)``, wrapped on the torus."""
    _require_mcmillan(m)
    x, y = float(p[0]), float(p[1])
    _check_finite(x, y)
    if m.on_torus:
        return PlanarPoint(wrap_angle(m.f(x) - y), wrap_angle(x))
    return PlanarPoint(m.f(x) - y, x)


def mcmillan_inverse_step(p: Sequence[float], m: MapModel) -> PlanarPoint:
    """Preimage ``(y, f(y) - x)``, wrapped on the torus."""
    _require_mcmillan(m)
    x, y = float(p[0]), float(p[1])
    _check_finite(x, y)
    if m.on_torus:
        return PlanarPoint(wrap_angle(y), wrap_angle(m.f(y) - x))
    return PlanarPoint(y, m.f(y) - x)


def reflect(p: Sequence[float]) -> PlanarPoint:
    """The reversing involution, reflection about the diagonal."""
    return PlanarPoint(float(p[1]), float(p[0]))


REFLECTION = np.array([[0.0, 1.0], [1.0, 0.0]])


def jacobian(p: Sequence[float], m: MapModel) -> tuple[np.ndarray, float]:
    """Jacobian matrix at ``p`` and its determinant."""
    a, b, c, d = m.jacobian_entries(float(p[0]), float(p[1]))
    return np.array([[a, b], [c, d]]), a * d - b * c


def jacobian_product(p: Sequence[float], m: MapModel, k: int) -> np.ndarray:
    """Tangent cocycle ``F^k(p)``; negative ``k`` uses the inverse map."""
    F = np.eye(2)
    q = PlanarPoint(float(p[0]), float(p[1]))
    if k >= 0:
        for _ in range(k):
            J, _ = jacobian(q, m)
            F = J @ F
            q = m.step(q)
    else:
        for _ in range(-k):
            q = m.inverse_step(q)
            J, _ = jacobian(q, m)
            if m.is_mcmillan:
                Jinv = REFLECTION @ J @ REFLECTION
            else:
                Jinv = np.linalg.inv(J)
            F = Jinv @ F
    return F


@dataclass(frozen=True)
class FixedPointReport:
    location: PlanarPoint
    trace: float
    kind: str  # "hyperbolic" | "parabolic" | "elliptic"
    chi_plus: complex | float
    chi_minus: complex | float
    psi_plus: float | None
    psi_minus: float | None
    lyapunov: float

    @classmethod
    def from_trace(cls, location: Sequence[float], trace: float) -> "FixedPointReport":
        kind, cp, cm = fixed_point_spectrum(trace)
        if kind == "elliptic":
            slopes = (None, None)
            lam = 0.0
        else:
            slopes = (cp, cm)
            lam = math.log(abs(cp))
        return cls(PlanarPoint(*map(float, location)), float(trace), kind, cp, cm, *slopes, lam)


def fixed_point_spectrum(trace: float) -> tuple[str, complex | float, complex | float]:
    """Classify an area-preserving fixed point by ``trace = f'(x*)``.

    Returns the kind and the eigenvalues ``chi_+, chi_-`` with
    ``chi_+ * chi_- = 1``.  Real eigenvalues carry the sign of the trace.
    """
    h = abs(trace / 2.0)
    s = 1.0 if trace >= 0 else -1.0
    if abs(h - 1.0) <= PARABOLIC_TOL:
        return "parabolic", s, s
    if h > 1.0:
        mu = math.acosh(h)
        return "hyperbolic", s * math.exp(mu), s * math.exp(-mu)
    w = math.acos(h)
    return "elliptic", s * complex(math.cos(w), math.sin(w)), s * complex(math.cos(w), -math.sin(w))


def fixed_points(
    m: MapModel, resolution: int = 10_000, bounds: tuple[float, float] | None = None
) -> list[FixedPointReport]:
    """Locate the fixed points of a McMillan map on the diagonal.

    The force ``F(x) = f(x) - 2x`` must vanish, modulo 2*pi on the torus.
    Transversal roots are bracketed on a uniform scan and bisected; roots
    where ``F`` only touches a lattice value are found among the critical
    points of ``F``.
    """
    _require_mcmillan(m)
    if resolution < 2:
        raise ParameterError("resolution must be at least 2")
    if bounds is None:
        if not m.on_torus:
            raise ParameterError("plane geometry requires explicit scan bounds")
        bounds = (0.0, TWO_PI)
    lo, hi = map(float, bounds)
    period = TWO_PI if m.on_torus else None

    def force(x: float) -> float:
        return m.f(x) - 2.0 * x

    grid = np.linspace(lo, hi, resolution + 1)
    F = np.array([force(x) for x in grid])
    lattice = [0]
    if period is not None:
        lattice = range(int(math.floor(F.min() / period)), int(math.ceil(F.max() / period)) + 1)

    candidates: list[float] = []
    for k in lattice:
        shift = k * period if period is not None else 0.0
        G = F - shift
        for i in range(resolution):
            g0, g1 = G[i], G[i + 1]
            if g0 == 0.0:
                candidates.append(grid[i])
            elif g0 * g1 < 0.0:
                candidates.append(
                    bisect(lambda u: force(u) - shift, grid[i], grid[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps)
                )
        if G[-1] == 0.0:
            candidates.append(grid[-1])

    # tangential contacts: critical points of F sitting on a lattice value
    dF = np.array([m.fprime(x) - 2.0 for x in grid])
    for i in range(resolution):
        if dF[i] == 0.0 or dF[i] * dF[i + 1] < 0.0:
            xc = grid[i] if dF[i] == 0.0 else bisect(
                lambda u: m.fprime(u) - 2.0, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps
            )
            val = force(xc)
            if period is not None:
                val -= period * round(val / period)
            if abs(val) < 1e-10:
                candidates.append(xc)

    found: list[float] = []
    for x in sorted(wrap_angle(c) if period is not None else c for c in candidates):
        if period is not None and x > TWO_PI - 1e-9:
            x = 0.0
        if all(_separation(x, y, period) > 1e-9 for y in found):
            found.append(x)
    found.sort()
    return [FixedPointReport.from_trace((x, x), m.fprime(x)) for x in found]


def _separation(a: float, b: float, period: float | None) -> float:
    d = abs(a - b)
    if period is not None:
        d = min(d, period - d)
    return d


def orbit_with_derivatives(
    p: Sequence[float], m: MapModel, n: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, PlanarPoint]:
    """Orbit ``x_0 .. x_{n-1}`` of a McMillan map with ``f'`` and ``f''`` along it.

    Also returns the point reached after ``n`` steps.  The Chirikov-Taylor map
    runs in a compiled loop; other maps fall back to the scalar callables.
    """
    _require_mcmillan(m)
    if n < 0:
        raise ParameterError("orbit length must be non-negative")
    x0, y0 = float(p[0]), float(p[1])
    _check_finite(x0, y0)
    x0, y0 = m.wrap(x0, y0)
    if m.kernel == "ct":
        xs, ys, fp, fpp, x, y = _kernels.ct_orbit(x0, y0, m.params["K"], n, m.on_torus)
        return xs, ys, fp, fpp, PlanarPoint(x, y)
    xs, ys, fp, fpp = (np.empty(n) for _ in range(4))
    q = PlanarPoint(x0, y0)
    for i in range(n):
        xs[i], ys[i] = q
        fp[i] = m.fprime(q.x)
        fpp[i] = m.fsecond(q.x)
        q = mcmillan_step(q, m)
        if not (math.isfinite(q.x) and math.isfinite(q.y)):
            raise DivergenceError(f"orbit left the finite plane at step {i + 1}")
    return xs, ys, fp, fpp, q


def orbit(p: Sequence[float], m: MapModel, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Points ``(x_k, y_k)`` for ``k < n``; any map family."""
    if m.is_mcmillan:
        xs, ys, *_ = orbit_with_derivatives(p, m, n)
        return xs, ys
    xs, ys = np.empty(n), np.empty(n)
    q = m.wrap(float(p[0]), float(p[1]))
    for i in range(n):
        xs[i], ys[i] = q
        q = m.step(q)
        if not (math.isfinite(q.x) and math.isfinite(q.y)):
            raise DivergenceError(f"orbit left the finite plane at step {i + 1}")
    return xs, ys
