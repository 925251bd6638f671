"""Streaming histograms, phase-space fields and ensemble decay fits.

All accumulators hold integer counters or plain sums so that merging
partial results is exact and order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ParameterError

TWO_PI = 2.0 * math.pi
EPS = np.finfo(float).eps

DEFAULT_RANGES = {
    "lam1": (-15.0, 15.0),
    "log_kappa": (-20.0, 20.0),
    "theta": (-0.5 * math.pi, 0.5 * math.pi),
}


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    bins: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.hi > self.lo):
            raise ParameterError(f"bad axis range [{self.lo}, {self.hi}]")
        if self.bins < 1:
            raise ParameterError("an axis needs at least one bin")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bins + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def locate(self, v: np.ndarray) -> np.ndarray:
        """Bin index, ``-1`` below range, ``bins`` above; the top edge is inclusive."""
        v = np.asarray(v, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            idx = np.floor((v - self.lo) * (self.bins / (self.hi - self.lo)))
        idx = np.where(v == self.hi, self.bins - 1, idx)
        idx = np.clip(idx, -1, self.bins)
        idx = np.where(v < self.lo, -1, np.where(v > self.hi, self.bins, idx))
        return np.nan_to_num(idx, nan=-2).astype(np.int64)


# bucket codes per axis
_UNDER, _OVER, _NONFINITE = 0, 1, 2


@dataclass
class HistogramGrid:
    """1D or 2D histogram with per-axis underflow, overflow and non-finite buckets.

    A sample lands in exactly one counter: the first axis holding a
    non-finite value claims it, otherwise the first out-of-range axis,
    otherwise the in-range bin.
    """

    axes: tuple[Axis, ...]
    counts: np.ndarray = None
    buckets: np.ndarray = None
    total: int = 0

    def __post_init__(self) -> None:
        self.axes = tuple(self.axes)
        if len(self.axes) not in (1, 2):
            raise ParameterError("histograms are 1D or 2D")
        shape = tuple(a.bins for a in self.axes)
        if self.counts is None:
            self.counts = np.zeros(shape, dtype=np.uint64)
        if self.buckets is None:
            self.buckets = np.zeros((len(self.axes), 3), dtype=np.uint64)

    @classmethod
    def one(cls, lo: float, hi: float, bins: int = 1000) -> "HistogramGrid":
        return cls((Axis(lo, hi, bins),))

    @classmethod
    def two(cls, xr: tuple[float, float], yr: tuple[float, float], bins: int | tuple[int, int] = 1000):
        bx, by = (bins, bins) if isinstance(bins, int) else bins
        return cls((Axis(xr[0], xr[1], bx), Axis(yr[0], yr[1], by)))

    @property
    def dims(self) -> int:
        return len(self.axes)

    def empty_like(self) -> "HistogramGrid":
        return HistogramGrid(self.axes)

    def accumulate(self, sample) -> "HistogramGrid":
        vals = np.atleast_1d(np.asarray(sample, dtype=float))
        if vals.shape != (self.dims,):
            raise ParameterError(f"sample arity {vals.shape} does not match {self.dims}D histogram")
        return self.add(*[vals[i : i + 1] for i in range(self.dims)])

    def add(self, *columns: np.ndarray) -> "HistogramGrid":
        """Add many samples at once, one array per axis."""
        if len(columns) != self.dims:
            raise ParameterError(f"expected {self.dims} columns")
        cols = [np.asarray(c, dtype=float).ravel() for c in columns]
        n = cols[0].shape[0]
        if any(c.shape[0] != n for c in cols):
            raise ParameterError("columns differ in length")
        if n == 0:
            return self
        idx = [a.locate(c) for a, c in zip(self.axes, cols)]
        claimed = np.zeros(n, dtype=bool)
        for d, i in enumerate(idx):
            nf = (i == -2) | ~np.isfinite(cols[d])
            nf &= ~claimed
            self.buckets[d, _NONFINITE] += np.uint64(nf.sum())
            claimed |= nf
        for d, (i, a) in enumerate(zip(idx, self.axes)):
            under = (i == -1) & ~claimed
            claimed |= under
            over = (i == a.bins) & ~claimed
            claimed |= over
            self.buckets[d, _UNDER] += np.uint64(under.sum())
            self.buckets[d, _OVER] += np.uint64(over.sum())
        keep = ~claimed
        if self.dims == 1:
            flat = idx[0][keep]
        else:
            flat = idx[0][keep] * self.axes[1].bins + idx[1][keep]
        self.counts += np.bincount(flat, minlength=self.counts.size).reshape(self.counts.shape).astype(
            np.uint64
        )
        self.total += n
        return self

    def merge(self, other: "HistogramGrid") -> "HistogramGrid":
        if self.axes != other.axes:
            raise ParameterError("cannot merge histograms with different axes")
        return HistogramGrid(self.axes, self.counts + other.counts, self.buckets + other.buckets,
                             self.total + other.total)

    __add__ = merge

    def counter_sum(self) -> int:
        return int(self.counts.sum(dtype=np.uint64)) + int(self.buckets.sum(dtype=np.uint64))

    def underflow(self, axis: int = 0) -> int:
        return int(self.buckets[axis, _UNDER])

    def overflow(self, axis: int = 0) -> int:
        return int(self.buckets[axis, _OVER])

    def nonfinite(self, axis: int = 0) -> int:
        return int(self.buckets[axis, _NONFINITE])

    def density(self) -> np.ndarray:
        """In-range counts normalized to unit total mass."""
        c = self.counts.astype(float)
        s = c.sum()
        return c / s if s > 0 else c

    def fraction(self, lo: float | None = None, hi: float | None = None) -> float:
        """Share of all samples with value in ``[lo, hi)`` (1D; bins by center,
        under/overflow included for open ends)."""
        if self.dims != 1:
            raise ParameterError("fraction() is defined for 1D histograms")
        if self.total == 0:
            return math.nan
        c = self.axes[0].centers
        sel = np.ones(c.shape, dtype=bool)
        if lo is not None:
            sel &= c >= lo
        if hi is not None:
            sel &= c < hi
        mass = int(self.counts[sel].sum(dtype=np.uint64))
        if lo is None or lo <= self.axes[0].lo:
            mass += self.underflow()
        if hi is None or hi > self.axes[0].hi:
            mass += self.overflow()
        return mass / self.total


def l1_distance(a: HistogramGrid, b: HistogramGrid) -> float:
    """L1 distance between the normalized in-range distributions."""
    if a.axes != b.axes:
        raise ParameterError("histograms must share axes")
    return float(np.abs(a.density() - b.density()).sum())


@dataclass
class ConditionalSplit:
    positive: HistogramGrid
    negative: HistogramGrid
    zero: HistogramGrid

    def merge(self, other: "ConditionalSplit") -> "ConditionalSplit":
        return ConditionalSplit(self.positive + other.positive, self.negative + other.negative,
                                self.zero + other.zero)

    def unconditional(self) -> HistogramGrid:
        return self.positive + self.negative + self.zero


def conditional_split(lam1: np.ndarray, values, template: HistogramGrid) -> ConditionalSplit:
    """Route samples by the sign of ``lam1``; zero or NaN goes to ``zero``.

    ``values`` is one array for a 1D template or a tuple of two arrays.
    """
    lam1 = np.asarray(lam1, dtype=float).ravel()
    cols = (values,) if template.dims == 1 else tuple(values)
    cols = [np.asarray(c, dtype=float).ravel() for c in cols]
    pos, neg = lam1 > 0.0, lam1 < 0.0
    zero = ~(pos | neg)
    out = ConditionalSplit(template.empty_like(), template.empty_like(), template.empty_like())
    for h, sel in ((out.positive, pos), (out.negative, neg), (out.zero, zero)):
        h.add(*[c[sel] for c in cols])
    return out


@dataclass
class PhaseField:
    """Per-cell sums and counts of a scalar over the square ``[0, 2 pi)^2``."""

    cells: int
    sums: np.ndarray = None
    counts: np.ndarray = None
    nonfinite: int = 0
    extent: float = TWO_PI

    def __post_init__(self) -> None:
        if self.cells < 1:
            raise ParameterError("grid needs at least one cell")
        if self.sums is None:
            self.sums = np.zeros((self.cells, self.cells))
        if self.counts is None:
            self.counts = np.zeros((self.cells, self.cells), dtype=np.int64)

    def _index(self, v: np.ndarray) -> np.ndarray:
        i = np.floor(v * (self.cells / self.extent)).astype(np.int64)
        return np.clip(i, 0, self.cells - 1)

    def add(self, x: np.ndarray, y: np.ndarray, values: np.ndarray) -> "PhaseField":
        x, y, v = (np.asarray(a, dtype=float).ravel() for a in (x, y, values))
        ok = np.isfinite(v) & np.isfinite(x) & np.isfinite(y)
        self.nonfinite += int((~ok).sum())
        flat = self._index(x[ok]) * self.cells + self._index(y[ok])
        size = self.cells * self.cells
        self.sums += np.bincount(flat, weights=v[ok], minlength=size).reshape(self.sums.shape)
        self.counts += np.bincount(flat, minlength=size).reshape(self.counts.shape)
        return self

    def merge(self, other: "PhaseField") -> "PhaseField":
        if other.cells != self.cells or other.extent != self.extent:
            raise ParameterError("fields differ in geometry")
        return PhaseField(self.cells, self.sums + other.sums, self.counts + other.counts,
                          self.nonfinite + other.nonfinite, self.extent)

    @property
    def empty(self) -> np.ndarray:
        return self.counts == 0

    @property
    def mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.empty, np.nan, self.sums / np.maximum(self.counts, 1))


def phase_field(x, y, values, cells: int = 1000) -> PhaseField:
    return PhaseField(cells).add(x, y, values)


# ---------------------------------------------------------------- decay fits


@dataclass(frozen=True)
class RateFit:
    model: str  # "exponential" or "power"
    rate: float
    intercept: float
    residual: float
    points: int


def rate_fit(t: Sequence[float], values: Sequence[float], model: str = "exponential") -> RateFit:
    """Least-squares slope of ``log(values)`` against ``t`` or ``log t``.

    The window is cut at the first non-positive value.  ``residual`` is the
    RMS misfit in natural-log units.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape:
        raise ParameterError("t and values differ in shape")
    bad = np.flatnonzero(~(v > 0.0) | ~np.isfinite(v))
    if bad.size:
        t, v = t[: bad[0]], v[: bad[0]]
    if model == "power":
        keep = t > 0
        t, v = t[keep], v[keep]
    if t.size < 5:
        raise ParameterError(f"fit window has {t.size} usable points, need at least 5")
    if model == "exponential":
        u = t
    elif model == "power":
        u = np.log(t)
    else:
        raise ParameterError(f"unknown model {model!r}")
    lv = np.log(v)
    A = np.vstack([u, np.ones_like(u)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, lv, rcond=None)
    resid = float(np.sqrt(np.mean((A @ np.array([slope, icpt]) - lv) ** 2)))
    return RateFit(model, float(slope), float(icpt), resid, int(t.size))


def best_fit(t, values, points: int | None = None) -> RateFit:
    """Fit both models and keep the one with the smaller residual.

    With ``points`` set, both fits use that many log-spaced samples so that a
    long algebraic tail does not swamp the early decades.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if points is not None and t.size > points and t[0] > 0:
        sel = np.unique(np.searchsorted(t, np.geomspace(t[0], t[-1], points)).clip(0, t.size - 1))
        t, v = t[sel], v[sel]
    fits = [rate_fit(t, v, "exponential"), rate_fit(t, v, "power")]
    return min(fits, key=lambda f: f.residual)


@dataclass
class DecaySeries:
    """Ensemble spread of ``psi`` or ``eta`` along a fixed orbit.

    ``variances`` holds the geometric mean over restarts of the per-step
    sample variance; ``spread`` is its square root, the typical perturbation
    amplitude, and is what the decay fit uses.
    """

    quantity: str
    t: np.ndarray
    variances: np.ndarray
    window: tuple[int, int]
    fit: RateFit | None
    members: int
    restarts: int
    initial_variance: float = math.nan
    per_restart: np.ndarray | None = field(default=None, repr=False)

    @property
    def spread(self) -> np.ndarray:
        return np.sqrt(self.variances)

    @property
    def rate(self) -> float:
        return self.fit.rate if self.fit is not None else math.nan


UNDERFLOW_FLOOR = 1e-30


def _restart(job) -> tuple[np.ndarray, float]:
    fp, fpp, shared_psi, members, child, floor_factor = job
    steps = fp.shape[0]
    rng = np.random.Generator(np.random.Philox(child))
    half = math.sqrt(3.0)
    if shared_psi is None:
        psi = rng.uniform(-half, half, members)
        eta = np.zeros(members)
    else:
        psi = np.full(members, shared_psi)
        eta = rng.uniform(-half, half, members)
    var, scale = _kernels.ensemble_variances(fp, fpp, psi, eta, shared_psi is not None)
    floor = np.maximum((floor_factor * EPS * np.maximum(scale, 1.0)) ** 2, UNDERFLOW_FLOOR)
    hit = np.flatnonzero(~(var > floor))
    # the first sub-floor value is still well above round-off, keep it
    stop = int(hit[0]) if hit.size else steps
    row = np.full(steps + 1, np.nan)
    row[: stop + 1] = 0.5 * np.log(var[: stop + 1])
    return row, float(var[0])


def ensemble_decay(
    fprime: np.ndarray,
    fsecond: np.ndarray,
    members: int,
    quantity: str,
    steps: int,
    seed: int | np.random.SeedSequence = 0,
    restarts: int = 1,
    lead: int = 100,
    model: str = "auto",
    fit_points: int | None = None,
    floor_factor: float = 1e3,
    min_alive: float = 0.5,
    workers: int = 1,
) -> DecaySeries:
    """Variance decay of an ensemble driven by one orbit.

    Restart ``r`` starts a fresh ensemble at orbit index ``lead + r * steps``
    and runs it for ``steps`` steps.  Slope seeds are uniform on
    ``[-sqrt 3, sqrt 3]`` (unit variance).  For the curvature all members
    share the orbit's converged slope and differ only in ``eta_0``, which
    isolates the curvature's own convergence from the slope's.

    A restart stops contributing once its variance falls below the
    round-off floor ``(floor_factor * eps * max(1, mean|v|))^2`` (or
    ``1e-30``).  The pooled curve is the running sum of per-step increments
    of ``log(spread)`` averaged over the restarts still active at that step;
    because activity depends only on the past, early stoppers do not bias
    the later increments.  Pooling ends when fewer than ``min_alive`` of the
    restarts remain.  The fit window then opens where the pooled variance
    first drops below half its initial value.
    """
    if quantity not in ("psi", "eta"):
        raise ParameterError("quantity is 'psi' or 'eta'")
    if members < 100:
        raise ParameterError("ensemble needs at least 100 members")
    if restarts < 1 or steps < 1 or lead < 0:
        raise ParameterError("steps and restarts must be positive")
    fp = np.ascontiguousarray(fprime, dtype=float)
    fpp = np.ascontiguousarray(fsecond, dtype=float)
    need = lead + restarts * steps
    if fp.shape[0] < need or fpp.shape[0] < need:
        raise ParameterError(f"orbit holds {fp.shape[0]} points, need {need}")
    slopes = _kernels.forward_slopes(fp[:need], 1.0) if quantity == "eta" else None
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    jobs = []
    for r, child in enumerate(root.spawn(restarts)):
        s0 = lead + r * steps
        seg = slice(s0, s0 + steps)
        shared = None if slopes is None else float(slopes[s0])
        jobs.append((fp[seg], fpp[seg], shared, members, child, floor_factor))
    if workers > 1 and restarts > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_restart, jobs, chunksize=max(1, restarts // (4 * workers))))
    else:
        rows = [_restart(j) for j in jobs]
    logs = np.vstack([r[0] for r in rows])
    init = np.array([r[1] for r in rows])
    inc = np.diff(logs, axis=1)
    active = np.isfinite(inc)
    share = active.mean(axis=0)
    n_inc = int(np.argmax(share < min_alive)) if np.any(share < min_alive) else steps
    with np.errstate(invalid="ignore"):
        mean_inc = np.nanmean(inc[:, :n_inc], axis=0) if n_inc else np.empty(0)
    curve = np.concatenate([[np.mean(logs[:, 0])], np.mean(logs[:, 0]) + np.cumsum(mean_inc)])
    stop = curve.shape[0]
    variances = np.full(steps + 1, np.nan)
    variances[:stop] = np.exp(2.0 * curve)
    t = np.arange(steps + 1, dtype=float)
    below = np.flatnonzero(curve < curve[0] + 0.5 * math.log(0.5))
    begin = int(below[0]) if below.size else stop
    window = (begin, stop)
    fit = None
    if stop - begin >= 5:
        tw, sw = t[begin:stop], np.sqrt(variances[begin:stop])
        fit = best_fit(tw, sw, fit_points) if model == "auto" else rate_fit(tw, sw, model)
    return DecaySeries(quantity, t, variances, window, fit, members, restarts,
                       float(np.mean(init)), 2.0 * logs)
