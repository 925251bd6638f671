"""Compiled inner loops.

The single-step update ``advance`` is plain Python so the per-step driver in
:mod:`oseledets.tangent` can call it directly; the array kernels call its
jitted twin.  Both therefore perform the same floating-point operations in
the same order, which keeps bulk runs bit-identical to the driver.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
NAN = math.nan
INF = math.inf


def wrap(v):
    r = math.fmod(v, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    if r >= TWO_PI:
        r -= TWO_PI
    return r


def recip(v):
    # IEEE extended reals: 1/(+-0) = +-inf
    if v == 0.0:
        return math.copysign(INF, v)
    return 1.0 / v


def advance(psi, sigma, eta, fp, fpp, guard, pending, num, den):
    """One step of the slope / orientation / curvature recursions.

    Returns ``(psi', sigma', eta', flagged, pending', num', den')`` where
    ``flagged`` marks the *current* sample as singular.  A slope below
    ``guard`` is stepped in extended arithmetic and the curvature update is
    deferred: the next step applies the fused two-step form
    ``eta'' = f''_1 + (f''_0 psi^3 + eta) / (f'_0 psi - 1)^3``, which stays
    finite as ``psi -> 0``.
    """
    r = math.copysign(INF, psi) if psi == 0.0 else 1.0 / psi
    psi1 = fp - r
    sigma1 = sigma * math.copysign(1.0, psi)
    if abs(psi) < guard:
        return psi1, sigma1, NAN, True, True, fpp * psi * psi * psi + eta, fp * psi - 1.0
    if pending:
        return psi1, sigma1, fpp + num / (den * den * den), True, False, 0.0, 0.0
    return psi1, sigma1, fpp + eta / (psi * psi * psi), False, False, 0.0, 0.0


@njit(cache=True)
def _wrap(v):
    # np.fmod lowers to C fmod, which is exact, so this matches ``wrap``
    r = np.fmod(v, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    if r >= TWO_PI:
        r -= TWO_PI
    return r



_recip = njit(cache=True)(recip)
_advance = njit(cache=True, error_model="numpy")(advance)


@njit(cache=True)
def ct_orbit(x, y, K, n, torus):
    """Chirikov-Taylor orbit plus ``f'`` and ``f''`` along it."""
    xs = np.empty(n)
    ys = np.empty(n)
    fp = np.empty(n)
    fpp = np.empty(n)
    for i in range(n):
        xs[i] = x
        ys[i] = y
        s = math.sin(x)
        fpp[i] = -K * s
        xn = 2.0 * x + K * s - y
        if torus:
            xn = _wrap(xn)
        y = x
        x = xn
    # cos in its own loop: next to sin, LLVM merges the two into sincos,
    # which is not bit-identical to separate libm calls
    for i in range(n):
        fp[i] = 2.0 + K * math.cos(xs[i])
    return xs, ys, fp, fpp, x, y


@njit(cache=True, error_model="numpy")
def forward_tangent(fp, fpp, psi, sigma, eta, guard, pending, num, den):
    n = fp.shape[0]
    psis = np.empty(n)
    sigmas = np.empty(n)
    etas = np.empty(n)
    flags = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        psis[i] = psi
        sigmas[i] = sigma
        etas[i] = eta
        psi, sigma, eta, flag, pending, num, den = _advance(
            psi, sigma, eta, fp[i], fpp[i], guard, pending, num, den
        )
        flags[i] = flag
    return psis, sigmas, etas, flags, psi, sigma, eta, pending, num, den


@njit(cache=True, error_model="numpy")
def forward_slopes(fp, psi):
    """Slope recursion only, returning ``n + 1`` values."""
    n = fp.shape[0]
    out = np.empty(n + 1)
    out[0] = psi
    for i in range(n):
        out[i + 1] = fp[i] - _recip(out[i])
    return out


@njit(cache=True, error_model="numpy")
def backward_slopes(fp, seed, guard):
    """Stable-slope sweep ``psi_n = 1 / (f'(x_n) - psi_{n+1})`` from the end."""
    n = fp.shape[0]
    out = np.empty(n)
    flags = np.zeros(n, dtype=np.bool_)
    out[n - 1] = seed
    for i in range(n - 2, -1, -1):
        d = fp[i] - out[i + 1]
        if abs(d) < guard:
            flags[i] = True
            if i > 0:
                flags[i - 1] = True
        out[i] = _recip(d)
    return out, flags


@njit(cache=True, error_model="numpy")
def ensemble_step(psi, eta, fp, fpp):
    """Advance every ensemble member one step along a shared orbit point."""
    for j in range(psi.shape[0]):
        p = psi[j]
        eta[j] = fpp + eta[j] / (p * p * p)
        psi[j] = fp - _recip(p)


@njit(cache=True, error_model="numpy")
def ensemble_variances(fp, fpp, psi, eta, track_eta):
    """Run every member along one orbit segment; variance of the tracked
    quantity at steps ``0 .. n`` plus the mean absolute value at each step."""
    n = fp.shape[0]
    var = np.empty(n + 1)
    scale = np.empty(n + 1)
    for i in range(n + 1):
        v = eta if track_eta else psi
        var[i] = np.var(v)
        scale[i] = np.mean(np.abs(v))
        if i == n:
            break
        ensemble_step(psi, eta, fp[i], fpp[i])
    return var, scale
