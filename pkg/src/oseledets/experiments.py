"""Experiment runners behind the command-line subcommands.

Each runner takes an :class:`~oseledets.config.ExperimentConfig`, writes
CSV files plus one JSON sidecar into ``cfg.out`` and returns a
:class:`RunResult`.  Runs are deterministic: every random draw comes from a
Philox stream keyed by ``cfg.seed``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from . import __version__
from . import io as csvio
from . import oracles
from .approx import cf_slopes, fprime_sup, series_weight_bound
from .config import ExperimentConfig, dump_config
from .errors import ParameterError
from .maps import fixed_points
from .mobius import classify_convergence, general_series, iter_general_chunks
from .splitting import backward_slope_sweep, grid_split_field, split_blocks, splitting_angle, splitting_angles
from .stats import (
    DEFAULT_RANGES,
    HistogramGrid,
    PhaseField,
    conditional_split,
    ensemble_decay,
    l1_distance,
)
from .tangent import (
    FtleAccumulator,
    TangentState,
    boundary_term,
    default_seed,
    evolve_tangent,
    full_ftle,
    iter_tangent_chunks,
    log_curvature_array,
    reduced_ftle,
    tangent_series,
    transient_length,
)

PILOT_STEPS = 10_000
QUARTER_PI = 0.25 * math.pi


@dataclass
class RunResult:
    command: str
    out: Path
    files: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    ok: bool = True


def rng_for(cfg: ExperimentConfig, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(cfg.seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def tangent_seed(cfg: ExperimentConfig) -> TangentState:
    return default_seed(rng_for(cfg, 0))


def resolve_transient(cfg: ExperimentConfig, m, start, seed) -> tuple[int, float | None]:
    """Configured transient, or ``max(100, ceil(30/lambda))`` from a pilot run."""
    if cfg.transient is not None:
        return cfg.transient, None
    if not m.is_mcmillan:
        return 100, None
    n = min(PILOT_STEPS, max(cfg.steps, 200))
    lam = tangent_series(start, m, n, seed).accumulator(100).value
    return transient_length(lam), lam


def _prepare(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sidecar(cfg: ExperimentConfig, res: RunResult, extra: dict) -> None:
    payload = {
        "tool": "oseledets",
        "version": __version__,
        "command": res.command,
        "config": cfg.echo(),
        "files": res.files,
        **extra,
    }
    name = f"{res.command}.json"
    csvio.write_sidecar(res.out / name, payload)
    (res.out / f"{res.command}.config").write_text(dump_config(cfg), encoding="utf-8", newline="\n")
    res.files += [name, f"{res.command}.config"]


def _require_mcmillan(m, what: str) -> None:
    if not m.is_mcmillan:
        raise ParameterError(f"{what} needs a McMillan map (map.family ct or mcmillan-custom)")


# ------------------------------------------------------------------ orbit


def _blocks(cfg: ExperimentConfig, m, start, seed, steps: int) -> Iterator:
    if cfg.engine == "scalar":
        _require_mcmillan(m, "the scalar engine")
        return iter_tangent_chunks(start, m, steps, seed, cfg.chunk)
    return iter_general_chunks(start, m, steps, seed, min(cfg.chunk, 100_000))


ORBIT_HEADER = ["step", "x", "y", "psi", "sigma", "eta", "lam1", "log_kappa", "singular"]


def run_orbit(cfg: ExperimentConfig) -> RunResult:
    m = cfg.build_map()
    out = _prepare(cfg)
    res = RunResult("orbit", out)
    start = (cfg.x0, cfg.y0)
    seed = tangent_seed(cfg)
    transient, pilot = resolve_transient(cfg, m, start, seed)
    path = out / "orbit.csv"
    kept = FtleAccumulator()
    whole = FtleAccumulator()
    rows = 0
    first = True
    last = None
    for b in _blocks(cfg, m, start, seed, cfg.steps):
        idx = b.first_index + np.arange(len(b))
        lam1 = b.lam1
        good = ~b.singular
        whole = whole.merge(FtleAccumulator(float(np.sum(lam1[good])), int(good.sum()), int((~good).sum())))
        after = good & (idx >= transient)
        kept = kept.merge(FtleAccumulator(float(np.sum(lam1[after])), int(after.sum()),
                                          int((~good & (idx >= transient)).sum())))
        sel = idx % cfg.stride == 0
        cols = [idx[sel], b.x[sel], b.y[sel], b.psi[sel], b.sigma[sel].astype(np.int64), b.eta[sel],
                lam1[sel], log_curvature_array(b.psi, b.eta)[sel], b.singular[sel]]
        rows += csvio.write_csv(path, ORBIT_HEADER, cols, append=not first)
        first = False
        last = b
    res.files.append("orbit.csv")
    alpha0 = seed.alpha
    alphak = last.end_state.alpha
    summary = {
        "ftle": reduced_ftle(kept) if kept.steps else None,
        "ftle_all_steps": reduced_ftle(whole) if whole.steps else None,
        "ftle_full": full_ftle(whole, alpha0, alphak) if whole.steps else None,
        "boundary_term": boundary_term(seed.psi, last.end_state.psi, whole.steps) if whole.steps else None,
        "steps": cfg.steps,
        "rows_written": rows,
        "transient": transient,
        "dropped_transient": min(transient, cfg.steps),
        "pilot_ftle": pilot,
        "singular_events": whole.singular_events,
        "seed_psi": seed.psi,
        "engine": cfg.engine,
        "end_point": list(last.end_point),
    }
    res.summary = summary
    _sidecar(cfg, res, {"results": summary, "map": m.describe()})
    return res


# ------------------------------------------------------------------ field / joint / split


def _split_stream(cfg: ExperimentConfig, m, start, seed, transient: int):
    return split_blocks(start, m, cfg.steps, seed, transient, cfg.chunk, min(cfg.overlap, cfg.chunk))


def _transient_info(cfg, m, start, seed) -> tuple[int, dict]:
    transient, pilot = resolve_transient(cfg, m, start, seed)
    return transient, {"transient": transient, "pilot_ftle": pilot}


def run_field(cfg: ExperimentConfig) -> RunResult:
    m = cfg.build_map()
    _require_mcmillan(m, "field")
    if not m.on_torus:
        raise ParameterError("field needs torus geometry")
    out = _prepare(cfg)
    res = RunResult("field", out)
    start, seed = (cfg.x0, cfg.y0), tangent_seed(cfg)
    transient, info = _transient_info(cfg, m, start, seed)
    fields = {q: PhaseField(cfg.grid) for q in ("lam1", "log_kappa", "theta")}
    kept = dropped = 0
    for b in _split_stream(cfg, m, start, seed, transient):
        v = b.valid
        kept += int(v.sum())
        dropped += int((~v).sum())
        for q, arr in (("lam1", b.lam1), ("log_kappa", b.log_kappa), ("theta", b.theta)):
            fields[q].add(b.x[v], b.y[v], arr[v])
    ii, jj = np.meshgrid(np.arange(cfg.grid), np.arange(cfg.grid), indexing="ij")
    meta = {}
    for q, f in fields.items():
        name = f"field_{q}.csv"
        csvio.write_csv(out / name, ["i", "j", "mean", "count"],
                        [ii.ravel(), jj.ravel(), f.mean.ravel(), f.counts.ravel()])
        res.files.append(name)
        meta[q] = {"empty_cells": int(f.empty.sum()), "nonfinite": f.nonfinite}
    res.summary = {"samples": kept, "excluded": dropped, "cells": cfg.grid, "fields": meta, **info}
    _sidecar(cfg, res, {"results": res.summary, "map": m.describe(),
                        "grid": {"cells": cfg.grid, "extent": [0.0, 2 * math.pi]}})
    return res


JOINT_PAIRS = (("lam1", "log_kappa"), ("theta", "log_kappa"), ("lam1", "theta"))


def joint_statistics(blocks, bins: int):
    """Joint and sign-conditional histograms of ``lam1``, ``log_kappa`` and ``theta``."""
    joints = {p: HistogramGrid.two(DEFAULT_RANGES[p[0]], DEFAULT_RANGES[p[1]], bins) for p in JOINT_PAIRS}
    cond = {q: None for q in ("log_kappa", "theta")}
    samples = 0
    for b in blocks:
        v = b.valid
        samples += int(v.sum())
        data = {"lam1": b.lam1[v], "log_kappa": b.log_kappa[v], "theta": b.theta[v]}
        for p, h in joints.items():
            h.add(data[p[0]], data[p[1]])
        for q in cond:
            part = conditional_split(data["lam1"], data[q], HistogramGrid.one(*DEFAULT_RANGES[q], bins))
            cond[q] = part if cond[q] is None else cond[q].merge(part)
    return joints, cond, samples


def conditional_masses(cond) -> dict:
    lk, th = cond["log_kappa"], cond["theta"]

    def wide(h):
        return h.fraction(lo=QUARTER_PI) + h.fraction(hi=-QUARTER_PI)

    return {
        "log_kappa_below_-1": {"positive": lk.positive.fraction(hi=-1.0), "negative": lk.negative.fraction(hi=-1.0)},
        "abs_theta_above_pi/4": {"positive": wide(th.positive), "negative": wide(th.negative)},
        "counts": {"positive": lk.positive.total, "negative": lk.negative.total, "zero": lk.zero.total},
    }


def run_joint(cfg: ExperimentConfig) -> RunResult:
    m = cfg.build_map()
    _require_mcmillan(m, "joint")
    out = _prepare(cfg)
    res = RunResult("joint", out)
    start, seed = (cfg.x0, cfg.y0), tangent_seed(cfg)
    transient, info = _transient_info(cfg, m, start, seed)
    joints, cond, samples = joint_statistics(_split_stream(cfg, m, start, seed, transient), cfg.bins)
    meta = {}
    for (a, b), h in joints.items():
        name = f"joint_{a}_{b}.csv"
        header, cols = csvio.histogram_2d_columns(h)
        csvio.write_csv(out / name, header, cols)
        res.files.append(name)
        meta[name] = csvio.histogram_meta(h)
    for q, part in cond.items():
        for sign in ("positive", "negative"):
            h = getattr(part, sign)
            name = f"hist_{q}_{sign}.csv"
            header, cols = csvio.histogram_1d_columns(h)
            csvio.write_csv(out / name, header, cols)
            res.files.append(name)
            meta[name] = csvio.histogram_meta(h)
    res.summary = {"samples": samples, "masses": conditional_masses(cond), **info}
    _sidecar(cfg, res, {"results": res.summary, "histograms": meta, "map": m.describe()})
    return res


def split_statistics(blocks, cells: int, bins: int):
    """Direct and transposed-grid splitting angle distributions."""
    direct = HistogramGrid.one(*DEFAULT_RANGES["theta"], bins)
    psi_field = PhaseField(cells)
    for b in blocks:
        v = b.valid
        direct.add(b.theta[v])
        psi_field.add(b.x[v], b.y[v], b.psi_plus[v])
    grid = grid_split_field(psi_field.mean, psi_field.empty)
    weights = np.where(grid.empty, 0, psi_field.counts)
    via_grid = HistogramGrid.one(*DEFAULT_RANGES["theta"], bins)
    via_grid.add(np.repeat(np.nan_to_num(grid.theta).ravel(), weights.ravel()))
    return direct, via_grid, grid, psi_field


def run_split(cfg: ExperimentConfig) -> RunResult:
    m = cfg.build_map()
    _require_mcmillan(m, "split")
    out = _prepare(cfg)
    res = RunResult("split", out)
    start, seed = (cfg.x0, cfg.y0), tangent_seed(cfg)
    transient, info = _transient_info(cfg, m, start, seed)
    direct, via_grid, grid, psi_field = split_statistics(
        _split_stream(cfg, m, start, seed, transient), cfg.grid, cfg.bins
    )
    csvio.write_matrix(out / "theta_grid.csv", grid.theta)
    csvio.write_matrix(out / "theta_grid_counts.csv", psi_field.counts)
    for name, h in (("hist_theta_direct.csv", direct), ("hist_theta_grid.csv", via_grid)):
        header, cols = csvio.histogram_1d_columns(h)
        csvio.write_csv(out / name, header, cols)
    res.files += ["theta_grid.csv", "theta_grid_counts.csv", "hist_theta_direct.csv", "hist_theta_grid.csv"]
    res.summary = {
        "samples": direct.total,
        "l1_direct_vs_grid": l1_distance(direct, via_grid),
        "empty_cells": int(grid.empty.sum()),
        "tangency_cells": int(grid.tangency.sum()),
        **info,
    }
    mask = ["".join("1" if e else "0" for e in row) for row in grid.empty]
    _sidecar(cfg, res, {
        "results": res.summary,
        "map": m.describe(),
        "grid": {"cells": cfg.grid, "extent": [0.0, 2 * math.pi], "row_axis": "x", "col_axis": "y",
                 "sample_counts_file": "theta_grid_counts.csv", "total_samples": int(psi_field.counts.sum()),
                 "empty_mask": mask},
        "histograms": {"direct": csvio.histogram_meta(direct), "grid": csvio.histogram_meta(via_grid)},
    })
    return res


# ------------------------------------------------------------------ converge


def run_converge(cfg: ExperimentConfig) -> RunResult:
    m = cfg.build_map()
    _require_mcmillan(m, "converge")
    out = _prepare(cfg)
    res = RunResult("converge", out)
    lead = 100 if cfg.transient is None else max(cfg.transient, 1)
    n = lead + cfg.restarts * cfg.steps
    branch = tangent_series((cfg.x0, cfg.y0), m, n, TangentState(1.0))
    lam = branch.accumulator(min(lead, n - 1)).value
    results = {"lyapunov_estimate": lam, "lead": lead, "convergence": _conv(lam)}
    quantities = ("psi", "eta") if cfg.quantity == "both" else (cfg.quantity,)
    for i, q in enumerate(quantities):
        d = ensemble_decay(branch.fprime, branch.fsecond, cfg.ensemble, q, cfg.steps,
                           np.random.SeedSequence(cfg.seed, spawn_key=(1, i)), cfg.restarts, lead,
                           fit_points=200 if cfg.steps > 1000 else None, workers=cfg.workers)
        name = f"decay_{q}.csv"
        csvio.write_csv(out / name, ["t", "variance", "spread"], [d.t, d.variances, d.spread])
        res.files.append(name)
        results[q] = {
            "window": list(d.window),
            "model": d.fit.model if d.fit else None,
            "rate": d.rate if d.fit else None,
            "rate_over_lyapunov": (d.rate / lam) if (d.fit and lam > 0) else None,
            "residual": d.fit.residual if d.fit else None,
            "initial_variance": d.initial_variance,
        }
    res.summary = results
    _sidecar(cfg, res, {"results": results, "map": m.describe(),
                        "ensemble": {"members": cfg.ensemble, "restarts": cfg.restarts, "steps": cfg.steps}})
    return res


def _conv(lam: float) -> dict | None:
    if not lam > 0:
        return None
    c = classify_convergence(lam, -lam)
    return {"psi_rate": c.psi_rate, "eta_rate": c.eta_rate_plus}


# ------------------------------------------------------------------ approx


def approximant_statistics(m, x, y, psi_plus, theta_exact, order: int, bins: int):
    """Errors and splitting-angle distributions of the continued-fraction approximants."""
    stats = []
    table = {}
    exact = HistogramGrid.one(*DEFAULT_RANGES["theta"], bins).add(theta_exact)
    for N in range(order + 1):
        fwd, bad_f = cf_slopes(x, y, m, N)
        swp, bad_s = cf_slopes(y, x, m, N)
        with np.errstate(divide="ignore"):
            theta = splitting_angles(fwd, 1.0 / swp)
        ok = ~(bad_f | bad_s)
        h = HistogramGrid.one(*DEFAULT_RANGES["theta"], bins).add(theta[ok])
        err = np.abs(fwd - psi_plus)
        table[N] = (fwd, err)
        stats.append({
            "order": N,
            "median_abs_error": float(np.nanmedian(err)),
            "l1_theta": l1_distance(h, exact),
            "singular": int((~ok).sum()),
        })
    return stats, table


def run_approx(cfg: ExperimentConfig) -> RunResult:
    m = cfg.build_map()
    _require_mcmillan(m, "approx")
    out = _prepare(cfg)
    res = RunResult("approx", out)
    start, seed = (cfg.x0, cfg.y0), tangent_seed(cfg)
    transient, info = _transient_info(cfg, m, start, seed)
    xs, ys, pp, th = [], [], [], []
    for b in _split_stream(cfg, m, start, seed, transient):
        v = b.valid
        xs.append(b.x[v]); ys.append(b.y[v]); pp.append(b.psi_plus[v]); th.append(b.theta[v])
    x, y, psi_plus, theta = (np.concatenate(a) for a in (xs, ys, pp, th))
    stats, table = approximant_statistics(m, x, y, psi_plus, theta, cfg.order, cfg.bins)
    sel = np.arange(0, x.shape[0], cfg.stride)
    header = ["x", "y", "psi_exact"] + [f"psi_{N}" for N in table] + [f"err_{N}" for N in table]
    cols = [x[sel], y[sel], psi_plus[sel]] + [table[N][0][sel] for N in table] + [table[N][1][sel] for N in table]
    csvio.write_csv(out / "approx.csv", header, cols)
    res.files.append("approx.csv")
    lam = FtleAccumulator(float(np.sum(np.log(np.abs(psi_plus)))), psi_plus.shape[0]).value
    sup = fprime_sup(m)
    bounds = [series_weight_bound(lam, N, sup) if lam > 0 else None for N in range(cfg.order + 1)]
    res.summary = {"samples": int(x.shape[0]), "orders": stats, "lyapunov_estimate": lam,
                   "fprime_max": sup, "series_weight_bound": bounds, **info}
    _sidecar(cfg, res, {"results": res.summary, "map": m.describe()})
    return res


# ------------------------------------------------------------------ fixed points


def run_fixedpoints(cfg: ExperimentConfig) -> RunResult:
    m = cfg.build_map()
    _require_mcmillan(m, "fixedpoints")
    out = _prepare(cfg)
    res = RunResult("fixedpoints", out)
    reports = fixed_points(m)
    rows = []
    for r in reports:
        theta = splitting_angle(r.psi_plus, r.psi_minus) if r.kind == "hyperbolic" else math.nan
        cp, cm = r.chi_plus, r.chi_minus
        rows.append([r.location.x, r.location.y, r.trace, r.kind,
                     cp.real if isinstance(cp, complex) else cp, cp.imag if isinstance(cp, complex) else 0.0,
                     cm.real if isinstance(cm, complex) else cm, cm.imag if isinstance(cm, complex) else 0.0,
                     r.lyapunov, math.nan if r.psi_plus is None else r.psi_plus,
                     math.nan if r.psi_minus is None else r.psi_minus, theta])
    header = ["x", "y", "trace", "kind", "chi_plus_re", "chi_plus_im", "chi_minus_re", "chi_minus_im",
              "lyapunov", "psi_plus", "psi_minus", "theta"]
    csvio.write_rows(out / "fixedpoints.csv", header, rows)
    res.files.append("fixedpoints.csv")
    res.summary = {"count": len(reports), "kinds": [r.kind for r in reports]}
    _sidecar(cfg, res, {"results": res.summary, "map": m.describe()})
    return res


# ------------------------------------------------------------------ verify


@dataclass
class Check:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def verification_checks(cfg: ExperimentConfig) -> list[Check]:
    m = cfg.build_map()
    start = (cfg.x0, cfg.y0)
    seed = tangent_seed(cfg)
    k = 1000
    checks = []
    g = general_series(start, m, k, seed)
    full = g.accumulator().value - boundary_term(seed.psi, g.end_state.psi, k)
    ref = oracles.benettin_ftle(start, m, k, seed.vector())
    checks.append(Check("full_ftle_vs_benettin", _rel(full, ref), 1e-10))
    if not m.is_mcmillan:
        return checks
    s = tangent_series(start, m, 10_000, seed)
    gg = general_series(start, m, 10_000, seed)
    worst = max(float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)))
                for a, b in ((s.psi, gg.psi), (s.eta, gg.eta), (s.sigma.astype(float), gg.sigma.astype(float))))
    checks.append(Check("general_vs_scalar_engine", worst, 1e-12))
    warm = 200
    n = 2 * warm + 100
    ser = tangent_series(start, m, n, seed)
    back = backward_slope_sweep(ser, m, 0.0, warm)
    dp = dm = 0.0
    for i in range(warm, warm + 100, 10):
        cp, cm = oracles.clv_directions((ser.x[i], ser.y[i]), m, warm)
        dp = max(dp, abs(cp - ser.psi[i]) / max(1.0, abs(cp)))
        dm = max(dm, abs(cm - back.psi_minus[i]) / max(1.0, abs(cm)))
    checks.append(Check("clv_unstable_slope", dp, 1e-8))
    checks.append(Check("clv_stable_slope", dm, 1e-8))
    return checks


def run_verify(cfg: ExperimentConfig) -> RunResult:
    out = _prepare(cfg)
    res = RunResult("verify", out)
    checks = verification_checks(cfg)
    csvio.write_rows(out / "verify.csv", ["check", "value", "tolerance", "passed"],
                     [[c.name, c.value, c.tolerance, c.passed] for c in checks])
    res.files.append("verify.csv")
    res.ok = all(c.passed for c in checks)
    res.summary = {c.name: {"value": c.value, "tolerance": c.tolerance, "passed": c.passed} for c in checks}
    _sidecar(cfg, res, {"results": res.summary, "all_passed": res.ok})
    return res


RUNNERS: dict[str, Callable[[ExperimentConfig], RunResult]] = {
    "orbit": run_orbit,
    "field": run_field,
    "joint": run_joint,
    "split": run_split,
    "converge": run_converge,
    "approx": run_approx,
    "fixedpoints": run_fixedpoints,
    "verify": run_verify,
}
