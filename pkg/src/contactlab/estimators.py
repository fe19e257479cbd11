"""Monte Carlo estimators and statistical checks built on the kernel.

Replication ``i`` of every estimator runs on the ensemble seeded by
``child_seed(master_seed, i)``, and results are reduced in replication order,
so outputs do not depend on the number of workers.
"""

from __future__ import annotations

import csv
import logging
import math
import multiprocessing as mp
import time
import warnings
from dataclasses import dataclass, field, fields
from functools import partial
from statistics import NormalDist
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ensemble import EventEnsemble, Params, new_random_ensemble
from .kernel import (
    Configuration,
    SiteSet,
    default_depth,
    instrument_competitions,
    run_coupled,
    superadditivity_check,
)
from .rng import child_seed

log = logging.getLogger(__name__)

EnsembleFn = Callable[[int], EventEnsemble]


class FitError(ValueError):
    pass


class BracketError(ValueError):
    pass


# --------------------------------------------------------------- statistics

def z_value(level: float = 0.95) -> float:
    return NormalDist().inv_cdf(0.5 + level / 2)


def wilson_interval(successes: int, n: int, level: float = 0.95) -> Tuple[float, float]:
    if n < 1:
        raise ValueError("n must be at least 1")
    z = z_value(level)
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return lo, hi


def proportion_se(successes: int, n: int) -> float:
    p = successes / n
    return math.sqrt(p * (1 - p) / n)


def mean_se(values) -> Tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), 0.0
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(v.size))


def pooled_proportion_se(k1: int, n1: int, k2: int, n2: int) -> float:
    p = (k1 + k2) / (n1 + n2)
    return math.sqrt(p * (1 - p) * (1 / n1 + 1 / n2))


@dataclass
class RawTable:
    """Per-replication observables, one row per replication."""

    columns: Tuple[str, ...]
    rows: List[tuple]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_csv_cell(v) for v in row])


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _plain(obj, skip=("raw",)) -> dict:
    return {f.name: _jsonable(getattr(obj, f.name)) for f in fields(obj) if f.name not in skip}


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if hasattr(v, "__dataclass_fields__"):
        return _plain(v)
    return v


@dataclass
class EstimateSummary:
    target: str
    estimate: float
    se: float
    ci: Tuple[float, float]
    n_replications: int
    master_seed: int
    params: dict
    extra: dict = field(default_factory=dict)
    runtime: Optional[float] = None
    raw: Optional[RawTable] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n_replications < 1:
            raise ValueError("n_replications must be at least 1")

    def to_json(self, include_runtime: bool = False) -> dict:
        d = _plain(self, ("raw",) if include_runtime else ("raw", "runtime"))
        d["ci"] = list(self.ci)
        return d


def proportion_summary(target, successes, n, seed, params, level=0.95, **extra):
    return EstimateSummary(target, successes / n, proportion_se(successes, n),
                           wilson_interval(successes, n, level), n, seed, params,
                           dict(successes=int(successes), **extra))


def mean_summary(target, values, seed, params, level=0.95, **extra):
    m, se = mean_se(values)
    z = z_value(level)
    return EstimateSummary(target, m, se, (m - z * se, m + z * se), len(values), seed,
                           params, dict(extra))


@dataclass
class DecayFit:
    """Weighted least-squares fit of ``log p`` against ``x``."""

    x: List[float]
    p_hat: List[float]
    se: List[float]
    counts: List[Optional[int]]
    n_reps: Optional[int]
    log_p: List[Optional[float]]
    log_se: List[Optional[float]]
    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    r_squared: Optional[float]
    excluded: List[dict]
    error: Optional[str] = None
    extra: dict = field(default_factory=dict)
    raw: Optional[RawTable] = field(default=None, repr=False, compare=False)

    @property
    def r_squared_defined(self) -> bool:
        return self.r_squared is not None

    def to_json(self) -> dict:
        d = _plain(self)
        d["r_squared_defined"] = self.r_squared_defined
        return d

    def x_log_p_csv(self) -> str:
        rows = ["x,log_p"]
        for x, lp in zip(self.x, self.log_p):
            if lp is not None:
                rows.append(f"{x!r},{lp!r}")
        return "\n".join(rows) + "\n"


def fit_log_linear(points: Sequence[Tuple[float, float, float]],
                   n_reps: Optional[int] = None,
                   counts: Optional[Sequence[int]] = None) -> DecayFit:
    """Fit ``log p = intercept + slope * x`` with inverse-variance weights.

    Per-point variances of ``log p`` come from the delta method,
    ``(se / p) ** 2``. Points with ``p == 0`` are excluded and listed with a
    rule-of-three upper bound when ``n_reps`` is known. Zero variances are
    floored at the smallest positive one; if all are zero the weights are equal.
    """
    xs = [float(p[0]) for p in points]
    ps = [float(p[1]) for p in points]
    ses = [float(p[2]) for p in points]
    if counts is None:
        counts = [None] * len(points)
    for p, s in zip(ps, ses):
        if not (0 <= p <= 1) or s < 0 or not math.isfinite(s):
            raise ValueError("need 0 <= p <= 1 and finite se >= 0")
    use = [i for i, p in enumerate(ps) if p > 0]
    excluded = [{"x": xs[i], "count": counts[i],
                 "upper_bound": (3.0 / n_reps) if n_reps else None}
                for i, p in enumerate(ps) if p == 0]
    log_p = [math.log(p) if p > 0 else None for p in ps]
    log_se = [s / p if p > 0 else None for p, s in zip(ps, ses)]
    base = dict(x=xs, p_hat=ps, se=ses, counts=list(counts), n_reps=n_reps,
                log_p=log_p, log_se=log_se, excluded=excluded)
    if len(use) < 3:
        raise FitError(f"need at least 3 points with p > 0, have {len(use)}")
    x = np.array([xs[i] for i in use])
    y = np.array([log_p[i] for i in use])
    var = np.array([log_se[i] ** 2 for i in use])
    positive = var[var > 0]
    if positive.size == 0:
        w = np.ones_like(var)
        exact = True
    else:
        w = 1.0 / np.maximum(var, positive.min())
        exact = False
    sw = w.sum()
    xm = float(np.dot(w, x) / sw)
    ym = float(np.dot(w, y) / sw)
    sxx = float(np.dot(w, (x - xm) ** 2))
    if sxx == 0:
        raise FitError("all usable points share one abscissa")
    slope = float(np.dot(w, (x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ss_res = float(np.dot(w, resid ** 2))
    ss_tot = float(np.dot(w, (y - ym) ** 2))
    r2 = None if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    if exact:
        slope_se = intercept_se = 0.0
    else:
        slope_se = 1.0 / math.sqrt(sxx)
        intercept_se = math.sqrt(1.0 / sw + xm * xm / sxx)
    return DecayFit(slope=slope, intercept=intercept, slope_se=slope_se,
                    intercept_se=intercept_se, r_squared=r2, **base)


def _failed_fit(points, n_reps, counts, err) -> DecayFit:
    xs = [float(p[0]) for p in points]
    ps = [float(p[1]) for p in points]
    return DecayFit(x=xs, p_hat=ps, se=[float(p[2]) for p in points], counts=list(counts),
                    n_reps=n_reps, log_p=[math.log(p) if p > 0 else None for p in ps],
                    log_se=[None] * len(ps), slope=math.nan, intercept=math.nan,
                    slope_se=math.nan, intercept_se=math.nan, r_squared=None,
                    excluded=[{"x": x, "count": c, "upper_bound": 3.0 / n_reps}
                              for x, p, c in zip(xs, ps, counts) if p == 0],
                    error=str(err))


def _decay_fit(xs, indicators, groups: int = 20) -> DecayFit:
    """Fit from a ``(n_reps, len(xs))`` 0/1 matrix of per-replication events.

    ``extra["slope_se_jackknife"]`` is a delete-a-group jackknife SE over
    ``groups`` contiguous blocks of replications; unlike the weighted-fit SE it
    accounts for the correlation between points computed from the same runs.
    """
    ind = np.asarray(indicators, dtype=np.int64).reshape(-1, len(xs))
    n_reps = ind.shape[0]
    successes = ind.sum(axis=0)
    points = [(x, k / n_reps, proportion_se(k, n_reps)) for x, k in zip(xs, successes)]
    counts = [int(k) for k in successes]
    try:
        fit = fit_log_linear(points, n_reps, counts)
    except FitError as err:
        return _failed_fit(points, n_reps, counts, err)
    fit.extra["slope_se_jackknife"] = _jackknife_slope_se(xs, ind, groups)
    return fit


def _jackknife_slope_se(xs, ind, groups) -> Optional[float]:
    n = ind.shape[0]
    if n < 2 * groups:
        return None
    edges = np.linspace(0, n, groups + 1).round().astype(int)
    total = ind.sum(axis=0)
    slopes = []
    for a, b in zip(edges[:-1], edges[1:]):
        m = n - (b - a)
        k = total - ind[a:b].sum(axis=0)
        try:
            f = fit_log_linear([(x, c / m, proportion_se(c, m)) for x, c in zip(xs, k)])
        except FitError:
            return None
        slopes.append(f.slope)
    s = np.array(slopes)
    return float(math.sqrt((groups - 1) / groups * np.sum((s - s.mean()) ** 2)))


# ------------------------------------------------------------- replication

_TASK: Optional[Callable] = None


def _run_chunk(bounds):
    a, b = bounds
    return [_TASK(i) for i in range(a, b)]


def replicate(fn: Callable[[int], object], n_reps: int, workers: int = 1,
              start: int = 0) -> list:
    """``[fn(i) for i in range(start, start + n_reps)]``, optionally in parallel.

    Order of the result never depends on ``workers``.
    """
    global _TASK
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    if workers <= 1 or n_reps < 2 * workers:
        return [fn(i) for i in range(start, start + n_reps)]
    n_chunks = 4 * workers
    edges = np.linspace(start, start + n_reps, n_chunks + 1).round().astype(int)
    chunks = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    _TASK = fn
    try:
        with mp.get_context("fork").Pool(workers) as pool:
            parts = pool.map(_run_chunk, chunks)
    finally:
        _TASK = None
    return [r for part in parts for r in part]


def _random_ensembles(params: Params, seed: int, horizon: float) -> EnsembleFn:
    return partial(_random_ensemble, params, seed, horizon)


def _random_ensemble(params, seed, horizon, i):
    return new_random_ensemble(params, child_seed(seed, i), horizon)


def _params_json(params: Params) -> dict:
    return params.as_dict()


# ------------------------------------------------------------- assertions

@dataclass
class Assertion:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class CheckReport:
    target: str
    params: dict
    master_seed: int
    n_replications: int
    values: dict
    assertions: List[Assertion]
    raw: Dict[str, RawTable] = field(default_factory=dict, repr=False, compare=False)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def to_json(self) -> dict:
        return {"target": self.target, "params": self.params, "master_seed": self.master_seed,
                "n_replications": self.n_replications, "values": _jsonable(self.values),
                "assertions": [_plain(a) for a in self.assertions], "passed": self.passed}


def _within(diff: float, se: float, k: float) -> bool:
    return abs(diff) <= k * se


def doubling_gate(values_L, values_2L, k: float) -> Assertion:
    """Paired comparison of per-replication observables at depths L and 2L."""
    a = np.asarray(values_L, dtype=np.float64)
    b = np.asarray(values_2L, dtype=np.float64)
    d, se = mean_se(b - a)
    return Assertion("doubling_gate", bool(_within(d, se, k)),
                     {"mean_difference": d, "se": se, "k": k,
                      "identical_paths": int(np.sum(a == b))})


# --------------------------------------------------------------- survival

def _table(columns, rows, start=0) -> RawTable:
    return RawTable(("rep",) + tuple(columns),
                    [(start + i,) + tuple(r) for i, r in enumerate(rows)])


def _tag(t: float) -> str:
    return f"{float(t):g}"


def _survival_rep(ens_fn, init, grid, i):
    rec = run_coupled([("three_state", init)], ens_fn(i), grid[-1], grid).records[0]
    return tuple(int(v > 0) for v in rec.n_infected)


def estimate_survival(params: Params, init: Configuration, t_end: float, n_reps: int,
                      seed: int, *, workers: int = 1, level: float = 0.95,
                      ensemble_fn: Optional[EnsembleFn] = None) -> EstimateSummary:
    """Proportion of replications still infected at ``t_end``; also reports ``2 * t_end``."""
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    grid = [t_end, 2 * t_end] if ensemble_fn is None else [t_end]
    ens = ensemble_fn or _random_ensembles(params, seed, 2 * t_end)
    rows = replicate(partial(_survival_rep, ens, init, grid), n_reps, workers)
    arr = np.array(rows)
    k = int(arr[:, 0].sum())
    extra = {"t_end": t_end}
    if arr.shape[1] > 1:
        k2 = int(arr[:, 1].sum())
        extra["at_double_horizon"] = {"t": 2 * t_end, "estimate": k2 / n_reps,
                                      "successes": k2,
                                      "ci": list(wilson_interval(k2, n_reps, level))}
    s = proportion_summary("survival", k, n_reps, seed, _params_json(params), level, **extra)
    s.raw = _table([f"alive_t={_tag(t)}" for t in grid], rows)
    return s


# ----------------------------------------------------------- decay fits

def _spatial_rep(ens_fn, N, t_end, i):
    rec = run_coupled([("three_state", Configuration.eta_n(N))], ens_fn(i), t_end,
                      [t_end]).records[0]
    return int(rec.x[0]), int(rec.x_min[0])


def estimate_spatial_reach(params: Params, N: int, n_values: Sequence[int], t_end: float,
                           n_reps: int, seed: int, *, workers: int = 1,
                           mu_c_estimate: Optional[float] = None, start: int = 0,
                           ensemble_fn: Optional[EnsembleFn] = None) -> DecayFit:
    """Decay in ``n`` of P(site ``N+n`` or ``-N-n`` infected by ``t_end``) from ``eta_N``.

    Replications ``start .. start + n_reps - 1`` are used.
    """
    if mu_c_estimate is not None and params.mu >= mu_c_estimate:
        warnings.warn(f"mu={params.mu} is not below the critical estimate {mu_c_estimate}")
    n_values = [int(n) for n in n_values]
    ens = ensemble_fn or _random_ensembles(params, seed, t_end)
    rows = replicate(partial(_spatial_rep, ens, N, t_end), n_reps, workers, start)
    arr = np.array(rows, dtype=np.int64).reshape(-1, 2)
    ind = np.stack([(arr[:, 0] >= N + n) | (arr[:, 1] <= -N - n) for n in n_values], axis=1)
    fit = _decay_fit([float(n) for n in n_values], ind)
    fit.extra.update(N=N, t_end=t_end, first_replication=start)
    fit.raw = _table(("x_max", "x_min"), rows, start)
    return fit


def _fit_assertions(label, fit, min_r2):
    return [
        Assertion(f"slope_negative_{label}", bool(fit.error is None and fit.slope < 0),
                  {"slope": fit.slope, "slope_se": fit.slope_se, "error": fit.error}),
        Assertion(f"r_squared_{label}", bool(fit.r_squared is not None and fit.r_squared > min_r2),
                  {"r_squared": fit.r_squared, "min": min_r2}),
    ]


def check_spatial_decay(params: Params, Ns: Sequence[int], n_values: Sequence[int],
                        t_end: float, n_reps: int, seed: int, *, k: float = 3.0,
                        workers: int = 1, min_r2: float = 0.9) -> CheckReport:
    """Spatial decay fits for each hull radius, and agreement of their slopes.

    Each radius uses its own block of replication indices, so the fits are
    independent and their standard errors pool.
    """
    Ns = [int(N) for N in Ns]
    fits = [estimate_spatial_reach(params, N, n_values, t_end, n_reps, seed, workers=workers,
                                   start=j * n_reps) for j, N in enumerate(Ns)]
    assertions = []
    for N, f in zip(Ns, fits):
        assertions += _fit_assertions(f"N={N}", f, min_r2)
    base = fits[0]
    comparisons = {}
    for N, f in zip(Ns[1:], fits[1:]):
        jk = [base.extra.get("slope_se_jackknife"), f.extra.get("slope_se_jackknife")]
        pooled = math.sqrt(jk[0] ** 2 + jk[1] ** 2) if None not in jk else math.nan
        wls = math.sqrt(base.slope_se ** 2 + f.slope_se ** 2)
        diff = base.slope - f.slope
        name = f"slopes_agree_N={Ns[0]}_vs_N={N}"
        comparisons[name] = {"difference": diff, "pooled_se": pooled, "pooled_se_wls": wls}
        assertions.append(Assertion(name, bool(_within(diff, pooled, k)),
                                    {"difference": diff, "pooled_se": pooled, "k": k}))
    values = {"t_end": t_end, "n_values": [int(n) for n in n_values],
              "fits": {f"N={N}": f.to_json() for N, f in zip(Ns, fits)},
              "comparisons": comparisons}
    report = CheckReport("spatial-decay", _params_json(params), seed, n_reps, values, assertions)
    report.raw = {f"N={N}": f.raw for N, f in zip(Ns, fits)}
    return report


def _temporal_rep(ens_fn, grid, coupled, i):
    procs = [("three_state", Configuration.eta0())]
    if coupled:
        procs.append(("all_arrows", SiteSet.of([0])))
    run = run_coupled(procs, ens_fn(i), grid[-1], grid)
    return tuple(int(v > 0) for rec in run.records for v in rec.n_infected)


def estimate_temporal_tail(params: Params, t_values: Sequence[float], n_reps: int, seed: int,
                           *, workers: int = 1, coupled_check: bool = False,
                           ensemble_fn: Optional[EnsembleFn] = None) -> DecayFit:
    """Decay in ``t`` of P(infected set nonempty at ``t``) from ``eta0``.

    With ``coupled_check`` the contact process from ``{0}`` also runs on every
    ensemble; its counts and the number of disagreeing samples go in ``fit.extra``.
    """
    t_values = [float(t) for t in t_values]
    grid = sorted(t_values)
    if grid != t_values:
        raise ValueError("t_values must be nondecreasing")
    ens = ensemble_fn or _random_ensembles(params, seed, grid[-1] if grid[-1] > 0 else 1.0)
    rows = replicate(partial(_temporal_rep, ens, grid, coupled_check), n_reps, workers)
    arr = np.array(rows, dtype=np.int64)
    G = len(grid)
    fit = _decay_fit(t_values, arr[:, :G])
    cols = [f"alive_t={_tag(t)}" for t in grid]
    if coupled_check:
        fit.extra["contact_counts"] = arr[:, G:].sum(axis=0).tolist()
        fit.extra["path_mismatches"] = int(np.sum(arr[:, :G] != arr[:, G:]))
        cols += [f"contact_alive_t={_tag(t)}" for t in grid]
    fit.raw = _table(cols, rows)
    return fit


def check_temporal_decay(params: Params, t_values: Sequence[float], n_reps: int, seed: int,
                         *, workers: int = 1, min_r2: float = 0.9) -> CheckReport:
    """Temporal decay fit; at ``lam == mu`` also the coupled contact-process cross-check."""
    coupled = params.lam == params.mu
    fit = estimate_temporal_tail(params, t_values, n_reps, seed, workers=workers,
                                 coupled_check=coupled)
    assertions = _fit_assertions("temporal", fit, min_r2)
    if coupled:
        assertions.append(Assertion("contact_process_agrees",
                                    fit.extra["path_mismatches"] == 0,
                                    {"path_mismatches": fit.extra["path_mismatches"]}))
    report = CheckReport("temporal-decay", _params_json(params), seed, n_reps,
                         {"fit": fit.to_json()}, assertions)
    report.raw = {"temporal": fit.raw}
    return report


def _confinement_rep(ens_fn, N, t_end, i):
    rec = run_coupled([("all_arrows", SiteSet.of(range(N + 1)))], ens_fn(i), t_end, [t_end],
                      lattice=(-1, N + 1)).records[0]
    inside = rec.x_min[0] >= 0 and rec.x[0] <= N
    return int(inside), int(inside and rec.n_infected[0] == 0)


def estimate_confinement(params: Params, N: int, n_reps: int, t_end: float, seed: int, *,
                         workers: int = 1, level: float = 0.95, start: int = 0,
                         ensemble_fn: Optional[EnsembleFn] = None) -> EstimateSummary:
    """Proportion of runs of the process boxed to ``[-1, N+1]`` from ``[0, N]`` that never
    touch ``-1`` or ``N+1`` by ``t_end``. ``extra`` also holds the proportion that is in
    addition extinct by ``t_end``."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    ens = ensemble_fn or _random_ensembles(params, seed, t_end)
    rows = replicate(partial(_confinement_rep, ens, N, t_end), n_reps, workers, start)
    arr = np.array(rows)
    k, k_ext = int(arr[:, 0].sum()), int(arr[:, 1].sum())
    s = proportion_summary(
        "confinement", k, n_reps, seed, _params_json(params), level, N=N, t_end=t_end,
        confined_and_extinct={"estimate": k_ext / n_reps, "successes": k_ext,
                              "se": proportion_se(k_ext, n_reps),
                              "ci": list(wilson_interval(k_ext, n_reps, level))})
    s.raw = _table(("confined", "confined_and_extinct"), rows, start)
    return s


def check_confinement(params: Params, Ns: Sequence[int], n_reps: int, t_end: float, seed: int,
                      *, k: float = 3.0, workers: int = 1) -> CheckReport:
    """Confinement proportions for several box sizes share a positive lower bound."""
    Ns = [int(N) for N in Ns]
    sums = [estimate_confinement(params, N, n_reps, t_end, seed, workers=workers,
                                 start=j * n_reps) for j, N in enumerate(Ns)]
    lower = min(s.estimate - k * s.se for s in sums)
    values = {"t_end": t_end, "estimates": {f"N={N}": s.to_json() for N, s in zip(Ns, sums)},
              "common_lower_bound": lower}
    report = CheckReport("confinement", _params_json(params), seed, n_reps, values,
                         [Assertion("common_positive_lower_bound", bool(lower > 0),
                                    {"min_estimate_minus_k_se": lower, "k": k})])
    report.raw = {f"N={N}": s.raw for N, s in zip(Ns, sums)}
    return report


# ---------------------------------------------------------------- velocity

def _ols_slope(t, y) -> float:
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    tc = t - t.mean()
    return float(np.dot(tc, y - y.mean()) / np.dot(tc, tc))


VELOCITY_PROCESSES = ("three_state_from_eta_bar", "contact_from_halfline")


def _velocity_rep(ens_fn, depths, grid, which, i):
    # every depth runs in lockstep on the same realization
    procs = []
    for depth in depths:
        if "three_state_from_eta_bar" in which:
            procs.append(("three_state", Configuration.eta_bar(depth)))
        if "contact_from_halfline" in which:
            procs.append(("all_arrows", SiteSet.half_line(depth)))
    run = run_coupled(procs, ens_fn(i), grid[-1], grid)
    out = []
    for rec in run.records:
        if np.any(rec.n_infected == 0):
            out.append(math.nan)
        else:
            out.append(_ols_slope(grid, rec.r))
    return tuple(out)


def _velocity_table(params, t_end, n_reps, depths, seed, which, workers, n_grid, grid,
                    ensemble_fn) -> np.ndarray:
    for w in which:
        if w not in VELOCITY_PROCESSES:
            raise ValueError(f"unknown process {w!r}; choose from {VELOCITY_PROCESSES}")
    g = np.linspace(t_end / 2, t_end, n_grid) if grid is None else np.asarray(grid, float)
    if g.size < 2 or g[0] == g[-1]:
        raise ValueError("the velocity regression needs at least two distinct sample times")
    ens = ensemble_fn or _random_ensembles(params, seed, float(g[-1]))
    rows = replicate(partial(_velocity_rep, ens, tuple(depths), g, tuple(which)),
                     n_reps, workers)
    return np.array(rows, dtype=np.float64).reshape(n_reps, len(depths), len(which))


def velocity_slopes(params: Params, t_end: float, n_reps: int, depth: int, seed: int,
                    which: Sequence[str] = VELOCITY_PROCESSES, *, workers: int = 1,
                    n_grid: int = 101, grid: Optional[Sequence[float]] = None,
                    ensemble_fn: Optional[EnsembleFn] = None) -> np.ndarray:
    """Per-replication edge slopes over ``[t_end/2, t_end]``; NaN marks extinction."""
    return _velocity_table(params, t_end, n_reps, (depth,), seed, which, workers, n_grid,
                           grid, ensemble_fn)[:, 0, :]


def _slope_summary(target, slopes, seed, params, level=0.95, **extra):
    ok = slopes[~np.isnan(slopes)]
    if ok.size == 0:
        return EstimateSummary(target, math.nan, math.nan, (math.nan, math.nan),
                               slopes.size, seed, params,
                               dict(extinct_replications=int(slopes.size), **extra))
    s = mean_summary(target, ok, seed, params, level, **extra)
    s.n_replications = int(slopes.size)
    s.extra["extinct_replications"] = int(np.sum(np.isnan(slopes)))
    return s


def estimate_velocity(process: str, params: Params, t_end: float, n_reps: int,
                      L: Optional[int], seed: int, *, workers: int = 1, n_grid: int = 101,
                      grid: Optional[Sequence[float]] = None,
                      ensemble_fn: Optional[EnsembleFn] = None) -> EstimateSummary:
    """Mean slope of the rightmost infected site over the second half of the horizon."""
    if process not in VELOCITY_PROCESSES:
        raise ValueError(f"unknown process {process!r}; choose from {VELOCITY_PROCESSES}")
    if process == "three_state_from_eta_bar" and not params.mu > params.lam:
        raise ValueError("the three-state velocity estimate requires mu > lambda")
    depth = default_depth(params.mu, t_end) if L is None else int(L)
    slopes = velocity_slopes(params, t_end, n_reps, depth, seed, (process,), workers=workers,
                             n_grid=n_grid, grid=grid, ensemble_fn=ensemble_fn)[:, 0]
    s = _slope_summary("alpha" if process.startswith("three") else "beta", slopes, seed,
                       _params_json(params), process=process, truncation_L=depth,
                       t_end=t_end)
    s.raw = _table(("slope",), [(v,) for v in slopes.tolist()])
    return s


def confirm_supercritical(mu: float, t_end: float, n_reps: int, seed: int, *,
                          mu_lo: float = 0.5, tolerance: float = 0.25,
                          threshold: float = 0.05, workers: int = 1):
    """Bracket the symmetric transition on ``[mu_lo, mu]`` at horizon ``t_end``.

    Returns an assertion that the transition lies below ``mu`` and the bracket
    (``None`` when bracketing failed).
    """
    try:
        b = bracket_critical_value(True, (mu_lo, mu), t_end, n_reps, tolerance, seed,
                                   threshold, workers=workers)
    except BracketError as err:
        return Assertion("transition_below_mu", False, {"mu": mu, "error": str(err)}), None
    return Assertion("transition_below_mu", bool(b["interval"][1] <= mu),
                     {"mu": mu, "interval": b["interval"]}), b


def velocity_compare(params: Params, t_end: float, n_reps: int, L: Optional[int], seed: int,
                     *, k: float = 3.0, workers: int = 1, n_grid: int = 101,
                     gate: bool = True, bracket_reps: int = 0,
                     bracket_tolerance: float = 0.25) -> CheckReport:
    """Three-state edge speed against ``lam/mu`` times the contact edge speed.

    With ``bracket_reps > 0`` the symmetric transition is also bracketed at
    the same horizon to confirm that ``mu`` is supercritical.
    """
    if not params.mu > params.lam:
        raise ValueError("velocity comparison requires mu > lambda")
    depth = default_depth(params.mu, t_end) if L is None else int(L)
    pj = _params_json(params)
    depths = (depth, 2 * depth) if gate else (depth,)
    table = _velocity_table(params, t_end, n_reps, depths, seed, VELOCITY_PROCESSES, workers,
                            n_grid, None, None)
    slopes = table[:, 0, :]
    alpha = _slope_summary("alpha", slopes[:, 0], seed, pj)
    beta = _slope_summary("beta", slopes[:, 1], seed, pj)
    ratio = params.lam / params.mu
    pooled = math.sqrt(alpha.se ** 2 + (ratio * beta.se) ** 2)
    both = ~np.isnan(slopes).any(axis=1)
    _, paired = mean_se(slopes[both, 0] - ratio * slopes[both, 1])
    bound = ratio * beta.estimate
    assertions = [
        Assertion("alpha_le_ratio_beta", bool(alpha.estimate <= bound + k * pooled),
                  {"alpha": alpha.estimate, "ratio_beta": bound, "pooled_se": pooled, "k": k}),
        Assertion("alpha_positive", bool(alpha.estimate > -k * alpha.se),
                  {"alpha": alpha.estimate, "se": alpha.se, "k": k}),
    ]
    values = {"alpha": alpha.to_json(), "beta": beta.to_json(), "lambda_over_mu": ratio,
              "ratio_beta": bound, "pooled_se": pooled, "paired_se": paired,
              "truncation_L": depth, "t_end": t_end}
    cols = ["alpha_slope", "beta_slope"]
    if gate:
        s2 = table[:, 1, :]
        cols += ["alpha_slope_2L", "beta_slope_2L"]
        for col, name in ((0, "alpha"), (1, "beta")):
            a = doubling_gate(np.nan_to_num(slopes[:, col]), np.nan_to_num(s2[:, col]), k)
            a.name = f"doubling_gate_{name}"
            assertions.append(a)
    raw = {"velocity": _table(cols, table.reshape(n_reps, -1).tolist())}
    if bracket_reps > 0:
        a, b = confirm_supercritical(params.mu, t_end, bracket_reps, seed,
                                     tolerance=bracket_tolerance, workers=workers)
        assertions.append(a)
        values["bracket"] = b
        if b is not None:
            raw["bracket"] = bracket_table(b)
    report = CheckReport("velocity-compare", pj, seed, n_reps, values, assertions)
    report.raw = raw
    return report


# ------------------------------------------------------------ competitions

_WALD_COLUMNS = ("F", "xbar", "R0_minus_rbar", "N", "D", "identity_violations",
                 "eq3_violations", "eq4_violations", "r0_bound_failures", "alive")


def _wald_rep(ens_fn, depth, t_end, i):
    rec = instrument_competitions(depth, ens_fn(i), t_end, [t_end])
    iv = rec.identity_violations()
    alive = rec.n_infected[0] > 0
    gap = float(rec.R0[0] - rec.rbar[0]) if alive else math.nan
    return (int(rec.F[0]), int(rec.xbar[0]), gap, int(rec.N[0]), int(rec.D[0]),
            int(sum(iv.values())), iv["eq3_coincidence"], iv["eq4_split"],
            rec.r0_bound_failures(), int(alive))


def check_wald_identity(params: Params, t_end: float, n_reps: int, L: Optional[int],
                        seed: int, *, k: float = 3.0, workers: int = 1,
                        gate: bool = True) -> CheckReport:
    """Mean residual-first count against ``(mu - lam)/lam`` times the mean frontier."""
    if not params.mu > params.lam:
        raise ValueError(f"the competition identities require mu > lambda, "
                         f"got lambda={params.lam}, mu={params.mu}")
    depth = default_depth(params.mu, t_end) if L is None else int(L)
    ens = _random_ensembles(params, seed, t_end)
    rows = np.array(replicate(partial(_wald_rep, ens, depth, t_end), n_reps, workers),
                    dtype=np.float64)
    F, xbar, gap = rows[:, 0], rows[:, 1], rows[:, 2]
    c = (params.mu - params.lam) / params.lam
    d, se_d = mean_se(F - c * xbar)
    alive = rows[:, 9] == 1
    g_minus_f, se_g = mean_se(gap[alive] - F[alive])
    mF, seF = mean_se(F)
    mx, sex = mean_se(xbar)
    mg, seg = mean_se(gap[alive])
    values = {
        "t_end": t_end, "truncation_L": depth, "ratio": c,
        "mean_F": mF, "se_F": seF, "mean_xbar": mx, "se_xbar": sex,
        "mean_R0_minus_rbar": mg, "se_R0_minus_rbar": seg,
        "mean_N": float(rows[:, 3].mean()), "mean_D": float(rows[:, 4].mean()),
        "extinct_replications": int(np.sum(~alive)),
        "eq3_violations": int(rows[:, 6].sum()), "eq4_violations": int(rows[:, 7].sum()),
        "r0_bound_failures": int(rows[:, 8].sum()),
    }
    assertions = [
        Assertion("wald_identity", bool(_within(d, se_d, k)),
                  {"mean_difference": d, "se": se_d, "k": k}),
        Assertion("edge_gap_dominates_F", bool(g_minus_f >= -k * se_g),
                  {"mean_difference": g_minus_f, "se": se_g, "k": k}),
        Assertion("pathwise_identities", bool(rows[:, 5].sum() == 0),
                  {"violations": int(rows[:, 5].sum())}),
    ]
    table = rows
    cols = list(_WALD_COLUMNS)
    if gate:
        rows2 = np.array(replicate(partial(_wald_rep, ens, 2 * depth, t_end), n_reps, workers),
                         dtype=np.float64)
        for col, name in ((0, "F"), (1, "xbar")):
            a = doubling_gate(rows[:, col], rows2[:, col], k)
            a.name = f"doubling_gate_{name}"
            assertions.append(a)
        table = np.hstack([rows, rows2[:, :2]])
        cols += ["F_2L", "xbar_2L"]
    report = CheckReport("wald", _params_json(params), seed, n_reps, values, assertions)
    report.raw = {"wald": _table(cols, [_int_row(r) for r in table.tolist()])}
    return report


def _int_row(row):
    return tuple(int(v) if isinstance(v, float) and v.is_integer() else v for v in row)


def _drift_rep(ens_fn, depth, grid, i):
    lower = SiteSet.half_line(depth)
    upper = SiteSet.of(list(lower) + [1], depth)
    run = run_coupled([("all_arrows", upper), ("all_arrows", lower)], ens_fn(i), grid[-1],
                      grid, checks=[(1, 0, "subset")])
    hi, lo = run.records
    diff = []
    for g in range(len(grid)):
        if lo.n_infected[g] == 0:
            diff.append(math.nan)
        else:
            diff.append(float(hi.r[g] - lo.r[g]))
    return tuple(diff) + (sum(run.violations.values()),)


def drift_differences(mu: float, t_values, n_reps, depth, seed, workers=1,
                      ensemble_fn: Optional[EnsembleFn] = None) -> np.ndarray:
    grid = [float(t) for t in t_values]
    horizon = max(grid[-1], 1e-9)
    ens = ensemble_fn or _random_ensembles(Params(mu, mu), seed, horizon)
    return np.array(replicate(partial(_drift_rep, ens, depth, grid), n_reps, workers),
                    dtype=np.float64)


def check_drift_lemma(params: Params, t_values: Sequence[float], n_reps: int,
                      L: Optional[int], seed: int, *, k: float = 3.0, workers: int = 1,
                      gate: bool = True,
                      ensemble_fn: Optional[EnsembleFn] = None) -> CheckReport:
    """Coupled edge difference between the half-line with and without site 1.

    Uses the contact process with infection rate ``params.mu``.
    """
    t_values = [float(t) for t in t_values]
    if sorted(t_values) != t_values:
        raise ValueError("t_values must be nondecreasing")
    mu = params.mu
    depth = default_depth(mu, t_values[-1]) if L is None else int(L)
    rows = drift_differences(mu, t_values, n_reps, depth, seed, workers, ensemble_fn)
    G = len(t_values)
    per_t = []
    assertions = []
    for g, t in enumerate(t_values):
        col = rows[:, g]
        ok = col[~np.isnan(col)]
        m, se = mean_se(ok)
        per_t.append({"t": t, "mean": m, "se": se, "min": float(ok.min()) if ok.size else None,
                      "extinct_replications": int(np.sum(np.isnan(col)))})
        assertions.append(Assertion(f"mean_ge_1_at_t={_tag(t)}", bool(m >= 1 - k * se),
                                    {"mean": m, "se": se, "k": k}))
    neg = int(np.sum(rows[:, :G] < 0))
    assertions.append(Assertion("pathwise_nonnegative", bool(neg == 0 and rows[:, G].sum() == 0),
                                {"negative_differences": neg,
                                 "subset_violations": int(rows[:, G].sum())}))
    cols = [f"difference_t={_tag(t)}" for t in t_values] + ["subset_violations"]
    table = rows
    if gate and ensemble_fn is None:
        rows2 = drift_differences(mu, t_values, n_reps, 2 * depth, seed, workers)
        for g, t in enumerate(t_values):
            a = doubling_gate(np.nan_to_num(rows[:, g]), np.nan_to_num(rows2[:, g]), k)
            a.name = f"doubling_gate_t={_tag(t)}"
            assertions.append(a)
        table = np.hstack([rows, rows2[:, :G]])
        cols += [f"difference_2L_t={_tag(t)}" for t in t_values]
    report = CheckReport("drift", {"mu": mu}, seed, n_reps,
                         {"truncation_L": depth, "per_t": per_t}, assertions)
    report.raw = {"drift": _table(cols, [_int_row(r) for r in table.tolist()])}
    return report


# ---------------------------------------------------------------- duality

def _hits_rep(ens_fn, start, target, t, i):
    rec = run_coupled([("all_arrows", SiteSet.of(start))], ens_fn(i), t, [t],
                      snapshots=True).records[0]
    return int(bool(set(rec.infected_at(0)) & set(target)))


def check_duality(mu: float, A: Sequence[int], B: Sequence[int], t: float, n_reps: int,
                  seed: int, *, k: float = 3.0, workers: int = 1) -> CheckReport:
    """Compare P(process from A meets B at t) with P(process from B meets A at t).

    The two sides use disjoint replication indices, so they are independent.
    """
    ens = _random_ensembles(Params(mu, mu), seed, t)
    fwd = replicate(partial(_hits_rep, ens, A, B, t), n_reps, workers)
    rev = replicate(partial(_hits_rep, ens, B, A, t), n_reps, workers, start=n_reps)
    k1, k2 = sum(fwd), sum(rev)
    se = pooled_proportion_se(k1, n_reps, k2, n_reps)
    p1, p2 = k1 / n_reps, k2 / n_reps
    values = {"A": list(A), "B": list(B), "t": t, "forward": p1, "reverse": p2,
              "forward_successes": k1, "reverse_successes": k2, "pooled_se": se}
    report = CheckReport("duality", {"mu": mu}, seed, n_reps, values,
                         [Assertion("self_duality", bool(_within(p1 - p2, se, k)),
                                    {"difference": p1 - p2, "pooled_se": se, "k": k})])
    report.raw = {"forward": _table(("hit",), [(h,) for h in fwd]),
                  "reverse": _table(("hit",), [(h,) for h in rev], n_reps)}
    return report


# ------------------------------------------------------- critical bracket

def _survives(ens_fn, t_end, i):
    rec = run_coupled([("all_arrows", SiteSet.of([0]))], ens_fn(i), t_end, [t_end]).records[0]
    return int(rec.n_infected[0] > 0)


def survival_above(mu: float, t_end: float, n_reps: int, seed: int, threshold: float,
                   workers: int = 1, batch: int = 64) -> Tuple[bool, int, int]:
    """Whether the survival proportion of the process from ``{0}`` reaches ``threshold``.

    Replications run in index order and stop once the answer is certain, so the
    result equals that of a full run. Returns ``(above, survivors, runs)``.
    """
    need = math.ceil(threshold * n_reps)
    ens = _random_ensembles(Params(mu, mu), seed, t_end)
    done = hits = 0
    while done < n_reps:
        m = min(batch, n_reps - done)
        hits += sum(replicate(partial(_survives, ens, t_end), m, workers, start=done))
        done += m
        if hits >= need or hits + (n_reps - done) < need:
            break
    return hits >= need, hits, done


def bracket_critical_value(lambda_equals_mu: bool, interval: Tuple[float, float],
                           t_end: float, n_reps: int, tolerance: float, seed: int,
                           threshold: float = 0.05, *, workers: int = 1) -> dict:
    """Bisect the finite-horizon survival transition of the symmetric process."""
    if not lambda_equals_mu:
        raise ValueError("only the lambda = mu bracket is supported")
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValueError("need mu_lo < mu_hi")
    if lo <= 0:
        raise ValueError("mu_lo must be positive")
    if not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1)")
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    steps = []

    def probe(mu):
        above, hits, runs = survival_above(mu, t_end, n_reps, seed, threshold, workers)
        steps.append({"mu": mu, "above": above, "survivors": hits, "runs": runs})
        return above

    if probe(lo):
        raise BracketError(f"survival at mu_lo={lo} already reaches {threshold}")
    if not probe(hi):
        raise BracketError(f"survival at mu_hi={hi} stays below {threshold}")
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            hi = mid
        else:
            lo = mid
    return {"interval": [lo, hi], "threshold": threshold, "t_end": t_end, "n_reps": n_reps,
            "tolerance": tolerance, "steps": steps}


def bracket_table(b: dict) -> RawTable:
    return RawTable(("step", "mu", "above", "survivors", "runs"),
                    [(j, s["mu"], int(s["above"]), s["survivors"], s["runs"])
                     for j, s in enumerate(b["steps"])])


# -------------------------------------------------------------- invariants

def _collapse_rep(master, mu, grid, i):
    e = new_random_ensemble(Params(mu, mu), child_seed(master, i), grid[-1])
    r = run_coupled([("three_state", Configuration.eta0()), ("all_arrows", SiteSet.of([0]))],
                    e, grid[-1], grid, checks=[(0, 1, "equal")], snapshots=True)
    a, b = r.records
    sampled = sum(int(a.infected_at(g) != b.infected_at(g)) for g in range(len(grid)))
    return sampled, sum(r.violations.values())


def check_collapse(mus: Sequence[float], t_end: float, n_reps: int, seed: int, *,
                   workers: int = 1, n_grid: int = 11) -> CheckReport:
    """At ``lam == mu`` the three-state infected set equals the contact-process set.

    Compared at every sample time and after every event.
    """
    grid = [float(t) for t in np.linspace(0, t_end, n_grid)]
    assertions, values, raw = [], {}, {}
    for mu in mus:
        rows = replicate(partial(_collapse_rep, seed, float(mu), grid), n_reps, workers)
        sampled = sum(r[0] for r in rows)
        events = sum(r[1] for r in rows)
        values[f"mu={mu!r}"] = {"sample_mismatches": sampled, "event_mismatches": events}
        assertions.append(Assertion(f"collapse_mu={mu!r}", sampled == 0 and events == 0,
                                    {"sample_mismatches": sampled, "event_mismatches": events}))
        raw[f"mu={mu!r}"] = _table(("sample_mismatches", "event_mismatches"), rows)
    report = CheckReport("collapse", {"mu": [float(m) for m in mus]}, seed, n_reps,
                         {"t_end": t_end, "grid": grid, "per_mu": values}, assertions)
    report.raw = raw
    return report


def _monotone_rep(master, params, N, grid, i):
    e = new_random_ensemble(params, child_seed(master, i), grid[-1])
    r = run_coupled([("three_state", Configuration.eta0()), ("three_state", Configuration.eta_n(N))],
                    e, grid[-1], grid, checks=[(0, 1, "leq")])
    return (sum(r.violations.values()),)


def check_monotone_coupling(params: Params, N: int, t_end: float, n_reps: int, seed: int, *,
                            workers: int = 1) -> CheckReport:
    """Sitewise order of the runs from ``eta0`` and ``eta_N`` after every event."""
    if params.lam > params.mu:
        raise ValueError("the monotone coupling needs mu >= lambda")
    grid = [float(t_end)]
    rows = replicate(partial(_monotone_rep, seed, params, int(N), grid), n_reps, workers)
    v = sum(r[0] for r in rows)
    report = CheckReport("monotone-coupling", _params_json(params), seed, n_reps,
                         {"t_end": t_end, "N": int(N), "violations": v},
                         [Assertion("eta0_below_etaN", v == 0, {"violations": v})])
    report.raw = {"monotone": _table(("violations",), rows)}
    return report


def _random_eta_h(seed):
    rng = np.random.default_rng(seed)
    states = {x: int(rng.integers(0, 2)) for x in range(-3, 4)}
    states[0] = 1
    return Configuration.eta_h(states)


def _oracle_rep(master, mu, window, sandwich, grid, i):
    from .dual_graph import build_event_graph, forward_reachable
    from .kernel import evolve_contact

    seed = child_seed(master, i)
    lo, hi, t_max = window
    e = new_random_ensemble(Params(mu, mu), seed, t_max)
    g = build_event_graph(e, window)
    tr = evolve_contact(SiteSet.of([0]), e, t_max, "all_arrows", grid, lattice=(lo, hi))
    graph = sum(int(forward_reachable(g, [0], 0.0, t) != tr.infected_at(j))
                for j, t in enumerate(grid))
    eta = _random_eta_h(seed)
    A = eta.infected()
    e = new_random_ensemble(sandwich, seed, t_max)
    r = run_coupled([("common_only", A), ("three_state", eta), ("all_arrows", A)], e, t_max,
                    grid, checks=[(0, 1, "subset"), (1, 2, "subset")])
    lower, upper = r.violations.values()
    return graph, lower, upper


def check_oracle_equivalence(mu: float, window: Tuple[int, int, float], n_reps: int,
                             seed: int, *, sandwich: Params = Params(1.0, 2.0),
                             workers: int = 1, n_grid: int = 11) -> CheckReport:
    """Graph reachability against the replay engine, plus the contact sandwich.

    The engine runs boxed to the window so both see the same events.
    """
    window = (int(window[0]), int(window[1]), float(window[2]))
    grid = [float(t) for t in np.linspace(0, window[2], n_grid)]
    rows = replicate(partial(_oracle_rep, seed, float(mu), window, sandwich, grid),
                     n_reps, workers)
    tot = [sum(r[j] for r in rows) for j in range(3)]
    names = ("graph_equals_engine", "common_below_three_state", "three_state_below_all_arrows")
    report = CheckReport("oracle", {"mu": mu, "sandwich": _params_json(sandwich)}, seed, n_reps,
                         {"window": list(window), "grid": grid,
                          "violations": dict(zip(names, tot))},
                         [Assertion(n, v == 0, {"violations": v}) for n, v in zip(names, tot)])
    report.raw = {"oracle": _table(names, rows)}
    return report


def _invariant_rep(master, lam, mu, t_end, depth, oracle_reps, i):
    from .dual_graph import build_event_graph, forward_reachable

    seed = child_seed(master, i)
    grid = list(np.linspace(0, t_end, 11))
    out = {}
    # two susceptible types merge when the rates agree
    e = new_random_ensemble(Params(mu, mu), seed, t_end)
    r = run_coupled([("three_state", Configuration.eta0()), ("all_arrows", SiteSet.of([0]))],
                    e, t_end, grid, checks=[(0, 1, "equal")])
    out["collapse"] = sum(r.violations.values())
    e = new_random_ensemble(Params(lam, mu), seed, t_end)
    eta = _random_eta_h(seed)
    A = eta.infected()
    r = run_coupled([("three_state", Configuration.eta0()), ("three_state", Configuration.eta_n(2)),
                     ("common_only", A), ("three_state", eta), ("all_arrows", A),
                     ("all_arrows", SiteSet.of([0])), ("all_arrows", SiteSet.of([-1, 0, 1]))],
                    e, t_end, grid,
                    checks=[(0, 1, "leq"), (2, 3, "subset"), (3, 4, "subset"), (5, 6, "subset")])
    v = list(r.violations.values())
    out["monotone_coupling"], out["sandwich_lower"], out["sandwich_upper"], \
        out["contact_monotone"] = v
    if mu > lam:
        rec = instrument_competitions(depth, e, t_end, [t_end / 2, t_end])
        out["competition_identities"] = sum(rec.identity_violations().values())
        x_s, x_su, x_u = superadditivity_check(depth, e, t_end / 2, t_end)
        out["superadditivity"] = int(x_s + x_su < x_u)
    if i < oracle_reps:
        w = 20
        g = build_event_graph(e, (-w, w, t_end))
        tr = run_coupled([("all_arrows", SiteSet.of([0]))], e, t_end, grid, lattice=(-w, w),
                         snapshots=True).records[0]
        out["graph_oracle"] = sum(int(forward_reachable(g, [0], 0.0, t) != tr.infected_at(j))
                                  for j, t in enumerate(grid))
    return out


def check_invariants(params: Params, t_end: float, n_reps: int, seed: int, *,
                     workers: int = 1, oracle_reps: int = 100,
                     L: Optional[int] = None) -> CheckReport:
    """Pathwise invariant battery; every count must be zero."""
    if params.lam > params.mu:
        raise ValueError("the invariant battery assumes mu >= lambda")
    depth = int(L) if L is not None else default_depth(params.mu, t_end)
    rows = replicate(partial(_invariant_rep, seed, params.lam, params.mu, t_end, depth,
                             oracle_reps), n_reps, workers)
    totals: Dict[str, int] = {}
    for row in rows:
        for key, v in row.items():
            totals[key] = totals.get(key, 0) + int(v)
    totals = dict(sorted(totals.items()))
    assertions = [Assertion(name, v == 0, {"violations": v}) for name, v in totals.items()]
    report = CheckReport("invariants", _params_json(params), seed, n_reps,
                         {"violations": totals, "truncation_L": depth, "t_end": t_end},
                         assertions)
    names = list(totals)
    report.raw = {"invariants": _table(names, [tuple(r.get(n, "") for n in names) for r in rows])}
    return report


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
