"""Wald intervals, likelihood-ratio statistics and parametric-bootstrap p-values."""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.stats import norm

from occmix.errors import DegenerateData, DomainError, NonConvergence, NotNested
from occmix.estimation import (
    PROB_BOUNDS,
    Family,
    FitResult,
    ModelSpec,
    OptimOptions,
    fit,
)
from occmix.model import SurveyCounts, pmf, zi_pmf
from occmix.rng import substream

#: Pairs (null, alternative) for which likelihood-ratio tests are defined.
NESTING = frozenset(
    {
        (Family.ZIB, Family.ZINC),
        (Family.ZIN, Family.ZINC),
        (Family.ZINC_FIXED_C, Family.ZINC),
        (Family.NMIX, Family.NCMIX),
        (Family.NCMIX_FIXED_C, Family.NCMIX),
    }
)

BOUNDARY_NOTE = (
    "the null value lies on the boundary of the parameter space, so the "
    "asymptotic null distribution of the LR statistic is a mixture of a point "
    "mass at 0 and chi-square components, not a plain chi-square; the "
    "p-value reported is from the parametric bootstrap"
)

@dataclass(frozen=True)
class WaldInterval:
    estimate: float
    se: float
    lower: float
    upper: float
    truncated: bool


def wald_ci(fit_result: FitResult, level: float = 0.95) -> dict[str, WaldInterval | None]:
    """Natural-scale Wald intervals ``estimate +/- z * se``.

    Intervals for ``r``, ``c`` and ``psi`` are truncated to ``[0, 1]`` and
    for ``mu`` at 0; a parameter without a standard error maps to None.
    """
    if not 0 < level < 1:
        raise DomainError("level must lie in (0, 1)")
    z = norm.ppf(0.5 * (1 + level))
    out: dict[str, WaldInterval | None] = {}
    for name in fit_result.spec.free:
        est = fit_result.estimates[name]
        se = fit_result.std_errors.get(name)
        if se is None or not math.isfinite(se):
            out[name] = None
            continue
        lower, upper = est - z * se, est + z * se
        lo_cap, hi_cap = (0.0, math.inf) if name == "mu" else (0.0, 1.0)
        truncated = lower < lo_cap or upper > hi_cap
        out[name] = WaldInterval(est, se, max(lower, lo_cap), min(upper, hi_cap), truncated)
    return out


def _check_nested(null_spec: ModelSpec, alt_spec: ModelSpec) -> None:
    if (null_spec.family, alt_spec.family) not in NESTING:
        raise NotNested(f"{null_spec.name} is not a declared submodel of {alt_spec.name}")


def lr_statistic(null_fit: FitResult, alt_fit: FitResult) -> tuple[float, bool]:
    """Return ``(max(0, 2*(ll_alt - ll_null)), clamped)``."""
    _check_nested(null_fit.spec, alt_fit.spec)
    if null_fit.counts != alt_fit.counts:
        raise NotNested("fits were made on different data")
    raw = 2.0 * (alt_fit.loglik - null_fit.loglik)
    if raw < 0:
        return 0.0, True
    return raw, False


def lrt(null_fit: FitResult, alt_fit: FitResult) -> float:
    """Likelihood-ratio statistic, clamped at zero."""
    return lr_statistic(null_fit, alt_fit)[0]


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    null_model: ModelSpec
    alt_model: ModelSpec
    lr_stat: float
    n_boot: int
    p_boot: float
    p_asymptotic_note: str
    n_failed: int = 0
    clamped: bool = False
    null_fit: FitResult | None = None
    alt_fit: FitResult | None = None
    boot_stats: tuple[float, ...] = ()


def embed(null_fit: FitResult, alt_spec: ModelSpec) -> dict[str, float]:
    """Map null-model estimates to a starting point of the alternative."""
    full = null_fit.full_estimates
    lo, hi = PROB_BOUNDS
    out = {}
    for name in alt_spec.free:
        v = full.get(name, 1.0)
        out[name] = min(max(v, lo), hi) if name != "mu" else v
    return out


def _cell_probs(fit_result: FitResult) -> np.ndarray:
    params = fit_result.params
    T = fit_result.counts.n_visits
    p = zi_pmf(params, T) if fit_result.spec.zero_inflated else pmf(params, T)
    return p / p.sum()


def _refit_pair(null_spec, alt_spec, counts, null_start, alt_starts, opts):
    null_opts = dataclasses.replace(opts, extra_starts=(null_start,))
    null_fit = fit(null_spec, counts, null_opts)
    alt_opts = dataclasses.replace(
        opts, extra_starts=tuple(alt_starts) + (embed(null_fit, alt_spec),)
    )
    alt_fit = fit(alt_spec, counts, alt_opts)
    return null_fit, alt_fit


def _boot_replicate(args):
    null_spec, alt_spec, n, probs, seed, b, null_start, alt_starts, opts, max_retries = args
    for attempt in range(max_retries + 1):
        rng = substream(seed, b, attempt)
        m = rng.multinomial(n, probs)
        counts = SurveyCounts.from_frequencies(m)
        try:
            null_fit, alt_fit = _refit_pair(null_spec, alt_spec, counts, null_start, alt_starts, opts)
        except (DegenerateData, NonConvergence):
            continue
        if null_fit.converged and alt_fit.converged:
            return max(0.0, 2.0 * (alt_fit.loglik - null_fit.loglik))
    return None


def bootstrap_pvalue(
    null_spec: ModelSpec,
    alt_spec: ModelSpec,
    counts: SurveyCounts,
    B: int,
    seed: int,
    opts: OptimOptions | None = None,
    boot_opts: OptimOptions | None = None,
    n_workers: int = 1,
    max_retries: int = 3,
) -> TestResult:
    """Parametric-bootstrap likelihood-ratio test of ``null_spec`` within ``alt_spec``.

    ``B`` datasets of the same size are drawn from the fitted null model;
    both models are refit to each.  A replicate whose refits fail is redrawn
    up to ``max_retries`` times and otherwise dropped and counted in
    ``n_failed``.  ``p_boot = (1 + #{LR* >= LR}) / (B_ok + 1)``.

    ``boot_opts`` governs the refits; by default it keeps the moment-based
    start and adds warm starts at the original estimates.
    """
    if B < 1:
        raise DomainError("the number of bootstrap replicates must be at least 1")
    _check_nested(null_spec, alt_spec)
    opts = opts or OptimOptions()
    null_fit = fit(null_spec, counts, opts)
    alt_opts = dataclasses.replace(
        opts, extra_starts=tuple(opts.extra_starts) + (embed(null_fit, alt_spec),)
    )
    alt_fit = fit(alt_spec, counts, alt_opts)
    stat, clamped = lr_statistic(null_fit, alt_fit)

    boot_opts = boot_opts or OptimOptions(n_starts=1, seed=opts.seed, compute_se=False)
    probs = _cell_probs(null_fit)
    jobs = [
        (
            null_spec,
            alt_spec,
            counts.n_sites,
            probs,
            seed,
            b,
            dict(null_fit.estimates),
            (dict(alt_fit.estimates),),
            boot_opts,
            max_retries,
        )
        for b in range(B)
    ]
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            results = list(pool.map(_boot_replicate, jobs, chunksize=max(1, B // (4 * n_workers))))
    else:
        results = [_boot_replicate(job) for job in jobs]

    boot = tuple(v for v in results if v is not None)
    n_ok = len(boot)
    exceed = sum(v >= stat for v in boot)
    return TestResult(
        null_model=null_spec,
        alt_model=alt_spec,
        lr_stat=stat,
        n_boot=n_ok,
        p_boot=(1 + exceed) / (n_ok + 1),
        p_asymptotic_note=BOUNDARY_NOTE,
        n_failed=B - n_ok,
        clamped=clamped,
        null_fit=null_fit,
        alt_fit=alt_fit,
        boot_stats=boot,
    )


def summarize_test(result: TestResult) -> Mapping[str, object]:
    return {
        "null": result.null_model.name,
        "alternative": result.alt_model.name,
        "lr_stat": result.lr_stat,
        "n_boot": result.n_boot,
        "n_failed": result.n_failed,
        "p_boot": result.p_boot,
        "note": result.p_asymptotic_note,
    }
