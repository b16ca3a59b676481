"""Maximum-likelihood and moment estimation for the N_c-mixture model family.

Seven variants are supported, differing in which of ``(mu, r, c, psi)`` are
free::

    NMIX            mu, r          (c = 1)
    NCMIX           mu, r, c
    NCMIX_FIXED_C   mu, r          (c given)
    ZIB             mu, psi        (r = 1, c = 0; mu estimates mu*r)
    ZIN             mu, r, psi     (c = 1)
    ZINC            mu, r, c, psi
    ZINC_FIXED_C    mu, r, psi     (c given)

Fits run a bounded Nelder-Mead search from several starting points on the
``(log mu, logit r, logit c, logit psi)`` scale, then polish the best point
with L-BFGS-B and a few damped Newton steps. For zero-inflated models with
free ``psi`` the multi-start search runs on the profile likelihood in
``theta`` (``psi`` has a closed-form maximizer) before the joint polish.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize
from scipy.special import expit, logit

from occmix.errors import (
    DegenerateData,
    DomainError,
    InvalidStatistic,
    NoRoot,
    NonConvergence,
    SingularInformation,
)
from occmix import _kernels
from occmix.model import (
    ModelParams,
    SurveyCounts,
    ZIModelParams,
    f_zero_and_plus,
    loglik_cells,
)

logger = logging.getLogger(__name__)

PARAMS = ("mu", "r", "c", "psi")

MU_BOUNDS = (1e-6, 1e6)
PROB_BOUNDS = (1e-8, 1.0 - 1e-8)
#: Estimates within this factor of a bound are flagged.
BOUNDARY_FACTOR = 10.0
_PENALTY = 1e100


class Family(enum.Enum):
    NMIX = "nmix"
    NCMIX = "ncmix"
    NCMIX_FIXED_C = "ncmix_fixed_c"
    ZIB = "zib"
    ZIN = "zin"
    ZINC = "zinc"
    ZINC_FIXED_C = "zinc_fixed_c"


_FAMILY_FIXED = {
    Family.NMIX: {"c": 1.0},
    Family.ZIB: {"r": 1.0, "c": 0.0},
    Family.ZIN: {"c": 1.0},
}
_ZERO_INFLATED = {Family.ZIB, Family.ZIN, Family.ZINC, Family.ZINC_FIXED_C}
_FIXED_C = {Family.NCMIX_FIXED_C, Family.ZINC_FIXED_C}


@dataclass(frozen=True)
class ModelSpec:
    """A model variant plus any parameters held at fixed values.

    ``fixed`` may be given as a mapping; it is stored as sorted pairs so the
    spec stays hashable.  Family defaults (e.g. ``c = 1`` for NMIX) are
    merged in and cannot be overridden.
    """

    family: Family
    fixed: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        given = dict(self.fixed.items() if isinstance(self.fixed, Mapping) else self.fixed)
        for name, value in _FAMILY_FIXED.get(family, {}).items():
            if name in given and given[name] != value:
                raise DomainError(f"{family.name} requires {name} = {value}")
            given[name] = value
        for name, value in given.items():
            if name not in PARAMS:
                raise DomainError(f"unknown parameter {name!r}")
            if name == "psi" and family not in _ZERO_INFLATED:
                raise DomainError(f"{family.name} has no psi parameter")
            if name == "mu" and not value > 0:
                raise DomainError("fixed mu must be positive")
            if name in ("r", "c", "psi") and not 0 <= value <= 1:
                raise DomainError(f"fixed {name} must lie in [0, 1]")
            if name == "r" and value == 0:
                raise DomainError("fixed r must be positive")
        if family in _FIXED_C and "c" not in given:
            raise DomainError(f"{family.name} needs a fixed value for c")
        object.__setattr__(
            self, "fixed", tuple(sorted((k, float(v)) for k, v in given.items()))
        )

    @classmethod
    def of(cls, family: str | Family, **fixed: float) -> ModelSpec:
        """Build a spec; fixing ``c`` on NCMIX/ZINC selects the fixed-c variant."""
        family = Family(family.lower() if isinstance(family, str) else family)
        if "c" in fixed:
            family = {
                Family.NCMIX: Family.NCMIX_FIXED_C,
                Family.ZINC: Family.ZINC_FIXED_C,
            }.get(family, family)
        return cls(family, tuple(fixed.items()))

    @property
    def fixed_values(self) -> dict[str, float]:
        return dict(self.fixed)

    @property
    def zero_inflated(self) -> bool:
        return self.family in _ZERO_INFLATED

    @property
    def free(self) -> tuple[str, ...]:
        fixed = self.fixed_values
        names = PARAMS if self.zero_inflated else PARAMS[:3]
        return tuple(p for p in names if p not in fixed)

    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def min_visits(self) -> int:
        """Smallest T for which the free parameters are identifiable."""
        if "c" not in self.free:
            return 2 if "r" in self.free else 1
        return 4 if self.zero_inflated else 3

    @property
    def name(self) -> str:
        label = self.family.name
        if self.family in _FIXED_C:
            label = label.replace("_FIXED_C", "")
        extra = {k: v for k, v in self.fixed if _FAMILY_FIXED.get(self.family, {}).get(k) != v}
        if extra:
            label += "[" + ",".join(f"{k}={v:g}" for k, v in extra.items()) + "]"
        return label

    def complete(self, free_values: Mapping[str, float]) -> dict[str, float]:
        """Merge free estimates with fixed values into a full ``mu, r, c, psi`` dict."""
        full = {"psi": 1.0}
        full.update(self.fixed_values)
        full.update({k: float(free_values[k]) for k in self.free if k in free_values})
        return full

    def params(self, free_values: Mapping[str, float]) -> ModelParams | ZIModelParams:
        full = self.complete(free_values)
        base = ModelParams(full["mu"], full["r"], full["c"])
        return ZIModelParams(base, full["psi"]) if self.zero_inflated else base


@dataclass(frozen=True)
class OptimOptions:
    """Optimizer settings.

    ``extra_starts`` are appended to the standard starting points (used for
    warm starts during bootstrap refits).  ``n_starts`` caps the standard
    list, which has five entries.
    """

    n_starts: int = 5
    seed: int = 0
    xtol: float = 1e-8
    ftol: float = 1e-10
    max_evals_per_dim: int = 400
    extra_starts: tuple[Mapping[str, float], ...] = ()
    compute_se: bool = True


@dataclass(frozen=True)
class FitResult:
    spec: ModelSpec
    counts: SurveyCounts
    estimates: dict[str, float]
    std_errors: dict[str, float]
    loglik: float
    aic: float
    converged: bool
    boundary_flags: frozenset[str] = frozenset()
    n_restarts_used: int = 0
    warnings: tuple[str, ...] = ()
    start_logliks: tuple[float, ...] = ()
    method: str = "joint"

    @property
    def n_free(self) -> int:
        return self.spec.n_free

    @property
    def full_estimates(self) -> dict[str, float]:
        return self.spec.complete(self.estimates)

    @property
    def params(self) -> ModelParams | ZIModelParams:
        return self.spec.params(self.estimates)


# ---------------------------------------------------------------------------
# parameter transforms


def _bounds(name: str) -> tuple[float, float]:
    return MU_BOUNDS if name == "mu" else PROB_BOUNDS


def _to_work(name: str, value: float) -> float:
    lo, hi = _bounds(name)
    value = min(max(value, lo), hi)
    return math.log(value) if name == "mu" else float(logit(value))


def _from_work(name: str, value: float) -> float:
    lo, hi = _bounds(name)
    out = math.exp(value) if name == "mu" else float(expit(value))
    return min(max(out, lo), hi)


def _work_bounds(names: Sequence[str]) -> list[tuple[float, float]]:
    return [tuple(_to_work(n, b) for b in _bounds(n)) for n in names]


def boundary_flags(estimates: Mapping[str, float], names: Sequence[str]) -> frozenset[str]:
    """Names of estimates lying within a factor of 10 of their bounds."""
    flagged = set()
    for name in names:
        x = estimates[name]
        lo, hi = _bounds(name)
        if name == "mu":
            near = x <= lo * BOUNDARY_FACTOR or x >= hi / BOUNDARY_FACTOR
        else:
            near = x <= lo * BOUNDARY_FACTOR or (1.0 - x) <= (1.0 - hi) * BOUNDARY_FACTOR
        if near:
            flagged.add(name)
    return frozenset(flagged)


# ---------------------------------------------------------------------------
# likelihood plumbing


def _objective(spec: ModelSpec, counts: SurveyCounts, names: Sequence[str], mode: int):
    """Log-likelihood as a function of an array of natural-scale ``names`` values."""
    full = spec.complete({})
    base = [full.get(p, math.nan) for p in PARAMS]
    slots = [PARAMS.index(n) for n in names]
    m = counts.array

    def ll(values) -> float:
        v = list(base)
        for i, x in zip(slots, values):
            v[i] = float(x)
        return loglik_cells(v[0], v[1], v[2], v[3], m, mode)

    return ll


def _profile_objective(spec: ModelSpec, counts: SurveyCounts, names: Sequence[str]):
    """Zero-inflated log-likelihood maximized over ``psi`` in closed form.

    For fixed ``theta`` the joint likelihood splits into the conditional part
    and a binomial part in ``psi * f(+)`` whose maximizer is
    ``min(1, occupancy / f(+))``, so this is the exact profile in ``theta``.
    """
    conditional = _objective(spec, counts, names, _kernels.CONDITIONAL)
    full = spec.complete({})
    base = [full.get(p, math.nan) for p in PARAMS[:3]]
    slots = [PARAMS.index(n) for n in names]
    n, m0, T = counts.n_sites, counts.m[0], counts.n_visits
    occ = n - m0

    def ll(values) -> float:
        cond = conditional(values)
        if not cond > -math.inf:
            return -math.inf
        v = list(base)
        for i, x in zip(slots, values):
            v[i] = float(x)
        _, fplus = f_zero_and_plus(ModelParams(*v), T)
        if not fplus > 0.0:
            return -math.inf
        p = min(fplus, occ / n)
        out = cond + occ * math.log(p)
        if m0:
            out += m0 * math.log1p(-p)
        return out

    return ll


def _psi_hat(spec: ModelSpec, counts: SurveyCounts, theta: Mapping[str, float]) -> float:
    full = spec.complete(dict(theta))
    _, fplus = f_zero_and_plus(ModelParams(full["mu"], full["r"], full["c"]), counts.n_visits)
    return counts.sample_occupancy / fplus


def joint_loglik(spec: ModelSpec, counts: SurveyCounts, values: Mapping[str, float]) -> float:
    """Log-likelihood of ``spec`` at the free-parameter ``values``."""
    mode = _kernels.ZERO_INFLATED if spec.zero_inflated else _kernels.PLAIN
    names = spec.free
    return _objective(spec, counts, names, mode)([values[n] for n in names])


def _fd_grad_hess(fun: Callable[[np.ndarray], float], x: np.ndarray, h: np.ndarray):
    """Central-difference gradient and Hessian."""
    k = len(x)
    f0 = fun(x)
    g = np.empty(k)
    H = np.empty((k, k))
    fp = np.empty(k)
    fm = np.empty(k)
    for i in range(k):
        e = np.zeros(k)
        e[i] = h[i]
        fp[i] = fun(x + e)
        fm[i] = fun(x - e)
        g[i] = (fp[i] - fm[i]) / (2 * h[i])
        H[i, i] = (fp[i] - 2 * f0 + fm[i]) / h[i] ** 2
    for i in range(k):
        for j in range(i + 1, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = h[i]
            ej[j] = h[j]
            v = (
                fun(x + ei + ej) - fun(x + ei - ej) - fun(x - ei + ej) + fun(x - ei - ej)
            ) / (4 * h[i] * h[j])
            H[i, j] = H[j, i] = v
    return g, H


def _richardson_grad(fun, x: np.ndarray, h: float = 1e-2, levels: int = 3) -> np.ndarray:
    """Central differences at ``h, h/2, ...`` extrapolated to cancel even error terms.

    The large base step keeps rounding error near ``eps * |f| / h``, far
    below that of a single small-step difference, which matters on the flat
    ridges where estimates are otherwise fixed only to ~1e-6.
    """
    k = len(x)
    g = np.empty(k)
    for i in range(k):
        e = np.zeros(k)
        table = []
        for level in range(levels):
            e[i] = h / 2**level
            table.append((fun(x + e) - fun(x - e)) / (2 * e[i]))
        for order in range(1, levels):
            factor = 4.0**order
            table = [(factor * table[j + 1] - table[j]) / (factor - 1) for j in range(len(table) - 1)]
        g[i] = table[0]
    return g


def _newton_refine(fun, x, f, lo, hi, opts: OptimOptions, iters: int = 25):
    """Damped Newton steps on a minimization objective.

    Away from the bounds the gradient is extrapolated, and steps that change
    ``f`` by no more than its rounding noise are accepted, so the iteration
    can settle the gradient to zero where the objective itself is flat.
    """
    h = np.full(len(x), 1e-4)
    h_rich = 1e-2
    for _ in range(iters):
        g, H = _fd_grad_hess(fun, x, h)
        interior = np.all(x - h_rich > lo) and np.all(x + h_rich < hi)
        if interior:
            g = _richardson_grad(fun, x, h_rich)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
            break
        try:
            np.linalg.cholesky(H)
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        noise = 64 * np.finfo(float).eps * max(1.0, abs(f)) if interior else 0.0
        t = 1.0
        while t > 1e-6:
            xn = np.clip(x - t * step, lo, hi)
            fn = fun(xn)
            if fn <= f + noise:
                break
            t *= 0.5
        else:
            break
        dx = np.max(np.abs(xn - x))
        df = f - fn
        x, f = xn, fn
        if dx <= 1e-10 or (not interior and df <= opts.ftol * max(1.0, abs(f)) and dx <= opts.xtol):
            break
    return x, f


def _projected_gradient(fun, x, lo, hi, h=1e-5):
    g = np.empty(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        g[i] = (fun(np.minimum(x + e, hi)) - fun(np.maximum(x - e, lo))) / (
            np.minimum(x + e, hi)[i] - np.maximum(x - e, lo)[i]
        )
    at_lo = (x <= lo + 1e-9) & (g > 0)
    at_hi = (x >= hi - 1e-9) & (g < 0)
    g[at_lo | at_hi] = 0.0
    return g


@dataclass
class _Maximum:
    values: dict[str, float]
    loglik: float
    converged: bool
    start_logliks: list[float] = field(default_factory=list)
    n_starts: int = 0


def _maximize(
    objective: Callable[[Sequence[float]], float],
    names: Sequence[str],
    starts: Sequence[Mapping[str, float]],
    opts: OptimOptions,
) -> _Maximum:
    names = list(names)
    bounds = _work_bounds(names)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    is_mu = [n == "mu" for n in names]
    mu_lo, mu_hi = MU_BOUNDS
    p_lo, p_hi = PROB_BOUNDS

    def neg(x):
        values = []
        for flag, v in zip(is_mu, x):
            if flag:
                values.append(min(max(math.exp(min(v, 700.0)), mu_lo), mu_hi))
            else:
                values.append(min(max(1.0 / (1.0 + math.exp(min(-v, 700.0))), p_lo), p_hi))
        ll = objective(values)
        return -ll if ll > -math.inf else _PENALTY

    best_x, best_f = None, np.inf
    start_lls = []
    nm_ok = False
    for start in starts:
        x0 = np.array([_to_work(n, start[n]) for n in names])
        f0 = neg(x0)
        start_lls.append(-f0 if f0 < _PENALTY else -np.inf)
        res = optimize.minimize(
            neg,
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                # coarse: L-BFGS-B and Newton steps below do the final polish
                "xatol": 1e-3,
                "fatol": 1e-5,
                "maxfev": opts.max_evals_per_dim * len(names),
                "adaptive": len(names) > 2,
            },
        )
        if res.fun < best_f:
            best_x, best_f, nm_ok = res.x, res.fun, bool(res.success)

    if best_x is None or best_f >= _PENALTY:
        raise NonConvergence("no starting point produced a finite likelihood")

    res = optimize.minimize(
        neg,
        best_x,
        method="L-BFGS-B",
        bounds=bounds,
        options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 500},
    )
    if res.fun <= best_f:
        best_x, best_f = res.x, res.fun
    best_x, best_f = _newton_refine(neg, best_x, best_f, lo, hi, opts)

    g = _projected_gradient(neg, best_x, lo, hi)
    grad_ok = np.max(np.abs(g)) < 1e-3 * max(1.0, math.sqrt(abs(best_f)))
    values = {n: _from_work(n, v) for n, v in zip(names, best_x)}
    return _Maximum(values, -best_f, grad_ok or nm_ok, start_lls, len(starts))


# ---------------------------------------------------------------------------
# starting values


def _moment_start(counts: SurveyCounts) -> tuple[float, float]:
    try:
        mu1, r1 = moment_estimators(counts)
    except (NoRoot, DomainError):
        ybar, _ = counts.sample_moments()
        p = min(max(ybar / counts.n_visits, 1e-3), 1 - 1e-3)
        r1 = 0.5
        mu1 = -math.log1p(-p) / r1
    return min(max(mu1, 1e-3), 1e3), min(max(r1, 0.02), 0.98)


def starting_points(spec: ModelSpec, counts: SurveyCounts, opts: OptimOptions) -> list[dict]:
    """Standard starting points followed by ``opts.extra_starts``.

    The moment estimates ``(mu1, r1)`` of the closed model are re-split for
    trial values ``c_s``: with ``c`` free the start is ``(c_s*mu1, r1/c_s)``,
    undoing the drift of closed-model estimators toward ``(mu/c, c*r)``;
    with ``c`` fixed the start moves the other way, ``(mu1/c_s, c_s*r1)``.
    """
    mu1, r1 = _moment_start(counts)
    fixed = spec.fixed_values
    occ = max(counts.sample_occupancy, 1e-3)
    rng = np.random.default_rng(opts.seed)

    def build(mu, r, c, psi=None):
        full = {"mu": mu, "r": min(max(r, 0.02), 0.98), "c": c}
        full.update(fixed)
        if "r" in fixed:
            full["mu"] = mu * r / fixed["r"]
        if spec.zero_inflated and "psi" not in fixed:
            if psi is None:
                _, fplus = f_zero_and_plus(
                    ModelParams(full["mu"], full["r"], full["c"]), counts.n_visits
                )
                psi = occ / max(fplus, 1e-12)
            full["psi"] = min(max(psi, 0.05), 0.99)
        return {k: full[k] for k in spec.free}

    starts = [build(mu1, r1, 0.95)]
    for c in (0.1, 0.5, 0.9):
        if "c" in fixed:
            # closed-model estimates run to larger mu and smaller r when c < 1
            starts.append(build(mu1 / c, r1 * c, c))
        else:
            starts.append(build(c * mu1, r1 / c, c))
    r_rand = rng.uniform(0.05, 0.95)
    starts.append(
        build(
            mu1 * r1 / r_rand * math.exp(rng.normal(0.0, 0.5)),
            r_rand,
            rng.uniform(0.05, 0.95),
            rng.uniform(0.3, 0.95),
        )
    )
    unique = []
    for s in starts[: opts.n_starts]:
        if all(any(abs(s[k] - u[k]) > 1e-9 for k in s) for u in unique):
            unique.append(s)
    for extra in opts.extra_starts:
        unique.append({k: float(extra[k]) for k in spec.free})
    return unique


# ---------------------------------------------------------------------------
# public estimators


def _check_data(spec: ModelSpec, counts: SurveyCounts) -> list[str]:
    if counts.m[0] == counts.n_sites:
        raise DegenerateData("no detections at any site; abundance is not estimable")
    notes = []
    if counts.n_visits < spec.min_visits:
        notes.append(
            f"{spec.name} is not identifiable with T = {counts.n_visits} "
            f"(needs T >= {spec.min_visits})"
        )
    return notes


def _finish(spec, counts, values, ll, maximum, notes, opts, method):
    flags = boundary_flags(values, spec.free)
    ses: dict[str, float] = {}
    if opts.compute_se:
        try:
            ses = std_errors(spec, counts, values)
        except SingularInformation as exc:
            notes.append(f"standard errors unavailable: {exc}")
    if flags:
        notes.append("estimates at a bound: " + ", ".join(sorted(flags)))
    if not maximum.converged:
        notes.append("optimizer did not meet the gradient tolerance")
    return FitResult(
        spec=spec,
        counts=counts,
        estimates=values,
        std_errors=ses,
        loglik=ll,
        aic=2 * spec.n_free - 2 * ll,
        converged=bool(maximum.converged and np.isfinite(ll)),
        boundary_flags=flags,
        n_restarts_used=maximum.n_starts,
        warnings=tuple(notes),
        start_logliks=tuple(maximum.start_logliks),
        method=method,
    )


def fit(spec: ModelSpec, counts: SurveyCounts, opts: OptimOptions | None = None) -> FitResult:
    """Maximum-likelihood fit of ``spec`` to ``counts``.

    Raises:
        DegenerateData: no site has a detection.
        NonConvergence: every start gave an infinite likelihood.
    """
    opts = opts or OptimOptions()
    notes = _check_data(spec, counts)
    starts = starting_points(spec, counts, opts)
    mode = _kernels.ZERO_INFLATED if spec.zero_inflated else _kernels.PLAIN
    objective = _objective(spec, counts, spec.free, mode)
    if spec.zero_inflated and "psi" in spec.free:
        # search the profile in theta, then polish all parameters jointly
        theta_names = [p for p in spec.free if p != "psi"]
        profile = _profile_objective(spec, counts, theta_names)
        inner = _maximize(profile, theta_names, [{k: s[k] for k in theta_names} for s in starts], opts)
        start = dict(inner.values)
        start["psi"] = min(max(_psi_hat(spec, counts, start), PROB_BOUNDS[0]), PROB_BOUNDS[1])
        maximum = _maximize(objective, spec.free, [start], opts)
        start_lls = [objective([s[k] for k in spec.free]) for s in starts]
        maximum = dataclasses.replace(
            maximum,
            converged=maximum.converged and inner.converged,
            start_logliks=start_lls,
            n_starts=len(starts),
        )
    else:
        maximum = _maximize(objective, spec.free, starts, opts)
    return _finish(spec, counts, maximum.values, maximum.loglik, maximum, notes, opts, "joint")


def fit_zi_conditional(
    spec: ModelSpec, counts: SurveyCounts, opts: OptimOptions | None = None
) -> FitResult:
    """Two-stage fit of a zero-inflated model.

    ``theta`` maximizes the likelihood of the positive cells conditional on
    ``Y_i > 0``; then ``psi = (n - m_0) / (n * f(+; theta))``, clamped to 1.
    """
    if not spec.zero_inflated:
        raise DomainError(f"{spec.name} is not zero-inflated")
    opts = opts or OptimOptions()
    notes = _check_data(spec, counts)
    theta_names = [p for p in spec.free if p != "psi"]
    starts = [{k: s[k] for k in theta_names} for s in starting_points(spec, counts, opts)]
    objective = _objective(spec, counts, theta_names, _kernels.CONDITIONAL)
    maximum = _maximize(objective, theta_names, starts, opts)
    values = dict(maximum.values)
    full = spec.complete(values)
    _, fplus = f_zero_and_plus(ModelParams(full["mu"], full["r"], full["c"]), counts.n_visits)
    clamped = False
    if "psi" in spec.free:
        psi = counts.sample_occupancy / fplus
        if psi > 1.0:
            notes.append(f"two-stage psi = {psi:.6g} exceeds 1; clamped")
            psi, clamped = 1.0, True
        values["psi"] = psi
    ll = joint_loglik(spec, counts, values)
    result = _finish(spec, counts, values, ll, maximum, notes, opts, "two-stage")
    if clamped:
        result = dataclasses.replace(result, boundary_flags=result.boundary_flags | {"psi"})
    return result


def std_errors(
    spec: ModelSpec, counts: SurveyCounts, estimates: Mapping[str, float]
) -> dict[str, float]:
    """Standard errors from the inverse observed information on the natural scale.

    Raises:
        SingularInformation: an estimate sits on its bound or the negative
            Hessian is not positive definite.
    """
    names = list(spec.free)
    x = np.array([float(estimates[n]) for n in names])
    h = np.empty(len(x))
    for i, (name, v) in enumerate(zip(names, x)):
        room = v if name == "mu" else min(v, 1.0 - v)
        if room < 1e-7:
            raise SingularInformation(f"{name} lies on the boundary of its domain")
        h[i] = min(1e-4 * max(abs(v), 1e-2), 0.5 * room)

    mode = _kernels.ZERO_INFLATED if spec.zero_inflated else _kernels.PLAIN
    ll = _objective(spec, counts, names, mode)

    _, H = _fd_grad_hess(ll, x, h)
    info = -H
    if not np.all(np.isfinite(info)):
        raise SingularInformation("information matrix is not finite")
    try:
        np.linalg.cholesky(info)
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise SingularInformation("information matrix is not positive definite") from exc
    var = np.diag(cov)
    if np.any(var <= 0):
        raise SingularInformation("nonpositive variance estimate")
    return {n: float(math.sqrt(v)) for n, v in zip(names, var)}


def aic(fit_result: FitResult) -> float:
    """Akaike information criterion; only free parameters are counted."""
    return 2 * fit_result.n_free - 2 * fit_result.loglik


def closed_form_double_visit(counts: SurveyCounts, c: float) -> tuple[float, float]:
    """Restricted MLEs of ``(mu, r)`` for two visits with ``c`` known.

    With ``z1 = log{2n/(2 m_0 + m_1)}`` and ``z2 = log(m_0/n)``::

        mu = c * z1**2 / (2*z1 + z2)
        r  = (2*z1 + z2) / (c * z1)

    Raises:
        InvalidStatistic: data on the boundary, or ``r`` would exceed 1.
    """
    if counts.n_visits != 2:
        raise DomainError("closed form requires exactly two visits")
    if not 0 < c <= 1:
        raise DomainError(f"c must lie in (0, 1], got {c}")
    n = counts.n_sites
    m0, m1, _ = counts.m
    if m0 <= 0 or 2 * m0 + m1 >= 2 * n:
        raise InvalidStatistic("need 0 < m_0 and 2 m_0 + m_1 < 2 n")
    z1 = math.log(2 * n / (2 * m0 + m1))
    z2 = math.log(m0 / n)
    denom = 2 * z1 + z2
    if denom <= 0:
        raise InvalidStatistic("2 z1 + z2 must be positive")
    mu = c * z1 * z1 / denom
    r = denom / (c * z1)
    if r > 1:
        raise InvalidStatistic(f"implied r = {r:.6g} exceeds 1")
    return mu, r


def moment_estimators(counts: SurveyCounts) -> tuple[float, float]:
    """Method-of-moments estimates ``(mu, r)`` of the closed (c = 1) model.

    Solves ``mean(Y) = T p`` and
    ``mean(Y**2) = T p + T (T-1) {2p - 1 + (1-p)**(2-r)}`` with
    ``p = 1 - exp(-mu r)``.

    Raises:
        NoRoot: the second-moment equation has no solution in ``(0, 1]``.
    """
    return moment_estimators_from_moments(*counts.sample_moments(), counts.n_visits)


def moment_estimators_from_moments(ybar: float, y2bar: float, T: int) -> tuple[float, float]:
    if T < 2:
        raise DomainError("moment estimators need T >= 2")
    p = ybar / T
    if not 0 < p < 1:
        raise NoRoot(f"mean detection rate {p:.6g} leaves no interior solution")
    pair = (y2bar - T * p) / (T * (T - 1))

    def g(r):
        return 2 * p - 1 + (1 - p) ** (2 - r) - pair

    g0, g1 = g(0.0), g(1.0)
    if g0 >= 0:
        raise NoRoot("second moment is at or below independence; r -> 0")
    if g1 < 0:
        raise NoRoot("second moment exceeds the closed-population maximum")
    r = 1.0 if g1 == 0 else optimize.brentq(g, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    if r <= 0:
        raise NoRoot("r -> 0")
    return -math.log1p(-p) / r, r
