"""Probability functions for the N_c-mixture occupancy model.

At site ``i`` the latent count on visit ``j`` is ``N_ij = K_i + M_ij`` with a
resident component ``K_i ~ Poisson(c*mu)`` shared by every visit and a
transient component ``M_ij ~ Poisson((1-c)*mu)`` drawn afresh each visit.
Each individual is detected independently with probability ``r``; only the
binary detections ``Y_ij`` are observed.  The site total ``Y_i`` has an
explicit alternating-sum probability function (:func:`pmf_closed`) and an
all-positive mixture representation obtained by conditioning on ``K_i``
(:func:`pmf_oracle`).  The two are computed independently and cross-checked
in the test suite.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from occmix import _kernels
from occmix.errors import DomainError

#: Largest T evaluated with the alternating closed form before the oracle takes over.
CLOSED_FORM_MAX_T = 12
#: Relative error budget for accepting a compensated closed-form sum.
CLOSED_FORM_RTOL = 1e-13
DEFAULT_TAIL_EPS = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Parameters ``(mu, r, c)`` of the N_c-mixture model."""

    mu: float
    r: float
    c: float

    def __post_init__(self):
        for name in ("mu", "r", "c"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise DomainError(f"mu must be positive and finite, got {self.mu}")
        if not 0 < self.r <= 1:
            raise DomainError(f"r must lie in (0, 1], got {self.r}")
        if not 0 <= self.c <= 1:
            raise DomainError(f"c must lie in [0, 1], got {self.c}")

    @property
    def d(self) -> float:
        return 1.0 - self.c


@dataclass(frozen=True)
class ZIModelParams:
    """N_c-mixture parameters plus the site occupancy probability ``psi``."""

    base: ModelParams
    psi: float

    def __post_init__(self):
        if not 0 <= self.psi <= 1:
            raise DomainError(f"psi must lie in [0, 1], got {self.psi}")


@dataclass(frozen=True)
class SurveyCounts:
    """Occurrence-count frequencies ``m_0..m_T`` for ``n`` sites and ``T`` visits.

    ``m[j]`` is the number of sites detected on exactly ``j`` of the ``T``
    visits.  These are sufficient statistics for every model in the package.
    """

    n_sites: int
    n_visits: int
    m: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(v) for v in self.m)
        object.__setattr__(self, "m", m)
        if self.n_visits < 1:
            raise DomainError("n_visits must be a positive integer")
        if len(m) != self.n_visits + 1:
            raise DomainError(
                f"expected {self.n_visits + 1} frequencies, got {len(m)}"
            )
        if any(v < 0 for v in m):
            raise DomainError("frequencies must be nonnegative")
        if sum(m) != self.n_sites or self.n_sites < 1:
            raise DomainError(
                f"frequencies sum to {sum(m)} but n_sites = {self.n_sites}"
            )

    @classmethod
    def from_frequencies(cls, m: Sequence[int]) -> SurveyCounts:
        m = [int(v) for v in m]
        return cls(n_sites=sum(m), n_visits=len(m) - 1, m=tuple(m))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.m, dtype=float)

    @property
    def sample_occupancy(self) -> float:
        """Fraction of sites with at least one detection, ``(n - m_0)/n``."""
        return (self.n_sites - self.m[0]) / self.n_sites

    def sample_moments(self) -> tuple[float, float]:
        """Return ``(mean(Y_i), mean(Y_i**2))``."""
        j = np.arange(self.n_visits + 1)
        m = self.array
        return float(j @ m / self.n_sites), float((j * j) @ m / self.n_sites)


@dataclass(frozen=True, eq=False)
class DetectionMatrix:
    """Balanced site-by-visit matrix of 0/1 detections."""

    values: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.values)
        if y.ndim != 2 or y.shape[0] < 1 or y.shape[1] < 1:
            raise DomainError("detection matrix must be 2-d and non-empty")
        if not np.isin(y, (0, 1)).all():
            raise DomainError("detection matrix entries must be 0 or 1")
        object.__setattr__(self, "values", y.astype(np.int8))

    @property
    def n_sites(self) -> int:
        return self.values.shape[0]

    @property
    def n_visits(self) -> int:
        return self.values.shape[1]

    def site_totals(self) -> np.ndarray:
        return self.values.sum(axis=1)

    def to_counts(self) -> SurveyCounts:
        m = np.bincount(self.site_totals(), minlength=self.n_visits + 1)
        return SurveyCounts(self.n_sites, self.n_visits, tuple(m))

    def __eq__(self, other):
        if not isinstance(other, DetectionMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values)


def _check_y(y: int, T: int) -> None:
    if T < 1:
        raise DomainError(f"T must be a positive integer, got {T}")
    if not 0 <= y <= T:
        raise DomainError(f"y must lie in 0..{T}, got {y}")


def closed_form_sum(theta: ModelParams, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the alternating closed form for every ``y`` in ``0..T``.

    Terms are scaled by their per-``y`` maximum and accumulated with
    Neumaier compensated summation.  Returns ``(log_f, reliable)`` where
    ``reliable[y]`` is False when the sum is nonpositive or its rounding
    error bound exceeds :data:`CLOSED_FORM_RTOL` relative to the result.
    Unreliable entries of ``log_f`` are NaN.
    """
    log_f = np.empty(T + 1)
    reliable = np.empty(T + 1, dtype=np.bool_)
    _kernels.closed_form(theta.mu, theta.r, theta.c, T, CLOSED_FORM_RTOL, log_f, reliable)
    return log_f, reliable


def oracle_log_pmf(theta: ModelParams, T: int, tail_eps: float = DEFAULT_TAIL_EPS) -> np.ndarray:
    """Log-probabilities of ``y = 0..T`` by summing over the resident count ``K``.

    Given ``K = k`` the visits are independent, each missed with probability
    ``q_k = (1-r)**k * exp(-(1-c)*mu*r)``, so ``Y | K=k ~ Binomial(T, 1-q_k)``.
    Every summand is nonnegative.  Terms are added outward from the Poisson
    mode, downward and then upward; each direction stops once a geometric
    bound on its remaining contribution is below ``tail_eps`` times every
    partial cell probability.  Poisson weights use the saddle-point form, so
    accuracy holds for large ``c*mu``.
    """
    if tail_eps <= 0:
        raise DomainError("tail_eps must be positive")
    if T < 1:
        raise DomainError(f"T must be a positive integer, got {T}")
    log_f = np.empty(T + 1)
    _kernels.conditional_sum(theta.mu, theta.r, theta.c, T, tail_eps, log_f)
    return log_f


def pmf_oracle(y: int, theta: ModelParams, T: int, tail_eps: float = DEFAULT_TAIL_EPS) -> float:
    """Probability of ``Y_i = y`` via the all-positive conditional-on-K sum."""
    _check_y(y, T)
    return float(np.exp(oracle_log_pmf(theta, T, tail_eps)[y]))


def log_pmf(theta: ModelParams, T: int) -> np.ndarray:
    """Log-probabilities ``log f(y; theta)`` for ``y = 0..T``.

    Uses the compensated closed form where its error bound is acceptable and
    the oracle sum elsewhere (including every ``y`` when ``T > 12``).
    """
    if T < 1:
        raise DomainError(f"T must be a positive integer, got {T}")
    out = np.empty(T + 1)
    _kernels.log_cells(
        theta.mu, theta.r, theta.c, T, CLOSED_FORM_MAX_T, CLOSED_FORM_RTOL, DEFAULT_TAIL_EPS, out
    )
    return out


def pmf(theta: ModelParams, T: int) -> np.ndarray:
    """Probabilities ``f(y; theta)`` for ``y = 0..T``."""
    return np.exp(log_pmf(theta, T))


def pmf_closed(y: int, theta: ModelParams, T: int) -> float:
    """Probability of ``Y_i = y`` from the explicit alternating sum.

    Falls back to :func:`pmf_oracle` for this ``y`` when cancellation makes
    the compensated sum untrustworthy.
    """
    _check_y(y, T)
    return float(np.exp(log_pmf(theta, T)[y]))


def f_zero_and_plus(theta: ModelParams, T: int) -> tuple[float, float]:
    """Return ``(f(0), 1 - f(0))``; ``f(0)`` has an exact single-term form."""
    resident = math.expm1(T * math.log1p(-theta.r)) if theta.r < 1.0 else -1.0
    log_f0 = -theta.d * theta.mu * theta.r * T + theta.c * theta.mu * resident
    return math.exp(log_f0), -math.expm1(log_f0)


def loglik_cells(mu, r, c, psi, m: np.ndarray, mode: int) -> float:
    """Log-likelihood from raw values; ``mode`` is one of the ``_kernels`` constants."""
    return _kernels.loglik_counts(
        float(mu), float(r), float(c), float(psi), m, mode, CLOSED_FORM_MAX_T, CLOSED_FORM_RTOL, DEFAULT_TAIL_EPS
    )


def loglik(theta: ModelParams, counts: SurveyCounts) -> float:
    """Multinomial log-likelihood ``sum_j m_j log f(j; theta)``.

    Returns ``-inf`` if a cell with ``m_j > 0`` has zero probability.
    """
    return loglik_cells(theta.mu, theta.r, theta.c, 1.0, counts.array, _kernels.PLAIN)


def zi_pmf(params: ZIModelParams, T: int) -> np.ndarray:
    """Cell probabilities of the zero-inflated model for ``y = 0..T``."""
    f = pmf(params.base, T)
    out = params.psi * f
    out[0] = 1.0 - params.psi * (1.0 - f[0])
    return out


def loglik_zi(params: ZIModelParams, counts: SurveyCounts) -> float:
    """Zero-inflated log-likelihood.

    ``m_0 log{(1-psi) + psi f(0)} + sum_{j>=1} m_j log{psi f(j)}``.
    """
    th = params.base
    return loglik_cells(th.mu, th.r, th.c, params.psi, counts.array, _kernels.ZERO_INFLATED)


def loglik_conditional(theta: ModelParams, counts: SurveyCounts) -> float:
    """Log-likelihood of the positive cells conditional on ``Y_i > 0``.

    Free of ``psi``; ``sum_{j>=1} m_j log{f(j) / (1 - f(0))}``.
    """
    return loglik_cells(theta.mu, theta.r, theta.c, 1.0, counts.array, _kernels.CONDITIONAL)


def derived_occupancy(theta: ModelParams, T: int) -> tuple[float, float]:
    """Per-visit occupancy ``P(N_ij > 0)`` and any-visit occupancy over ``T`` visits."""
    per_visit = -math.expm1(-theta.mu)
    any_visit = -math.expm1(-theta.mu - (T - 1) * theta.d * theta.mu)
    return per_visit, any_visit


def marginal_moments(theta: ModelParams, T: int) -> tuple[float, float]:
    """Return ``(E[Y_i], E[Y_i**2])``.

    The mean ``T*(1 - exp(-mu*r))`` does not depend on ``c``; the second
    moment is summed exactly from the probability function.
    """
    p = -math.expm1(-theta.mu * theta.r)
    y = np.arange(T + 1)
    return T * p, float(np.sum(y * y * pmf(theta, T)))


_PARAM_NAMES = ("mu", "r", "c")


def _with(theta: ModelParams, name: str, value: float) -> ModelParams:
    kw = {"mu": theta.mu, "r": theta.r, "c": theta.c}
    kw[name] = value
    return ModelParams(**kw)


def pmf_gradient(theta: ModelParams, T: int, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``f(0..T)`` with respect to ``(mu, r, c)``.

    Shape ``(3, T+1)``.  One-sided differences are used at ``c in {0, 1}``
    and ``r = 1``.
    """
    grad = np.empty((3, T + 1))
    upper = {"mu": np.inf, "r": 1.0, "c": 1.0}
    lower = {"mu": 0.0, "r": 0.0, "c": 0.0}
    for i, name in enumerate(_PARAM_NAMES):
        x = getattr(theta, name)
        h = rel_step * max(abs(x), 1e-2)
        up, lo = x + h, x - h
        if up > upper[name]:
            up = x
        if lo < lower[name] or (name != "c" and lo <= lower[name]):
            lo = x
        grad[i] = (pmf(_with(theta, name, up), T) - pmf(_with(theta, name, lo), T)) / (up - lo)
    return grad


def score(theta: ModelParams, counts: SurveyCounts) -> np.ndarray:
    """Score vector ``sum_j df(j)/dtheta * (m_j - n f(j)) / f(j)`` for ``(mu, r, c)``.

    Derivatives are central finite differences.  At ``c in {0, 1}`` the
    result is unreliable and a RuntimeWarning is emitted.
    """
    if theta.c in (0.0, 1.0):
        warnings.warn(
            "score evaluated at a boundary value of c is unreliable",
            RuntimeWarning,
            stacklevel=2,
        )
    T = counts.n_visits
    f = pmf(theta, T)
    grad = pmf_gradient(theta, T)
    m = counts.array
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(f > 0, (m - counts.n_sites * f) / f, 0.0)
    return grad @ w
