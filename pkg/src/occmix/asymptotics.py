"""Large-sample limits of estimators fitted under a misspecified ``c``.

These are reference curves: where the closed model (``c = 1``) or the
zero-inflated binomial (``c = 0``) is fitted to data from an intermediate
``c``, the functions below give the value the estimator settles on as the
number of sites grows.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from occmix.errors import DomainError
from occmix.model import ModelParams, f_zero_and_plus

DIVERGES = math.inf


class LimitTarget(enum.Enum):
    NMIX_DOUBLE = "nmix_double"
    NMIX_MOMENT = "nmix_moment"
    NMIX_C_TO_0 = "nmix_c_to_0"
    ZIB = "zib"
    ZIN_C_TO_0 = "zin_c_to_0"


@dataclass(frozen=True)
class LimitPrediction:
    """Predicted limits; ``markers`` describes any non-finite behavior."""

    target_model: LimitTarget
    predicted: dict[str, float]
    valid_range: tuple[float, float]
    markers: dict[str, str] = field(default_factory=dict)

    @property
    def diverges(self) -> bool:
        return bool(self.markers)


def limit_nmix(theta_true: ModelParams, mode: str = "double_visit") -> LimitPrediction:
    """Limits of the closed-model ``(mu, r)`` estimators: ``(mu/c, c*r)``.

    ``mode`` is ``"double_visit"`` (MLE with two visits) or ``"moment"``
    (moment estimators, any number of visits).  The product ``mu*r`` is
    preserved.  At ``c = 0`` the abundance estimate diverges.
    """
    if mode not in ("double_visit", "moment"):
        raise DomainError(f"unknown mode {mode!r}")
    target = LimitTarget.NMIX_DOUBLE if mode == "double_visit" else LimitTarget.NMIX_MOMENT
    mu, r, c = theta_true.mu, theta_true.r, theta_true.c
    if c == 0:
        pred = limit_c_to_zero(theta_true)
        return LimitPrediction(target, pred.predicted, (0.0, 1.0), pred.markers)
    return LimitPrediction(
        target,
        {"mu": mu / c, "r": c * r, "mu_r": mu * r},
        (0.0, 1.0),
    )


def limit_c_to_zero(
    theta_true: ModelParams, zero_inflated: bool = False, psi: float | None = None
) -> LimitPrediction:
    """Limits as ``c -> 0``: abundance diverges, detection vanishes, ``mu*r`` holds.

    For the zero-inflated closed model the occupancy estimate is consistent.
    """
    predicted = {"mu": DIVERGES, "r": 0.0, "mu_r": theta_true.mu * theta_true.r}
    markers = {"mu": "diverges to +inf", "r": "tends to 0"}
    target = LimitTarget.NMIX_C_TO_0
    if zero_inflated:
        if psi is None:
            raise DomainError("psi is required for the zero-inflated limit")
        predicted["psi"] = psi
        target = LimitTarget.ZIN_C_TO_0
    return LimitPrediction(target, predicted, (0.0, 0.0), markers)


def zib_bias(theta_true: ModelParams, T: int, psi: float) -> tuple[float, float]:
    """Linearized ZIB occupancy bias: returns ``(delta, psi0_approx)``.

    With ``p = 1 - exp(-mu r)``, ``b = (1-p)**T`` and ``f0 = f(0; theta)``::

        delta = (1 - b)(f0 - b) / ([(1 - b)/p - T (1-p)**(T-1)] (1 - f0))
        psi0_approx = p psi / (p + delta)

    ``delta`` is zero at ``c = 0`` and grows with ``c``.
    """
    if T < 2:
        raise DomainError("T must be at least 2")
    if not 0 <= psi <= 1:
        raise DomainError("psi must lie in [0, 1]")
    log_1mp = -theta_true.mu * theta_true.r
    p = -math.expm1(log_1mp)
    b = math.exp(T * log_1mp)
    f0, fplus = f_zero_and_plus(theta_true, T)
    denom = ((1.0 - b) / p - T * math.exp((T - 1) * log_1mp)) * fplus
    delta = (1.0 - b) * (f0 - b) / denom
    return delta, p * psi / (p + delta)
