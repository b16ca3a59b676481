"""Limits of misspecified estimators and the ZIB occupancy bias."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occmix.asymptotics import (
    LimitTarget,
    limit_c_to_zero,
    limit_nmix,
    zib_bias,
)
from occmix.errors import DomainError
from occmix.estimation import moment_estimators_from_moments
from occmix.model import ModelParams, f_zero_and_plus, marginal_moments


def test_limit_nmix_examples():
    pred = limit_nmix(ModelParams(1.0, 0.5, 0.5))
    assert pred.target_model is LimitTarget.NMIX_DOUBLE
    assert pred.predicted["mu"] == pytest.approx(2.0)
    assert pred.predicted["r"] == pytest.approx(0.25)
    assert not pred.diverges
    same = limit_nmix(ModelParams(1.3, 0.4, 1.0), "moment")
    assert same.target_model is LimitTarget.NMIX_MOMENT
    assert (same.predicted["mu"], same.predicted["r"]) == pytest.approx((1.3, 0.4))
    assert limit_nmix(ModelParams(2.0, 0.25, 0.25)).predicted["mu_r"] == pytest.approx(0.5)


def test_limit_nmix_at_c_zero_diverges():
    pred = limit_nmix(ModelParams(1.0, 0.5, 0.0))
    assert pred.diverges
    assert pred.predicted["mu"] == math.inf
    assert pred.predicted["r"] == 0.0
    assert pred.predicted["mu_r"] == pytest.approx(0.5)


def test_limit_nmix_rejects_unknown_mode():
    with pytest.raises(DomainError):
        limit_nmix(ModelParams(1.0, 0.5, 0.5), "profile")


def test_limit_c_to_zero():
    assert limit_c_to_zero(ModelParams(1.0, 0.5, 0.3)).predicted["mu_r"] == pytest.approx(0.5)
    assert limit_c_to_zero(ModelParams(2.0, 0.25, 0.3)).predicted["mu_r"] == pytest.approx(0.5)
    zi = limit_c_to_zero(ModelParams(1.0, 0.5, 0.0), zero_inflated=True, psi=0.7)
    assert zi.target_model is LimitTarget.ZIN_C_TO_0
    assert zi.predicted["psi"] == 0.7
    with pytest.raises(DomainError):
        limit_c_to_zero(ModelParams(1.0, 0.5, 0.0), zero_inflated=True)


@settings(max_examples=100, deadline=None)
@given(
    mu=st.floats(0.05, 8.0),
    r=st.floats(0.05, 1.0),
    c=st.floats(0.05, 1.0),
    T=st.integers(2, 10),
)
def test_moment_estimators_reach_limits(mu, r, c, T):
    theta = ModelParams(mu, r, c)
    ybar, y2bar = marginal_moments(theta, T)
    # r*c close to 1 drives the root to the end of the bracket
    if c * r > 0.999:
        return
    mu_hat, r_hat = moment_estimators_from_moments(ybar, y2bar, T)
    pred = limit_nmix(theta, "moment").predicted
    assert mu_hat == pytest.approx(pred["mu"], rel=1e-6)
    assert r_hat == pytest.approx(pred["r"], rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(
    mu=st.floats(0.05, 10.0),
    r=st.floats(0.05, 1.0),
    T=st.integers(2, 30),
    psi=st.floats(0.05, 1.0),
)
def test_delta_vanishes_at_c_zero(mu, r, T, psi):
    delta, psi0 = zib_bias(ModelParams(mu, r, 0.0), T, psi)
    assert abs(delta) < 1e-12
    assert psi0 == pytest.approx(psi, rel=1e-12)


@pytest.mark.parametrize("mu", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("r", [0.25, 0.5])
@pytest.mark.parametrize("T", [3, 7])
def test_delta_nondecreasing_in_c(mu, r, T):
    grid = np.linspace(0.0, 1.0, 21)
    deltas = [zib_bias(ModelParams(mu, r, c), T, 0.7)[0] for c in grid]
    assert np.all(np.diff(deltas) >= -1e-14)
    assert deltas[-1] > 0


def test_delta_on_coarse_grid():
    deltas = [zib_bias(ModelParams(1.0, 0.25, c), 5, 0.7)[0] for c in (0, 0.25, 0.5, 0.75, 1)]
    assert np.all(np.diff(deltas) > 0)


def test_delta_decreases_in_T():
    theta = ModelParams(1.0, 0.25, 0.5)
    deltas = [zib_bias(theta, T, 0.7)[0] for T in (5, 7, 10, 20, 50)]
    assert np.all(np.diff(deltas) < 0)
    assert deltas[-1] < 0.05 * deltas[0]


def test_zib_bias_underestimates():
    for c in (0.25, 0.5, 0.75):
        delta, psi0 = zib_bias(ModelParams(1.0, 0.5, c), 5, 0.7)
        assert delta > 0 and psi0 < 0.7


def test_zib_bias_formula():
    theta, T, psi = ModelParams(1.0, 0.5, 0.5), 5, 0.7
    p = 1 - math.exp(-0.5)
    b = (1 - p) ** T
    f0, _ = f_zero_and_plus(theta, T)
    delta = (1 - b) * (f0 - b) / (((1 - b) / p - T * (1 - p) ** (T - 1)) * (1 - f0))
    got = zib_bias(theta, T, psi)
    assert got[0] == pytest.approx(delta, rel=1e-12)
    assert got[1] == pytest.approx(p * psi / (p + delta), rel=1e-12)


def test_zib_bias_domain():
    with pytest.raises(DomainError):
        zib_bias(ModelParams(1.0, 0.5, 0.5), 1, 0.7)
    with pytest.raises(DomainError):
        zib_bias(ModelParams(1.0, 0.5, 0.5), 5, 1.2)
