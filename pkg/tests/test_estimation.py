"""Maximum-likelihood, two-stage, closed-form and moment estimators."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from occmix.errors import (
    DegenerateData,
    DomainError,
    InvalidStatistic,
    NoRoot,
    SingularInformation,
)
from occmix.estimation import (
    Family,
    FitResult,
    ModelSpec,
    OptimOptions,
    aic,
    boundary_flags,
    closed_form_double_visit,
    fit,
    fit_zi_conditional,
    joint_loglik,
    moment_estimators,
    moment_estimators_from_moments,
    starting_points,
    std_errors,
)
from occmix.model import (
    ModelParams,
    SurveyCounts,
    ZIModelParams,
    f_zero_and_plus,
    loglik,
    marginal_moments,
    pmf,
    zi_pmf,
)
from occmix.rng import substream

NO_SE = OptimOptions(compute_se=False)


def draw_counts(params, T, n, rng):
    """Site totals drawn straight from the model probability function."""
    p = zi_pmf(params, T) if isinstance(params, ZIModelParams) else pmf(params, T)
    return SurveyCounts.from_frequencies(rng.multinomial(n, p / p.sum()))


def expected_counts(params, T, n):
    p = zi_pmf(params, T) if isinstance(params, ZIModelParams) else pmf(params, T)
    m = np.round(n * p).astype(int)
    m[0] += n - m.sum()
    return SurveyCounts.from_frequencies(m)


# ---------------------------------------------------------------------------
# model specifications


def test_family_defaults_are_fixed():
    assert ModelSpec.of("nmix").fixed_values == {"c": 1.0}
    assert ModelSpec.of("zib").fixed_values == {"r": 1.0, "c": 0.0}
    assert ModelSpec.of("zin").free == ("mu", "r", "psi")
    assert ModelSpec.of("zinc").free == ("mu", "r", "c", "psi")


def test_fixing_c_selects_fixed_variant():
    spec = ModelSpec.of("ncmix", c=0.5)
    assert spec.family is Family.NCMIX_FIXED_C
    assert spec.free == ("mu", "r")
    assert spec.name == "NCMIX[c=0.5]"
    assert ModelSpec.of("zinc", c=0.25).family is Family.ZINC_FIXED_C


@pytest.mark.parametrize(
    "family, fixed",
    [("nmix", {"c": 0.5}), ("zib", {"r": 0.5}), ("ncmix", {"psi": 0.5}), ("ncmix", {"q": 1.0})],
)
def test_invalid_specs(family, fixed):
    with pytest.raises(DomainError):
        ModelSpec.of(family, **fixed)


def test_free_parameter_counts():
    k = {f: ModelSpec.of(f).n_free for f in ("nmix", "ncmix", "zib", "zin", "zinc")}
    assert k == {"nmix": 2, "ncmix": 3, "zib": 2, "zin": 3, "zinc": 4}


def test_min_visits():
    assert ModelSpec.of("ncmix").min_visits == 3
    assert ModelSpec.of("zinc").min_visits == 4
    assert ModelSpec.of("nmix").min_visits == 2


def test_aic_counts_only_free_parameters():
    counts = SurveyCounts.from_frequencies([5, 3, 2])
    res = FitResult(ModelSpec.of("ncmix"), counts, {}, {}, -100.0, 0.0, True)
    assert aic(res) == 206.0


# ---------------------------------------------------------------------------
# fitting


def test_nmix_consistent_at_true_model():
    theta = ModelParams(1.0, 0.5, 1.0)
    counts = draw_counts(theta, 5, 100_000, substream(101))
    res = fit(ModelSpec.of("nmix"), counts)
    assert res.converged
    assert 0.97 <= res.estimates["mu"] <= 1.03
    assert 0.485 <= res.estimates["r"] <= 0.515
    assert res.aic == pytest.approx(2 * 2 - 2 * res.loglik)


def test_fit_never_below_starting_points():
    theta = ModelParams(1.5, 0.4, 0.6)
    rng = substream(102)
    for family in ("nmix", "ncmix", "zin", "zinc"):
        params = ZIModelParams(theta, 0.8) if family.startswith("zi") else theta
        counts = draw_counts(params, 6, 400, rng)
        res = fit(ModelSpec.of(family), counts, NO_SE)
        assert res.start_logliks
        assert res.loglik >= max(res.start_logliks) - 1e-12


@pytest.mark.parametrize("c", [1.0, 0.5])
def test_fixed_c_fit_matches_closed_form(c):
    counts = SurveyCounts.from_frequencies([50, 30, 20])
    res = fit(ModelSpec.of("ncmix", c=c), counts, NO_SE)
    mu, r = closed_form_double_visit(counts, c)
    assert res.estimates["mu"] == pytest.approx(mu, abs=1e-6)
    assert res.estimates["r"] == pytest.approx(r, abs=1e-6)


def test_closed_form_example():
    counts = SurveyCounts.from_frequencies([50, 30, 20])
    z1, z2 = math.log(200 / 130), math.log(0.5)
    mu1, r1 = closed_form_double_visit(counts, 1.0)
    assert mu1 == pytest.approx(z1 * z1 / (2 * z1 + z2), rel=1e-14)
    assert r1 == pytest.approx((2 * z1 + z2) / z1, rel=1e-14)
    # independent check: maximize the closed-model likelihood directly
    neg = lambda x: -loglik(ModelParams(x[0], x[1], 1.0), counts)
    opt = optimize.minimize(neg, [1.0, 0.5], method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 10_000})
    assert opt.x == pytest.approx([mu1, r1], abs=1e-6)
    mu_h, r_h = closed_form_double_visit(counts, 0.5)
    assert mu_h == pytest.approx(0.5 * mu1, rel=1e-14)
    assert r_h == pytest.approx(2 * r1, rel=1e-14)


@pytest.mark.parametrize("m", [[100, 0, 0], [0, 50, 50], [10, 0, 90]])
def test_closed_form_rejects_boundary_data(m):
    with pytest.raises(InvalidStatistic):
        closed_form_double_visit(SurveyCounts.from_frequencies(m), 1.0)


def test_closed_form_rejects_r_above_one():
    # moderately dispersed data imply r > 1 once c is small
    counts = SurveyCounts.from_frequencies([50, 30, 20])
    with pytest.raises(InvalidStatistic):
        closed_form_double_visit(counts, 0.2)


@settings(max_examples=60, deadline=None)
@given(
    m0=st.integers(20, 200),
    m1=st.integers(1, 200),
    m2=st.integers(1, 200),
    c=st.floats(0.05, 1.0),
)
def test_closed_form_product_invariant_in_c(m0, m1, m2, c):
    counts = SurveyCounts.from_frequencies([m0, m1, m2])
    try:
        mu1, r1 = closed_form_double_visit(counts, 1.0)
        mu_c, r_c = closed_form_double_visit(counts, c)
    except InvalidStatistic:
        return
    assert mu_c * r_c == pytest.approx(mu1 * r1, rel=1e-12)


def test_zib_profile_identity():
    # 60 % empty sites, remaining mass binomial
    T, n = 6, 10_000
    p = 0.3
    occ = np.array([math.comb(T, y) * p**y * (1 - p) ** (T - y) for y in range(1, T + 1)])
    m = np.round(0.4 * n * occ / occ.sum()).astype(int)
    counts = SurveyCounts.from_frequencies([n - m.sum(), *m])
    res = fit(ModelSpec.of("zib"), counts, NO_SE)
    p_hat = -math.expm1(-res.estimates["mu"])
    lhs = res.estimates["psi"] * -math.expm1(T * math.log1p(-p_hat))
    assert lhs == pytest.approx(counts.sample_occupancy, abs=1e-8)
    assert p_hat == pytest.approx(p, abs=0.01)


def test_degenerate_data():
    with pytest.raises(DegenerateData):
        fit(ModelSpec.of("nmix"), SurveyCounts.from_frequencies([30, 0, 0, 0]))
    with pytest.raises(DegenerateData):
        fit_zi_conditional(ModelSpec.of("zin"), SurveyCounts.from_frequencies([30, 0, 0, 0]))


def test_identifiability_warning_still_fits():
    counts = SurveyCounts.from_frequencies([40, 20, 15, 10])
    res = fit(ModelSpec.of("zinc"), counts, NO_SE)
    assert any("not identifiable" in w for w in res.warnings)
    assert math.isfinite(res.loglik)


@pytest.mark.parametrize(
    "null, alt", [("nmix", "ncmix"), ("zib", "zinc"), ("zin", "zinc")]
)
def test_nested_likelihood_dominance(null, alt):
    rng = substream(103)
    theta = ModelParams(1.2, 0.45, 0.5)
    for _ in range(5):
        counts = draw_counts(ZIModelParams(theta, 0.7), 6, 300, rng)
        if null == "nmix":
            counts = draw_counts(theta, 6, 300, rng)
        f0 = fit(ModelSpec.of(null), counts, NO_SE)
        f1 = fit(ModelSpec.of(alt), counts, NO_SE)
        k0, k1 = f0.n_free, f1.n_free
        assert f1.loglik >= f0.loglik - 1e-7
        assert f1.aic <= f0.aic + 2 * (k1 - k0) + 2e-7


def test_transform_invariance():
    """Transformed-scale optimum equals a directly bounded natural-scale optimum."""
    rng = substream(104)
    spec = ModelSpec.of("nmix")
    for _ in range(20):
        theta = ModelParams(rng.uniform(0.5, 3.0), rng.uniform(0.2, 0.8), 1.0)
        counts = draw_counts(theta, 5, 300, rng)
        res = fit(spec, counts, NO_SE)
        neg = lambda x: -joint_loglik(spec, counts, {"mu": x[0], "r": x[1]})
        direct = min(
            (
                optimize.minimize(neg, [s["mu"], s["r"]], method="L-BFGS-B",
                                  bounds=[(1e-6, 1e6), (1e-8, 1 - 1e-8)],
                                  options={"ftol": 1e-15, "gtol": 1e-10})
                for s in starting_points(spec, counts, NO_SE)
            ),
            key=lambda o: o.fun,
        )
        assert res.loglik >= -direct.fun - 1e-8
        assert res.loglik == pytest.approx(-direct.fun, abs=1e-6)
        assert [res.estimates["mu"], res.estimates["r"]] == pytest.approx(direct.x, rel=1e-3)


def test_fisher_like_data_favor_zinc():
    """With true c = 0.5, ZINC has the smallest AIC in most replicates."""
    specs = [ModelSpec.of(f) for f in ("nmix", "ncmix", "zib", "zin", "zinc")]
    params = ZIModelParams(ModelParams(0.65, 0.43, 0.5), 0.18)
    wins = 0
    n_rep = 200
    for rep in range(n_rep):
        counts = draw_counts(params, 8, 464, substream(105, rep))
        aics = []
        for spec in specs:
            try:
                aics.append(fit(spec, counts, NO_SE).aic)
            except DegenerateData:
                aics.append(math.inf)
        wins += int(np.argmin(aics) == 4)
    assert wins > n_rep / 2


# ---------------------------------------------------------------------------
# two-stage estimation


def test_two_stage_matches_joint():
    params = ZIModelParams(ModelParams(2.0, 0.5, 0.5), 0.7)
    counts = draw_counts(params, 7, 100_000, substream(106))
    spec = ModelSpec.of("zinc")
    joint = fit(spec, counts)
    two = fit_zi_conditional(spec, counts)
    assert two.method == "two-stage"
    for name in spec.free:
        assert two.estimates[name] == pytest.approx(joint.estimates[name], abs=1e-5)
    se = joint.std_errors["psi"]
    assert abs(joint.estimates["psi"] - 0.7) < 3 * se


def test_two_stage_psi_when_detection_is_certain():
    # f(+) = 1 for ZIB once mu is large: psi = 1 - m0/n
    counts = SurveyCounts.from_frequencies([60, 0, 0, 0, 40])
    res = fit_zi_conditional(ModelSpec.of("zib"), counts, NO_SE)
    assert res.estimates["psi"] == pytest.approx(0.4, abs=1e-6)


def test_two_stage_clamps_psi():
    # near-binomial positive cells with few zeros push the ratio above 1
    counts = SurveyCounts.from_frequencies([1, 40, 30, 10])
    res = fit_zi_conditional(ModelSpec.of("zib"), counts, NO_SE)
    _, fplus = f_zero_and_plus(ModelParams(res.estimates["mu"], 1.0, 0.0), 3)
    assert counts.sample_occupancy / fplus > 1
    assert res.estimates["psi"] == 1.0
    assert "psi" in res.boundary_flags
    assert any("clamped" in w for w in res.warnings)


def test_two_stage_requires_zero_inflation():
    with pytest.raises(DomainError):
        fit_zi_conditional(ModelSpec.of("nmix"), SurveyCounts.from_frequencies([5, 3, 2]))


# ---------------------------------------------------------------------------
# moment estimators


@pytest.mark.parametrize(
    "theta, expected",
    [(ModelParams(1.0, 0.5, 1.0), (1.0, 0.5)), (ModelParams(1.0, 0.5, 0.5), (2.0, 0.25))],
)
def test_moment_estimators_on_exact_moments(theta, expected):
    mu, r = moment_estimators_from_moments(*marginal_moments(theta, 5), 5)
    assert (mu, r) == pytest.approx(expected, abs=1e-8)


def test_moment_estimators_independence_has_no_root():
    with pytest.raises(NoRoot):
        moment_estimators_from_moments(*marginal_moments(ModelParams(1.0, 0.5, 0.0), 5), 5)


def test_moment_estimators_from_counts():
    counts = expected_counts(ModelParams(1.0, 0.5, 1.0), 5, 10**7)
    assert moment_estimators(counts) == pytest.approx((1.0, 0.5), abs=1e-4)


def test_moment_estimators_edge_cases():
    with pytest.raises(NoRoot):
        moment_estimators(SurveyCounts.from_frequencies([10, 0, 0]))
    with pytest.raises(DomainError):
        moment_estimators(SurveyCounts.from_frequencies([10, 5]))


# ---------------------------------------------------------------------------
# standard errors


def test_standard_errors_match_monte_carlo_spread():
    theta = ModelParams(1.0, 0.5, 1.0)
    spec = ModelSpec.of("nmix")
    est, ses = [], []
    for rep in range(500):
        counts = draw_counts(theta, 5, 2000, substream(107, rep))
        res = fit(spec, counts, NO_SE)
        est.append([res.estimates["mu"], res.estimates["r"]])
        if rep < 50:
            se = std_errors(spec, counts, res.estimates)
            ses.append([se["mu"], se["r"]])
    ratio = np.median(ses, axis=0) / np.std(est, axis=0, ddof=1)
    assert np.all((ratio > 0.8) & (ratio < 1.25))


def test_standard_errors_scale_with_root_n():
    theta = ModelParams(1.5, 0.4, 0.6)
    spec = ModelSpec.of("ncmix")
    se = []
    for n in (100_000, 200_000):
        res = fit(spec, expected_counts(theta, 6, n))
        se.append(np.array([res.std_errors[k] for k in spec.free]))
    assert se[1] / se[0] == pytest.approx(np.full(3, 1 / math.sqrt(2)), rel=0.1)


def test_standard_errors_at_boundary():
    counts = SurveyCounts.from_frequencies([40, 20, 15, 10, 5])
    with pytest.raises(SingularInformation):
        std_errors(ModelSpec.of("ncmix"), counts, {"mu": 1.0, "r": 0.5, "c": 1.0})


def test_boundary_flags():
    flags = boundary_flags({"mu": 5e-6, "r": 0.5, "c": 1 - 5e-8}, ("mu", "r", "c"))
    assert flags == {"mu", "c"}
    assert boundary_flags({"mu": 2e5, "psi": 0.3}, ("mu", "psi")) == {"mu"}


def test_fit_is_deterministic():
    counts = draw_counts(ModelParams(1.0, 0.4, 0.5), 5, 300, substream(108))
    a = fit(ModelSpec.of("ncmix"), counts)
    b = fit(ModelSpec.of("ncmix"), counts)
    assert a.estimates == b.estimates and a.std_errors == b.std_errors


def test_extra_starts_are_used():
    counts = SurveyCounts.from_frequencies([40, 20, 15, 10, 5])
    opts = dataclasses.replace(NO_SE, n_starts=1, extra_starts=({"mu": 2.0, "r": 0.3},))
    starts = starting_points(ModelSpec.of("nmix"), counts, opts)
    assert starts[-1] == {"mu": 2.0, "r": 0.3}
    assert len(starts) == 2
