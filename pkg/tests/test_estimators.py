import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from contactlab.ensemble import Direction, Params, StreamKey, new_random_ensemble, new_synthetic_ensemble
from contactlab.estimators import (
    BracketError, EstimateSummary, FitError, RawTable, _decay_fit, bracket_critical_value,
    check_drift_lemma, check_duality, check_wald_identity, doubling_gate, estimate_confinement,
    estimate_spatial_reach, estimate_survival, estimate_temporal_tail, estimate_velocity,
    fit_log_linear, mean_se, proportion_se, replicate, survival_above, velocity_slopes,
    wilson_interval,
)
from contactlab.kernel import Configuration, SiteSet, run_coupled


# -------------------------------------------------------------- statistics

def test_wilson_known_value():
    lo, hi = wilson_interval(10, 100)
    assert lo == pytest.approx(0.05522914, abs=1e-7)
    assert hi == pytest.approx(0.17436566, abs=1e-7)


@given(st.integers(1, 5000), st.data())
def test_wilson_contains_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_interval(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


def test_zero_successes_interval():
    lo, hi = wilson_interval(0, 2000)
    assert lo == 0 and hi < 0.002


def test_summary_rejects_empty():
    with pytest.raises(ValueError):
        EstimateSummary("x", 0, 0, (0, 0), 0, 1, {})


def test_mean_se():
    m, se = mean_se([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5 and se == pytest.approx(math.sqrt(np.var([1, 2, 3, 4], ddof=1) / 4))


def test_exact_geometric_slope():
    fit = fit_log_linear([(n, 0.5 ** n, 0.0) for n in range(1, 6)])
    assert fit.slope == pytest.approx(math.log(0.5), abs=1e-14)
    assert fit.r_squared == pytest.approx(1.0)


def test_constant_probability_flags_r_squared():
    fit = fit_log_linear([(n, 0.3, 0.01) for n in range(1, 6)])
    assert fit.slope == pytest.approx(0.0, abs=1e-14)
    assert fit.r_squared is None and not fit.r_squared_defined


def test_too_few_points():
    with pytest.raises(FitError):
        fit_log_linear([(1, 0.5, 0.1), (2, 0.25, 0.1), (3, 0.0, 0.0)])


def test_zero_counts_are_listed():
    fit = fit_log_linear([(1, 0.5, 0.1), (2, 0.25, 0.05), (3, 0.1, 0.02), (4, 0.0, 0.0)],
                         n_reps=1000, counts=[500, 250, 100, 0])
    assert fit.excluded == [{"x": 4.0, "count": 0, "upper_bound": 0.003}]
    assert "x,log_p\n4.0" not in fit.x_log_p_csv()


def test_noisy_slope_recovered():
    rng = np.random.default_rng(12)
    n = 100_000
    xs = np.arange(1, 9)
    k = rng.binomial(n, np.exp(-0.3 * xs))
    fit = fit_log_linear([(x, c / n, proportion_se(c, n)) for x, c in zip(xs, k)])
    assert abs(fit.slope + 0.3) <= 3 * fit.slope_se


def test_all_zero_counts_report_error():
    fit = _decay_fit([1.0, 2.0, 3.0], np.zeros((50, 3)))
    assert fit.error is not None and fit.counts == [0, 0, 0]


def test_jackknife_close_to_weighted_se_for_independent_points():
    rng = np.random.default_rng(3)
    xs = [1.0, 2.0, 3.0, 4.0, 5.0]
    ind = rng.random((20000, 5)) < np.exp(-0.5 * np.array(xs))
    fit = _decay_fit(xs, ind)
    ratio = fit.extra["slope_se_jackknife"] / fit.slope_se
    assert 0.5 < ratio < 2.0


def test_doubling_gate_identical_paths():
    a = doubling_gate([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 3.0)
    assert a.passed and a.detail["identical_paths"] == 3


def test_raw_table_csv(tmp_path):
    p = tmp_path / "t.csv"
    RawTable(("rep", "v"), [(0, 1.5), (1, math.nan)]).write_csv(p)
    assert p.read_text() == "rep,v\n0,1.5\n1,\n"


def _square(i):
    return i * i


def test_replicate_order_independent_of_workers():
    assert replicate(_square, 50, 1) == replicate(_square, 50, 3) == [i * i for i in range(50)]
    assert replicate(_square, 5, 1, start=10) == [100, 121, 144, 169, 196]


# ---------------------------------------------------------------- survival

def test_deep_subcritical_survival_is_zero():
    s = estimate_survival(Params(0.1, 0.1), Configuration.eta0(), 20.0, 2000, 5)
    assert s.ci[1] < 0.01


def _lone_site(i):
    t = float(np.random.default_rng(i).exponential())
    return new_synthetic_ensemble([(t, StreamKey.recovery(0))] if t <= 10 else [], 10.0)


def test_survival_without_arrows_equals_no_recovery():
    s = estimate_survival(Params(1, 2), Configuration.eta0(), 10.0, 5000, 0, ensemble_fn=_lone_site)
    expected = sum(np.random.default_rng(i).exponential() > 10 for i in range(5000))
    assert s.extra["successes"] == expected
    assert s.estimate <= 5 * math.exp(-10) + 3 * math.sqrt(math.exp(-10) / 5000)


def test_survival_monotone_in_mu_under_shared_seeds():
    a = estimate_survival(Params(1.0, 1.5), Configuration.eta0(), 10.0, 300, 8)
    b = estimate_survival(Params(1.0, 2.5), Configuration.eta0(), 10.0, 300, 8)
    ra, rb = np.array(a.raw.rows), np.array(b.raw.rows)
    assert np.all(rb[:, 1:] >= ra[:, 1:])
    assert b.estimate >= a.estimate
    assert "at_double_horizon" in a.extra


def test_survival_needs_replications():
    with pytest.raises(ValueError):
        estimate_survival(Params(1, 1), Configuration.eta0(), 1.0, 0, 1)


# ------------------------------------------------------------ decay fits

def test_spatial_reach_small_run():
    fit = estimate_spatial_reach(Params(0.5, 0.5), 0, [1, 2, 3, 4], 10.0, 2000, 4)
    assert fit.error is None and fit.slope < 0
    assert fit.p_hat == sorted(fit.p_hat, reverse=True)
    assert fit.raw.columns == ("rep", "x_max", "x_min")


def test_spatial_reach_warns_above_estimate():
    with pytest.warns(UserWarning):
        estimate_spatial_reach(Params(2, 2), 0, [1, 2, 3], 1.0, 10, 1, mu_c_estimate=1.6)


def test_temporal_tail_coupled_check_is_exact():
    fit = estimate_temporal_tail(Params(0.8, 0.8), [0.0, 1.0, 2.0, 4.0], 1000, 6, coupled_check=True)
    assert fit.p_hat[0] == 1.0
    assert fit.extra["path_mismatches"] == 0
    assert fit.extra["contact_counts"] == fit.counts


def test_temporal_grid_must_increase():
    with pytest.raises(ValueError):
        estimate_temporal_tail(Params(1, 1), [2.0, 1.0, 3.0], 10, 1)


def test_confinement_single_site():
    mu = 0.1
    s = estimate_confinement(Params(mu, mu), 0, 20000, 5.0, 3)
    assert abs(s.estimate - 1 / (1 + 2 * mu)) <= 3 * s.se


def _escape_now(i):
    return new_synthetic_ensemble([(0.1, StreamKey.common(2, Direction.RIGHT))], 1.0)


def test_confinement_outward_arrow_breaks_it():
    s = estimate_confinement(Params(1, 1), 2, 3, 1.0, 0, ensemble_fn=_escape_now)
    assert s.estimate == 0.0


# ---------------------------------------------------------------- velocity

def _staircase(i):
    return new_synthetic_ensemble([(0.1 * (k + 1), StreamKey.common(k, Direction.RIGHT))
                                   for k in range(60)], 6.0)


@pytest.mark.parametrize("process", ["contact_from_halfline", "three_state_from_eta_bar"])
def test_regular_arrows_give_velocity_ten(process):
    grid = [0.1 * j + 0.05 for j in range(25, 51)]
    s = estimate_velocity(process, Params(1, 2), 5.1, 1, 5, 0, grid=grid, ensemble_fn=_staircase)
    assert s.estimate == pytest.approx(10.0, abs=1e-9)


def test_contact_velocity_grows_with_mu():
    a = velocity_slopes(Params(4, 4), 10.0, 5, 60, 2, ("contact_from_halfline",))[:, 0]
    b = velocity_slopes(Params(8, 8), 10.0, 5, 60, 2, ("contact_from_halfline",))[:, 0]
    assert np.all(b > 5)
    assert b.mean() > a.mean()


@given(st.integers(0, 2**63))
def test_contact_edge_monotone_in_mu(seed):
    grid = [2.0, 5.0]
    lo = run_coupled([("all_arrows", SiteSet.half_line(30))],
                     new_random_ensemble(Params(2.0, 2.0), seed, 5.0), 5.0, grid).records[0]
    hi = run_coupled([("all_arrows", SiteSet.half_line(30))],
                     new_random_ensemble(Params(2.0, 3.5), seed, 5.0), 5.0, grid).records[0]
    assert np.all(hi.r >= lo.r)


def test_three_state_velocity_requires_mu_above_lambda():
    with pytest.raises(ValueError):
        estimate_velocity("three_state_from_eta_bar", Params(2, 2), 5.0, 2, None, 1)
    with pytest.raises(ValueError):
        estimate_velocity("fastest", Params(1, 2), 5.0, 2, None, 1)


# ------------------------------------------------------------ competitions

def test_wald_rejects_lambda_at_least_mu():
    with pytest.raises(ValueError, match="mu > lambda"):
        check_wald_identity(Params(2, 2), 5.0, 10, None, 1)


def test_wald_near_equal_rates_has_few_residual_wins():
    rep = check_wald_identity(Params(0.999, 1.0), 50.0, 100, None, 2, gate=False)
    assert rep.values["mean_F"] < 0.1
    assert rep.raw["wald"].columns[:3] == ("rep", "F", "xbar")


def test_wald_small_run_identities():
    rep = check_wald_identity(Params(1, 2), 10.0, 100, 40, 3)
    assert {a.name for a in rep.assertions} >= {"wald_identity", "pathwise_identities",
                                                "doubling_gate_F"}
    assert rep.values["eq3_violations"] == rep.values["eq4_violations"] == 0


def test_drift_at_time_zero_is_one():
    rep = check_drift_lemma(Params(1.5, 1.5), [0.0], 20, None, 1, gate=False)
    assert rep.values["per_t"][0]["mean"] == 1.0 and rep.values["per_t"][0]["se"] == 0.0


def _nothing(i):
    return new_synthetic_ensemble([], 10.0)


def test_drift_without_events_is_one():
    rep = check_drift_lemma(Params(1.5, 1.5), [1.0, 5.0], 3, 10, 0, ensemble_fn=_nothing)
    assert [p["mean"] for p in rep.values["per_t"]] == [1.0, 1.0]
    assert rep.passed


def test_drift_pathwise_nonnegative():
    rep = check_drift_lemma(Params(1.5, 1.5), [1.0, 3.0], 200, None, 9)
    a = {x.name: x for x in rep.assertions}
    assert a["pathwise_nonnegative"].passed


def test_duality_small():
    rep = check_duality(1.5, [0], [-1, 0, 1], 1.0, 500, 4)
    assert rep.raw["reverse"].rows[0][0] == 500
    assert 0 < rep.values["forward"] <= 1


# ----------------------------------------------------------------- bracket

@pytest.mark.parametrize("interval,kw", [((1.0, 1.0), {}), ((2.0, 1.0), {}),
                                         ((0.5, 3.0), {"threshold": 0.0}),
                                         ((0.5, 3.0), {"threshold": 1.0})])
def test_bracket_validation(interval, kw):
    with pytest.raises(ValueError):
        bracket_critical_value(True, interval, 10.0, 10, 0.5, 1, **kw)


def test_bracket_only_symmetric():
    with pytest.raises(ValueError):
        bracket_critical_value(False, (0.5, 3.0), 10.0, 10, 0.5, 1)


def test_bracket_failure_is_explicit():
    with pytest.raises(BracketError):
        bracket_critical_value(True, (0.2, 0.4), 20.0, 100, 0.1, 1)


def test_bracket_finds_transition_and_is_stable():
    a = bracket_critical_value(True, (0.2, 10.0), 20.0, 200, 0.5, 7)
    lo, hi = a["interval"]
    assert hi - lo <= 0.5 and 0.2 <= lo < hi <= 10.0
    b = bracket_critical_value(True, (0.2, 10.0), 40.0, 200, 0.5, 7)
    assert b["interval"][0] <= hi and lo <= b["interval"][1]


def test_early_stop_matches_full_count():
    above, hits, runs = survival_above(2.0, 10.0, 300, 5, 0.05)
    _, full_hits, full_runs = survival_above(2.0, 10.0, 300, 5, 0.05, batch=300)
    assert above == (full_hits >= math.ceil(0.05 * 300))
    assert runs <= full_runs == 300
