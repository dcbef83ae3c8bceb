import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from vmimo_highway.analytic import (analytic_report, asymptotics_report, blocking_argument,
                                    blocking_probability, cubic_fit_r2, expected_max_hop,
                                    expected_stop_time, ips_conventional, ips_from_parts,
                                    ips_vmimo, mc_blocking_probability, mc_expected_max_hop,
                                    normal_cdf, prop2_expectations, propagate_expectations,
                                    renewal_expectations, transition_probabilities)
from vmimo_highway.core import DegenerateModelError, InvalidParameterError, ScenarioParams

# Frozen from a 30-digit mpmath evaluation of the same closed forms.
GOLDEN_PB = {0.002: 0.656679027651976, 0.004: 0.369101965783019,
             0.008: 0.0934662632872696, 0.01: 0.0458374921543978}
GOLDEN_DEFAULT = dict(ips_vmimo=1652.71737233066, e_t_prop=3.05016756981789,
                      e_d_prop=8346.49967581895, ips_conventional=547.769031617042)
GOLDEN_DENSE_VMIMO = 20869.565217391


def oracle_pb(lam, r, R):
    """Blocking probability through scipy's normal CDF."""
    mu = lam * (1 / r - 1 / R)
    sigma = math.sqrt(lam / 3 * (1 / r**3 - 1 / R**3))
    return math.exp(-lam * r) * stats.norm.cdf((1 / r**2 - mu) / sigma)


def oracle_ips(lr, lf, v, r, R, tau, conventional=False):
    """Reward rate written out term by term, without any rearrangement."""
    lam = lr + lf
    if conventional:
        pb, hop = math.exp(-lam * r), r
    else:
        pb, hop = oracle_pb(lam, r, R), lam * r * r * R / (lam * r * r + R)
    s1 = lr / lam * (1 - pb)
    s2 = 1 - s1
    a = s2 / s1 + s1
    t_prop = a * tau / pb + (s2 / s1) / (2 * v * lam)
    d_prop = a * hop / pb + (s2 / s1) / lam
    t_stop = 1 / (2 * v * lam)
    return d_prop / (t_prop + t_stop)


params_strategy = st.builds(
    lambda lr, lf, v, r, k, tau: ScenarioParams(lambda_r=lr, lambda_f=lf, v=v, r=r, R=r * k, tau=tau),
    st.floats(1e-4, 0.03), st.floats(0.0, 0.03), st.floats(1.0, 60.0),
    st.floats(50.0, 400.0), st.floats(1.1, 5.0), st.floats(0.005, 0.1))


@pytest.mark.parametrize("x", [-8.0, -3.0, -0.4161, 0.0, 1.0, 5.0])
def test_normal_cdf_matches_scipy(x):
    assert normal_cdf(x) == pytest.approx(stats.norm.cdf(x), abs=1e-15)


@pytest.mark.parametrize("lam, expected", sorted(GOLDEN_PB.items()))
def test_blocking_probability_golden(lam, expected):
    assert blocking_probability(lam, 200.0, 600.0) == pytest.approx(expected, rel=1e-12)
    assert blocking_probability(lam, 200.0, 600.0) == pytest.approx(oracle_pb(lam, 200, 600), rel=1e-12)


def test_blocking_probability_hand_chain():
    assert blocking_probability(0.01, 200.0, 600.0) == pytest.approx(0.0458, abs=5e-5)
    assert blocking_argument(0.01, 200.0, 600.0) == pytest.approx(-0.4161, abs=1e-4)


def test_blocking_probability_dense_is_tiny():
    assert blocking_probability(0.1, 200.0, 600.0) < 1e-8


def test_blocking_probability_monotone_probe():
    p = [blocking_probability(x, 200.0, 600.0) for x in (0.002, 0.004, 0.008)]
    assert p[0] > p[1] > p[2]


def test_blocking_argument_strictly_decreasing_in_density():
    lams = np.linspace(1e-4, 0.1, 400)
    args = np.array([blocking_argument(x, 200.0, 600.0) for x in lams])
    assert np.all(np.diff(args) < 0)
    pbs = np.array([blocking_probability(x, 200.0, 600.0) for x in lams])
    assert np.all(np.diff(pbs) <= 0)
    # strict wherever the normal factor is resolvable in double precision
    assert np.all(np.diff(pbs[lams >= 1e-3]) < 0)


def test_blocking_probability_strictly_decreasing_in_detection_range():
    Rs = np.linspace(201.0, 1000.0, 200)
    pbs = np.array([blocking_probability(0.01, 200.0, R) for R in Rs])
    assert np.all(np.diff(pbs) < 0)


@pytest.mark.parametrize("R", [200.0, 150.0])
def test_blocking_probability_rejects_degenerate_ranges(R):
    with pytest.raises(InvalidParameterError, match="requires R > r"):
        blocking_probability(0.01, 200.0, R)


def test_mc_blocking_default_point():
    est, se = mc_blocking_probability(0.01, 200.0, 600.0, 1_000_000, 12345)
    ref = blocking_probability(0.01, 200.0, 600.0)
    assert abs(est - ref) / ref <= 0.15
    assert se > 0


def test_mc_blocking_is_seeded():
    a = mc_blocking_probability(0.01, 200.0, 600.0, 50_000, 7)
    b = mc_blocking_probability(0.01, 200.0, 600.0, 50_000, 7)
    assert a == b


def test_mc_blocking_empty_sum_branch():
    est, _ = mc_blocking_probability(1e-6, 200.0, 600.0, 10_000, 1)
    assert est == pytest.approx(math.exp(-1e-6 * 200.0), rel=1e-3)


def test_mc_blocking_oracle_independent_loop():
    """Per-sample loop oracle agrees with the vectorized estimator on the same draws."""
    rng = np.random.default_rng(3)
    lam, r, R, n = 0.01, 200.0, 600.0, 20_000
    counts = rng.poisson(lam * (R - r), size=n)
    d = rng.uniform(r, R, size=int(counts.sum()))
    blocked, k = 0, 0
    for c in counts:
        blocked += sum(1.0 / x**2 for x in d[k:k + c]) < 1.0 / r**2
        k += c
    loop = math.exp(-lam * r) * blocked / n
    est, _ = mc_blocking_probability(lam, r, R, n, 3, chunk=n)
    assert est == pytest.approx(loop, rel=1e-12)


@pytest.mark.parametrize("args, expected", [
    ((0.005, 0.005, 0.0), (0.5, 0.5, 0.5, 0.5)),
    ((0.005, 0.005, 0.0458), (0.4771, 0.4771, 0.4771, 0.5229)),
    ((0.004, 0.001, 1.0), (0.0, 0.0, 0.0, 1.0)),
])
def test_transition_probabilities(args, expected):
    t = transition_probabilities(*args)
    assert (t.p_f, t.p_r, t.sigma1, t.sigma2) == pytest.approx(expected, abs=1e-12)


def test_transition_probabilities_reject_no_traffic():
    with pytest.raises(InvalidParameterError):
        transition_probabilities(0.0, 0.0, 0.1)


@given(st.floats(0, 1), st.floats(1e-6, 1), st.floats(0, 1))
def test_transition_identities(lr, lf, pb):
    t = transition_probabilities(lr, lf, pb)
    assert t.sigma1 + t.sigma2 == pytest.approx(1.0, abs=1e-15)
    assert t.p_f + t.p_r + t.p_b == pytest.approx(1.0, abs=1e-15)
    assert all(0.0 <= x <= 1.0 for x in (t.p_b, t.p_f, t.p_r, t.sigma1, t.sigma2))
    if lr > 0 and pb < 1:
        assert t.p_r / t.p_f == pytest.approx(lr / lf, rel=1e-12)


def test_stop_time_values():
    assert expected_stop_time(1.0, 0.5) == 1.0
    assert expected_stop_time(0.01, 25.0) == pytest.approx(2.0)
    assert expected_stop_time(0.01, 50.0) == pytest.approx(expected_stop_time(0.01, 25.0) / 2)


@pytest.mark.parametrize("args", [(0.0, 25.0), (0.01, 0.0), (-1.0, 1.0)])
def test_stop_time_rejects_nonpositive(args):
    with pytest.raises(InvalidParameterError):
        expected_stop_time(*args)


def test_prop2_values():
    assert prop2_expectations(0.01, 25.0) == pytest.approx((2.0, 100.0))
    assert prop2_expectations(1.0, 0.5) == pytest.approx((1.0, 1.0))


@given(st.floats(1e-5, 1.0), st.floats(0.1, 100.0))
def test_prop2_carry_identity(lam, v):
    t, d = prop2_expectations(lam, v)
    assert t * 2 * v == pytest.approx(d, rel=1e-14)


def test_expected_max_hop_values_and_limits():
    assert expected_max_hop(0.01, 200.0, 600.0) == pytest.approx(240.0)
    assert expected_max_hop(1e3, 200.0, 600.0) == pytest.approx(600.0, rel=1e-4)
    assert expected_max_hop(1e3, 200.0, 600.0) < 600.0
    assert expected_max_hop(1e-9, 200.0, 600.0) == pytest.approx(1e-9 * 200.0**2, rel=1e-6)


def test_mc_expected_max_hop_default_point():
    est, se = mc_expected_max_hop(0.01, 200.0, 600.0, 100_000, 2024)
    assert abs(est - 240.0) / 240.0 <= 0.20
    assert se > 0


def test_mc_expected_max_hop_dense_stays_below_R():
    for construction in ("cloud", "chained"):
        est, _ = mc_expected_max_hop(0.2, 200.0, 600.0, 2000, 5, construction=construction,
                                     chunk=500)
        assert 0.8 * 600.0 < est < 600.0


def test_mc_expected_max_hop_empty_traffic_contributes_zero():
    est, _ = mc_expected_max_hop(1e-7, 200.0, 600.0, 2000, 1)
    assert est == 0.0


def test_mc_expected_max_hop_seeded():
    a = mc_expected_max_hop(0.01, 200.0, 600.0, 3000, 4)
    b = mc_expected_max_hop(0.01, 200.0, 600.0, 3000, 4)
    assert a == b


def _chained_hop_loop(ahead, r, R):
    informed = [0.0]
    best = 0.0
    for x in ahead:
        if x > R:
            break
        s = sum(1.0 / (x - t) ** 2 for t in informed if x - t <= R)
        if s < 1.0 / r**2:
            break
        informed.append(x)
        best = x
    return best


def _cloud_hop_loop(ahead, cloud, r, R):
    best = 0.0
    for x in ahead:
        s = 1.0 / x**2 + sum(1.0 / (x - c) ** 2 for c in cloud if x - c <= R)
        if s >= 1.0 / r**2:
            best = max(best, x)
    return best


@pytest.mark.parametrize("construction", ["cloud", "chained"])
def test_mc_expected_max_hop_matches_loop_oracle(construction):
    """Rebuild the estimator's draws and recompute each slot with plain loops."""
    lam, r, R, n, seed = 0.01, 200.0, 600.0, 300, 17
    est, _ = mc_expected_max_hop(lam, r, R, n, seed, construction=construction, chunk=n)
    rng = np.random.default_rng(seed)

    def rows():
        counts = rng.poisson(lam * R, size=n)
        width = max(int(counts.max()), 1)
        x = rng.uniform(0.0, R, size=(n, width))
        return [np.sort(x[i, :c]) for i, c in enumerate(counts)]

    ahead = rows()
    if construction == "cloud":
        cloud = [-c for c in rows()]
        hops = [_cloud_hop_loop(a, c, r, R) for a, c in zip(ahead, cloud)]
    else:
        hops = [_chained_hop_loop(a, r, R) for a in ahead]
    assert est == pytest.approx(float(np.mean(hops)), rel=1e-12)


def test_propagate_expectations_default():
    t, d = propagate_expectations(0.005, 0.005, 25.0, 200.0, 600.0, 0.025)
    assert t == pytest.approx(GOLDEN_DEFAULT["e_t_prop"], rel=1e-10)
    assert d == pytest.approx(GOLDEN_DEFAULT["e_d_prop"], rel=1e-10)
    # hand chain carried to four figures
    assert t == pytest.approx(3.050, abs=1e-3)
    assert d == pytest.approx(8344.0, rel=1e-3)


def test_propagate_expectations_reject_degenerate():
    with pytest.raises(DegenerateModelError):
        propagate_expectations(0.0, 0.01, 25.0, 200.0, 600.0, 0.025)


@settings(max_examples=200)
@given(params_strategy)
def test_prop_i_terms_share_factor(p):
    t, d = propagate_expectations(p.lambda_r, p.lambda_f, p.v, p.r, p.R, p.tau)
    s1 = transition_probabilities(p.lambda_r, p.lambda_f,
                                  blocking_probability(p.lam, p.r, p.R)).sigma1
    ratio = (1 - s1) / s1
    hop = expected_max_hop(p.lam, p.r, p.R)
    lhs = t - ratio / (2 * p.v * p.lam)
    rhs = (p.tau / hop) * (d - ratio / p.lam)
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_ips_vmimo_default_golden():
    p = ScenarioParams()
    assert ips_vmimo(p) == pytest.approx(GOLDEN_DEFAULT["ips_vmimo"], rel=1e-10)
    assert ips_vmimo(p) == pytest.approx(oracle_ips(0.005, 0.005, 25, 200, 600, 0.025), rel=1e-10)
    assert ips_vmimo(p) == pytest.approx(1.65e3, rel=0.01)


def test_ips_conventional_default_golden():
    p = ScenarioParams()
    assert ips_conventional(p) == pytest.approx(GOLDEN_DEFAULT["ips_conventional"], rel=1e-10)
    assert ips_conventional(p) == pytest.approx(
        oracle_ips(0.005, 0.005, 25, 200, 600, 0.025, conventional=True), rel=1e-10)
    assert ips_conventional(p) == pytest.approx(5.48e2, rel=0.01)


def test_ips_vmimo_dense_below_ceiling():
    p = ScenarioParams(lambda_r=0.05, lambda_f=0.05)
    v = ips_vmimo(p)
    assert v == pytest.approx(GOLDEN_DENSE_VMIMO, rel=1e-9)
    assert 0.85 * p.R / p.tau <= v < p.R / p.tau


def test_ips_conventional_dense_approaches_single_hop_ceiling():
    for lam in (0.02, 0.05, 0.1):
        p = ScenarioParams(lambda_r=lam, lambda_f=lam)
        assert ips_conventional(p) < p.r / p.tau
    assert ips_conventional(ScenarioParams(lambda_r=0.05, lambda_f=0.05)) >= 7000.0


@pytest.mark.parametrize("fn", [ips_vmimo, ips_conventional])
def test_low_density_limit_is_carry_speed_in_reverse_frame(fn):
    # sigma1 -> 0 leaves the carried beacon moving at the relative speed 2v
    p = ScenarioParams(lambda_r=1e-5, lambda_f=1e-5)
    assert fn(p) == pytest.approx(2 * p.v, rel=0.05)


def test_rearranged_form_is_continuous():
    lam, v, tau, hop = 0.01, 25.0, 0.025, 300.0
    below = ips_from_parts(0.999e-12, 0.4, hop, lam, v, tau)
    above = ips_from_parts(1.001e-12, 0.4, hop, lam, v, tau)
    assert below == pytest.approx(above, rel=1e-9)


def test_ips_finite_when_blocking_underflows():
    p = ScenarioParams(lambda_r=1.0, lambda_f=1.0)
    assert math.isfinite(ips_vmimo(p))
    assert ips_vmimo(p) < p.R / p.tau


@pytest.mark.parametrize("fn", [ips_vmimo, ips_conventional])
def test_ips_degenerate_without_reverse_traffic(fn):
    with pytest.raises(DegenerateModelError):
        fn(ScenarioParams(lambda_r=0.0, lambda_f=0.01))


def test_ips_rejects_zero_speed():
    with pytest.raises(InvalidParameterError, match="requires v > 0"):
        ips_vmimo(ScenarioParams(v=0.0))


@settings(max_examples=300)
@given(params_strategy)
def test_ips_equals_reward_ratio(p):
    e = renewal_expectations(p)
    ratio = e.e_d_prop / (e.e_t_prop + e.e_t_stop)
    assert ips_vmimo(p) == pytest.approx(ratio, rel=1e-9)


@settings(max_examples=300)
@given(params_strategy)
def test_ips_matches_unrearranged_oracle(p):
    pb = blocking_probability(p.lam, p.r, p.R)
    if pb < 1e-12:
        return
    expected = oracle_ips(p.lambda_r, p.lambda_f, p.v, p.r, p.R, p.tau)
    assert ips_vmimo(p) == pytest.approx(expected, rel=1e-9)


@settings(max_examples=300)
@given(params_strategy)
def test_ceilings(p):
    assert 0 < ips_vmimo(p) < p.R / p.tau + 2 * p.v
    assert 0 < ips_conventional(p) < p.r / p.tau + 2 * p.v


def test_ceilings_at_default_geometry():
    for lam in np.geomspace(1e-3, 0.2, 30):
        p = ScenarioParams(lambda_r=lam, lambda_f=lam)
        assert ips_vmimo(p) < p.R / p.tau
        assert ips_conventional(p) < p.r / p.tau


def test_gain_on_dense_grid_exceeds_one():
    for lam in np.linspace(0.003, 0.05, 40):
        p = ScenarioParams(lambda_r=lam, lambda_f=lam)
        assert ips_vmimo(p) >= ips_conventional(p)


def test_ips_monotone_in_speed_and_bounded():
    speeds = [5.0, 10.0, 20.0, 40.0, 80.0, 160.0]
    base = ScenarioParams(lambda_r=0.003, lambda_f=0.003)
    vals = [ips_vmimo(base.with_(v=v)) for v in speeds]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals == pytest.approx([47.03, 93.51, 184.8, 361.1, 690.4, vals[-1]], rel=1e-3)
    caps = [asymptotics_report(base.with_(v=v)).infinite_speed_limit for v in speeds]
    assert all(x <= c for x, c in zip(vals, caps))
    # the cap is the large-speed limit itself
    assert ips_vmimo(base.with_(v=1e9)) == pytest.approx(caps[0], rel=1e-6)


def test_analytic_report_consistency():
    rep = analytic_report(ScenarioParams())
    assert rep.gain == pytest.approx(rep.ips_vmimo / rep.ips_conventional)
    assert rep.transition.p_b == pytest.approx(GOLDEN_PB[0.01], rel=1e-12)
    e = rep.expectations
    assert e.e_t_prop2 == pytest.approx(e.e_d_prop2 / (2 * 25.0))
    assert all(v >= 0 for _, v in rep.rows())
    assert rep.gain == pytest.approx(1652.717 / 547.769, rel=1e-5)


def test_asymptotics_defaults():
    a = asymptotics_report(ScenarioParams())
    assert a.high_density_limit == pytest.approx(24000.0)
    assert a.gain_limit == pytest.approx(3.0)
    assert a.high_density_approx == pytest.approx(9600.0)
    assert a.zero_speed_limit == 0.0
    assert a.high_density_approx < a.high_density_limit
    assert a.gain_high_density_approx < a.gain_limit
    assert a.low_density_limit == pytest.approx(50.0)


def test_zero_speed_limit_matches_closed_form_trend():
    vals = [ips_vmimo(ScenarioParams(v=v)) for v in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 1e-2


def test_cubic_fit_helper_recovers_exact_cubic():
    x = np.linspace(1e-4, 1e-3, 10)
    assert cubic_fit_r2(x, 3e9 * x**3 + 7.0) == pytest.approx(1.0)
    assert cubic_fit_r2(x, np.ones_like(x)) == 1.0
