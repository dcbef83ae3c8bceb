import math

import pytest
from hypothesis import given, strategies as st

from vmimo_highway.core import (InvalidParameterError, ScenarioParams, combined_snr_statistic,
                                decode_test, detect_test, ranges_from_thresholds,
                                thresholds_from_ranges)

distances = st.floats(min_value=1e-3, max_value=1e5, allow_nan=False, allow_infinity=False)


def test_empty_statistic_is_zero():
    assert combined_snr_statistic([]) == 0.0


def test_single_transmitter_statistic():
    assert combined_snr_statistic([200.0]) == pytest.approx(2.5e-5, rel=1e-15)


def test_three_transmitter_hand_sum():
    expected = 1 / 4e4 + 1 / 1.6e5 + 1 / 3.6e5
    assert combined_snr_statistic([200.0, 400.0, 600.0]) == pytest.approx(expected, rel=1e-14)
    assert combined_snr_statistic([200.0, 400.0, 600.0]) == pytest.approx(3.4028e-5, rel=1e-4)


@pytest.mark.parametrize("bad", [[0.0], [-1.0], [100.0, 0.0], [math.nan], [math.inf]])
def test_statistic_rejects_nonpositive_or_nonfinite(bad):
    with pytest.raises(InvalidParameterError):
        combined_snr_statistic(bad)


@pytest.mark.parametrize("args, expected", [
    ((4e4, 1.0, 1.0), (200.0, 200.0)),
    ((4e4, 1.0, 1.0 / 9.0), (200.0, 600.0)),
    ((1.0, 1.0, 0.25), (1.0, 2.0)),
])
def test_ranges_from_thresholds(args, expected):
    r, R = ranges_from_thresholds(*args)
    assert r == pytest.approx(expected[0], rel=1e-14)
    assert R == pytest.approx(expected[1], rel=1e-14)


def test_ranges_reject_inverted_thresholds():
    with pytest.raises(InvalidParameterError):
        ranges_from_thresholds(4e4, 1.0, 2.0)


@pytest.mark.parametrize("args", [(0.0, 1.0, 0.5), (1.0, -1.0, 0.5), (1.0, 1.0, 0.0)])
def test_ranges_reject_nonpositive(args):
    with pytest.raises(InvalidParameterError):
        ranges_from_thresholds(*args)


def test_decode_boundary_counts():
    assert decode_test(2.5e-5, 200.0)
    assert not decode_test(2.4e-5, 200.0)


def test_two_far_transmitters_combine_to_decode():
    assert decode_test(combined_snr_statistic([250.0, 250.0]), 200.0)
    assert not decode_test(combined_snr_statistic([250.0]), 200.0)


def test_detect_boundary_counts():
    assert detect_test(600.0, 600.0)
    assert not detect_test(600.0 + 1e-9, 600.0)


@given(st.lists(distances, max_size=20), st.lists(distances, max_size=20))
def test_statistic_additive_over_disjoint_sets(a, b):
    whole = combined_snr_statistic(a + b)
    parts = combined_snr_statistic(a) + combined_snr_statistic(b)
    assert whole == pytest.approx(parts, rel=1e-12)


@given(st.lists(distances, max_size=20), distances, st.floats(min_value=1.0, max_value=1e4))
def test_adding_transmitter_never_breaks_decode(ds, extra, r):
    if decode_test(combined_snr_statistic(ds), r):
        assert decode_test(combined_snr_statistic(ds + [extra]), r)


@given(st.floats(min_value=1.0, max_value=1e4), st.floats(min_value=0.01, max_value=100.0))
def test_single_transmitter_decodes_iff_within_range(r, scale):
    d = r * scale
    assert decode_test(combined_snr_statistic([d]), r) == (d * d <= r * r)


def test_single_transmitter_at_exact_range_decodes():
    for r in (1.0, 17.3, 200.0, 613.25):
        assert decode_test(combined_snr_statistic([r]), r)


@given(st.floats(min_value=1e-3, max_value=1e9), st.floats(min_value=1e-6, max_value=1e3),
       st.floats(min_value=1e-3, max_value=1.0))
def test_threshold_round_trip(c, gamma_dec, frac):
    gamma_det = gamma_dec * frac
    r, R = ranges_from_thresholds(c, gamma_dec, gamma_det)
    g_dec, g_det = thresholds_from_ranges(c, r, R)
    assert g_dec == pytest.approx(gamma_dec, rel=1e-12)
    assert g_det == pytest.approx(gamma_det, rel=1e-12)


def test_params_defaults():
    p = ScenarioParams()
    assert (p.lambda_r, p.lambda_f, p.v, p.r, p.R, p.tau) == (0.005, 0.005, 25.0, 200.0, 600.0, 0.025)
    assert p.lam == pytest.approx(0.01)
    assert p.relative_speed == 50.0


def test_params_from_thresholds_derive_ranges():
    p = ScenarioParams.from_thresholds(4e4, 1.0, 1.0 / 9.0)
    assert p.r == pytest.approx(200.0)
    assert p.R == pytest.approx(600.0)


@pytest.mark.parametrize("kwargs, message", [
    (dict(r=600.0, R=600.0), "requires R > r"),
    (dict(r=700.0, R=600.0), "requires R > r"),
    (dict(r=0.0), "requires r > 0"),
    (dict(tau=0.0), "requires tau > 0"),
    (dict(v=-1.0), "requires v > 0"),
    (dict(lambda_r=-0.1), "requires lambda_r >= 0"),
    (dict(lambda_f=-0.1), "requires lambda_f >= 0"),
    (dict(lambda_r=math.nan), "requires finite lambda_r"),
])
def test_params_reject_invalid(kwargs, message):
    with pytest.raises(InvalidParameterError, match=message):
        ScenarioParams(**kwargs)


def test_zero_speed_allowed_for_construction_but_not_validation():
    p = ScenarioParams(v=0.0)
    with pytest.raises(InvalidParameterError, match="requires v > 0"):
        p.validate()


def test_params_require_traffic():
    with pytest.raises(InvalidParameterError):
        ScenarioParams(lambda_r=0.0, lambda_f=0.0).require_traffic()


def test_partial_thresholds_rejected():
    with pytest.raises(InvalidParameterError):
        ScenarioParams(alpha_pt_over_n0=4e4, gamma_dec=1.0)


def test_with_replaces_fields_and_drops_raw_thresholds():
    p = ScenarioParams.from_thresholds(4e4, 1.0, 1.0 / 9.0).with_(v=10.0)
    assert p.v == 10.0 and p.alpha_pt_over_n0 is None
    assert p.R == pytest.approx(600.0)
