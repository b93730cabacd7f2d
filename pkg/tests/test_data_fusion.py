import numpy as np
import pytest

from isac_coop_sim import (Estimate, Numerology, Target, build_confidence_interval,
                           build_confidence_region, multilaterate, refine_peak,
                           to_range_velocity, weighted_average)
from isac_coop_sim.data_fusion import multilaterate_residual
from isac_coop_sim.scenario import SPEED_OF_LIGHT
from tests.conftest import make_channel


def est(r, v=0.0, snr=0.0, score=1.0):
    return Estimate(range_m=r, velocity_mps=v, score=score, snr_db=snr)


def test_weighted_average_identity():
    e = est(432.1, 7.7)
    out = weighted_average([e])
    assert out.range_m == e.range_m and out.velocity_mps == e.velocity_mps


def test_weighted_average_symmetry():
    out = weighted_average([est(499.0), est(501.0)], [1.0, 1.0])
    assert out.range_m == pytest.approx(500.0, rel=1e-12)


def test_weighted_average_hand_arithmetic():
    out = weighted_average([est(400.0), est(600.0)], [1.0, 3.0])
    assert out.range_m == pytest.approx(550.0, rel=1e-12)


def test_weighted_average_default_weights_follow_snr():
    # Linear SNR weights: 10 dB is 10x the weight of 0 dB.
    out = weighted_average([est(100.0, snr=0.0), est(200.0, snr=10.0)])
    assert out.range_m == pytest.approx((100 + 10 * 200) / 11, rel=1e-12)


def test_weighted_average_permutation_invariant():
    a = [est(10.0, 1.0), est(20.0, 2.0), est(40.0, 3.0)]
    w = [1.0, 2.0, 5.0]
    out1 = weighted_average(a, w)
    out2 = weighted_average(a[::-1], w[::-1])
    assert out1.range_m == pytest.approx(out2.range_m, rel=1e-14)
    assert out1.velocity_mps == pytest.approx(out2.velocity_mps, rel=1e-14)


def test_weighted_average_idempotent_on_identical_inputs():
    out = weighted_average([est(77.0, 3.0)] * 4)
    assert out.range_m == pytest.approx(77.0, rel=1e-14)


def test_weighted_average_errors():
    with pytest.raises(ValueError, match="at least one"):
        weighted_average([])
    with pytest.raises(ValueError, match="zero"):
        weighted_average([est(1.0), est(2.0)], [0.0, 0.0])


SQUARE = [np.array([0., 0., 0.]), np.array([1000., 0., 0.]),
          np.array([1000., 1000., 0.]), np.array([0., 1000., 0.])]


def test_multilaterate_exact_square():
    p_true = np.array([312.0, 577.0])
    ranges = [(bs, float(np.linalg.norm(p_true - bs[:2]))) for bs in SQUARE]
    p = multilaterate(ranges)
    assert np.linalg.norm(p - p_true) < 1e-6
    assert multilaterate_residual(p, ranges) < 1e-9


def test_multilaterate_perturbed_ranges_grid_oracle():
    rng = np.random.default_rng(5)
    p_true = np.array([430.0, 310.0])
    for _ in range(20):
        ranges = [(bs, float(np.linalg.norm(p_true - bs[:2])) + rng.uniform(-1.6, 1.6))
                  for bs in SQUARE]
        p = multilaterate(ranges)
        assert np.linalg.norm(p - p_true) < 5.0
        # Gauss-Newton solution at least as good as a 1 m brute-force grid.
        xs = np.arange(p_true[0] - 6, p_true[0] + 6.01, 1.0)
        ys = np.arange(p_true[1] - 6, p_true[1] + 6.01, 1.0)
        best = min(multilaterate_residual((x, y), ranges) for x in xs for y in ys)
        assert multilaterate_residual(p, ranges) <= best + 1e-9


def test_multilaterate_underdetermined():
    with pytest.raises(ValueError, match=">= 3"):
        multilaterate([(SQUARE[0], 10.0), (SQUARE[1], 20.0)])


def test_multilaterate_collinear():
    anchors = [np.array([0., 0., 0.]), np.array([10., 0., 0.]), np.array([20., 0., 0.])]
    with pytest.raises(ValueError, match="collinear"):
        multilaterate([(a, 5.0) for a in anchors])


def test_confidence_region_arithmetic():
    # Range bin c/(2 * 93.12 MHz) = 1.6097 m; kappa 2 doubles it.
    bin_m = SPEED_OF_LIGHT / (2 * 93.12e6)
    region = build_confidence_region((10.0, -3.0), bin_m, kappa=2.0)
    assert region.half_widths_m[0] == pytest.approx(2 * bin_m, rel=1e-12)
    assert region.half_widths_m[0] == pytest.approx(3.2194, abs=2e-4)
    assert region.contains((10.0, -3.0))
    assert region.area_m2 > 0


def test_confidence_region_scaling():
    region = build_confidence_region((0.0, 0.0), 1.0, kappa=0.5)
    assert region.half_widths_m == (0.5, 0.5)


def test_confidence_interval_arithmetic():
    num = Numerology(24e9, 30e3, 3104, 112)
    bin_v = num.velocity_resolution_mps
    iv = build_confidence_interval(27.0, bin_v, kappa=2.0)
    assert iv.half_width_mps == pytest.approx(2 * bin_v, rel=1e-12)
    iv0 = build_confidence_interval(0.0, 1.0)
    assert iv0.contains(0.0)


def test_confidence_errors():
    with pytest.raises(ValueError):
        build_confidence_region((0, 0), 0.0)
    with pytest.raises(ValueError):
        build_confidence_interval(0.0, -1.0)


def test_monte_carlo_coverage_at_0db():
    """Confidence region/interval coverage at SNR 0 dB, default sizing."""
    num = Numerology(24e9, 30e3, 128, 32)
    bin_r = num.range_resolution_m
    bin_v = num.velocity_resolution_mps
    r_true, v_true = 900.0, 9.0
    target = Target(position_m=(r_true, 0., 0.), velocity_mps=(-v_true, 0., 0.))
    hits_r = 0
    hits_v = 0
    trials = 500
    for t in range(trials):
        g, link, _, _ = make_channel(num, target, snr_db=0.0, seed=77,
                                     payload_trial=t)
        d, f, s = refine_peak(g, 4, 4)
        e = to_range_velocity(d, f, link, 0.0, num, score=s)
        region = build_confidence_region((e.range_m, 0.0), bin_r, kappa=2.0)
        interval = build_confidence_interval(e.velocity_mps, bin_v, kappa=2.0)
        hits_r += region.contains((r_true, 0.0))
        hits_v += interval.contains(v_true)
    assert hits_r / trials >= 0.95
    assert hits_v / trials >= 0.95
