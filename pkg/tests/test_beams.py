import numpy as np
import pytest

from isac_coop_sim import (ArrayGeometry, BeamWeights, SensingArea,
                           beam_efficiency, fused_gain, pattern, required_width,
                           steering_vector, synth_baba, synth_conventional)

GEOM = ArrayGeometry(rows=32, cols=32, spacing_wl=0.5)


def test_boresight_steering_equal_phase():
    v = steering_vector(GEOM, 0.0, 0.0)
    assert np.abs(v - v[0]).max() < 1e-12
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)


def test_conjugate_steering_array_gain():
    # Power gain rows*cols against a single element.
    bw = synth_conventional(GEOM, 0.2, -0.1)
    peak = pattern(bw, 0.2, -0.1)[0]
    single = BeamWeights(weights=np.eye(GEOM.num_elements)[:, 0].astype(complex),
                         geometry=GEOM)
    element = pattern(single, 0.2, -0.1)[0]
    assert (peak / element) ** 2 == pytest.approx(GEOM.num_elements, rel=1e-9)


def test_natural_hpbw_formula_matches_pattern_scan():
    # 0.886 lambda / (N d): 3.17 degrees for 32 elements at half-wavelength.
    hpbw = GEOM.natural_hpbw_rad
    assert np.degrees(hpbw) == pytest.approx(3.1728, abs=2e-3)
    bw = synth_conventional(GEOM, 0.0, 0.0)
    scan = np.linspace(-0.1, 0.1, 4001)
    amps = pattern(bw, scan, np.zeros_like(scan))
    above = scan[amps >= amps.max() / np.sqrt(2)]
    measured = above.max() - above.min()
    assert measured == pytest.approx(hpbw, rel=0.02)


def test_forward_hemisphere_precondition():
    with pytest.raises(ValueError, match="hemisphere"):
        steering_vector(GEOM, np.pi / 2 + 0.1, 0.0)


def test_required_width_formula():
    area = SensingArea(center_m=(50., 0., 0.), side_m=3.0)
    w = required_width(area, (0., 0., 0.))
    assert w == pytest.approx(2 * np.arctan(1.5 / 50.0), rel=1e-12)
    assert np.degrees(w) == pytest.approx(3.4369, abs=1e-3)
    w10 = required_width(SensingArea(center_m=(50., 0., 0.), side_m=10.0),
                         (0., 0., 0.))
    assert np.degrees(w10) == pytest.approx(11.4212, abs=1e-3)


def test_required_width_small_side_limit():
    w = required_width(SensingArea(center_m=(50., 0., 0.), side_m=1e-4),
                       (0., 0., 0.))
    assert w == pytest.approx(1e-4 / 50.0, rel=1e-6)


def test_required_width_bs_inside_area():
    with pytest.raises(ValueError, match="inside"):
        required_width(SensingArea(center_m=(1., 0., 0.), side_m=10.0),
                       (0., 0., 0.))


def test_synth_baba_natural_width_falls_back_to_pencil():
    hp = GEOM.natural_hpbw_rad
    bw, metrics = synth_baba(GEOM, 0.0, 0.0, 0.9 * hp)
    conv = synth_conventional(GEOM, 0.0, 0.0)
    np.testing.assert_allclose(bw.weights, conv.weights, atol=1e-12)
    bw0, _ = synth_baba(GEOM, 0.0, 0.0, 0.0)  # zero width: pencil
    np.testing.assert_allclose(bw0.weights, conv.weights, atol=1e-12)


def test_synth_baba_width_accuracy():
    hp = GEOM.natural_hpbw_rad
    for request in (hp, 3 * hp):
        bw, metrics = synth_baba(GEOM, 0.0, 0.0, request)
        assert abs(metrics.realized_width_rad - request) / request < 0.15


def test_synth_baba_wide_flat_top_ripple():
    hp = GEOM.natural_hpbw_rad
    request = 3 * hp
    bw, _ = synth_baba(GEOM, 0.0, 0.0, request)
    scan = np.linspace(-0.35 * request, 0.35 * request, 301)
    amps = pattern(bw, scan, np.zeros_like(scan))
    ripple_db = 20 * np.log10(amps.max() / amps.min())
    assert ripple_db < 3.0


def test_synth_baba_grid_too_coarse():
    hp = GEOM.natural_hpbw_rad
    with pytest.raises(ValueError, match="grid too coarse"):
        synth_baba(GEOM, 0.0, 0.0, 2 * hp, grid_pitch_rad=hp)


def test_unit_norm_weights():
    hp = GEOM.natural_hpbw_rad
    for request in (0.0, 1.5 * hp, 3 * hp):
        bw, _ = synth_baba(GEOM, 0.0, 0.0, request)
        assert np.linalg.norm(bw.weights) == pytest.approx(1.0, abs=1e-12)


def test_conventional_sector_mean_below_baba():
    # 2-D mean amplitude over a 3 HPBW sector (pattern integration):
    # the width-matched BABA beam covers the sector better than the pencil.
    bw = synth_conventional(GEOM, 0.0, 0.0)
    hp = GEOM.natural_hpbw_rad
    sector = 3 * hp
    axis = np.linspace(-sector / 2, sector / 2, 33)
    az, el = np.meshgrid(axis, axis, indexing="ij")
    conv_mean = pattern(bw, az.ravel(), el.ravel()).mean()
    baba, _ = synth_baba(GEOM, 0.0, 0.0, sector)
    baba_mean = pattern(baba, az.ravel(), el.ravel()).mean()
    assert baba_mean >= conv_mean


def make_ring_sites(distance, n_bs=4):
    from isac_coop_sim import BsSite
    return [BsSite(id=i, position_m=(float(distance * np.cos(a)),
                                     float(distance * np.sin(a)), 0.0),
                   array_rows=32, array_cols=32)
            for i, a in enumerate(np.linspace(0, 2 * np.pi, n_bs, endpoint=False))]


def test_fused_gain_perfect_registration_exact():
    # Perfect registration means every efficiency is 1; the gain is the
    # BS count exactly, checked through the combining formula.
    sites = make_ring_sites(50.0)
    area = SensingArea(center_m=(0., 0., 0.), side_m=4.0)
    width = required_width(area, sites[0].position)
    beams = [(s, synth_baba(GEOM, 0.0, 0.0, width)[0]) for s in sites]
    effs = [beam_efficiency(b, width) for _, b in beams]
    ideal = (sum(1.0 for _ in sites)) ** 2 / len(sites)
    assert ideal == 4.0
    gain = fused_gain(beams, area)
    assert gain == pytest.approx((sum(effs)) ** 2 / 4, rel=1e-12)


def test_fused_gain_single_bs_perfect_is_one():
    sites = make_ring_sites(50.0, n_bs=1)
    area = SensingArea(center_m=(0., 0., 0.), side_m=4.0)
    width = required_width(area, sites[0].position)
    bw, _ = synth_baba(GEOM, 0.0, 0.0, width)
    gain = fused_gain([(sites[0], bw)], area)
    assert gain <= 1.0 + 1e-12
    assert gain == pytest.approx(beam_efficiency(bw, width) ** 2, rel=1e-12)


def test_fused_gain_permutation_invariant():
    sites = make_ring_sites(50.0)
    area = SensingArea(center_m=(0., 0., 0.), side_m=5.0)
    width = required_width(area, sites[0].position)
    beams = [(s, synth_baba(GEOM, 0.0, 0.0, width)[0]) for s in sites]
    assert fused_gain(beams, area) == pytest.approx(
        fused_gain(beams[::-1], area), rel=1e-12)


def test_fused_gain_empty_list():
    with pytest.raises(ValueError, match="at least one"):
        fused_gain([], SensingArea(center_m=(0., 0., 0.), side_m=1.0))


def test_fused_gain_monotone_in_side_until_grid_span():
    """BABA re-synthesis: enlarging the unit never drops the gain by more
    than a small synthesis tolerance across the evaluated sweep."""
    sites = make_ring_sites(50.0)
    gains = []
    for side in np.arange(1.0, 10.01, 1.0):
        area = SensingArea(center_m=(0., 0., 0.), side_m=float(side))
        width = required_width(area, sites[0].position)
        beams = [(s, synth_baba(GEOM, 0.0, 0.0, width)[0]) for s in sites]
        gains.append(fused_gain(beams, area))
    drops = [a - b for a, b in zip(gains, gains[1:])]
    assert max(drops, default=0.0) < 0.12 * 4  # within 3% of the 4.0 scale
