import numpy as np
import pytest

from isac_coop_sim import (BsSite, LinkSpec, Numerology, SyncError, Target,
                           bistatic_delay, bistatic_doppler, derive_rng_stream,
                           generate_frame, synthesize_echo, channel_quotient,
                           refine_peak)
from isac_coop_sim.scenario import SPEED_OF_LIGHT

C = SPEED_OF_LIGHT


def test_monostatic_delay_500m():
    # 2 r / c by hand: 1000 / 299792458 s.
    tau = bistatic_delay((0, 0, 0), (500, 0, 0), (0, 0, 0))
    assert tau == pytest.approx(1000.0 / C, rel=1e-15)
    assert tau == pytest.approx(3.335640952e-06, rel=1e-9)


def test_delay_degenerate_coincidence():
    assert bistatic_delay((1, 2, 3), (1, 2, 3), (1, 2, 3)) == 0.0


def test_bistatic_straight_line_sum():
    tau = bistatic_delay((0, 0, 0), (100, 0, 0), (200, 0, 0))
    assert tau == pytest.approx(200.0 / C, rel=1e-15)
    assert tau == pytest.approx(0.667128e-06, rel=1e-6)


def test_monostatic_doppler_closing_27mps():
    # 2 v fc / c with c = 299792458: 4322.99 Hz (the stated oracle value).
    target = Target(position_m=(500, 0, 0), velocity_mps=(-27, 0, 0))
    fd = bistatic_doppler(target, (0, 0, 0), (0, 0, 0), 24e9)
    assert fd == pytest.approx(2 * 27 * 24e9 / C, rel=1e-12)
    assert fd == pytest.approx(4322.9897, abs=1e-3)
    assert fd > 0  # closing target, positive Doppler


def test_doppler_orthogonal_velocity_zero():
    target = Target(position_m=(100, 0, 0), velocity_mps=(0, 13, 0))
    fd = bistatic_doppler(target, (0, 0, 0), (200, 0, 0), 4e9)
    assert fd == pytest.approx(0.0, abs=1e-9)


def test_bistatic_single_leg_projection():
    # v aligned with the tx sight line only; 10 m/s at 4 GHz: 133.43 Hz.
    target = Target(position_m=(0, 100, 0), velocity_mps=(0, -10, 0))
    fd = bistatic_doppler(target, (0, 0, 0), (1000, 100, 0), 4e9)
    assert fd == pytest.approx(10 * 4e9 / C, rel=1e-12)
    assert fd == pytest.approx(133.4256, abs=1e-3)


def test_doppler_degenerate_geometry_raises():
    target = Target(position_m=(1, 1, 0), velocity_mps=(1, 0, 0))
    with pytest.raises(ValueError, match="degenerate"):
        bistatic_doppler(target, (1, 1, 0), (5, 5, 0), 1e9)


def test_noise_only_variance(small_numerology):
    num = Numerology(24e9, 30e3, 512, 256)
    site = BsSite(id=0, position_m=(0., 0., 0.))
    link = LinkSpec(0, 0, snr_db=3.0)
    frame = generate_frame(num, derive_rng_stream(2, 0, "payload"))
    rx = synthesize_echo(frame, link, {0: site}, [], derive_rng_stream(2, 0, "noise"))
    sigma2 = 10 ** (-3.0 / 10.0)
    assert rx.noise_variance == pytest.approx(sigma2, rel=1e-12)
    sample = np.mean(np.abs(rx.symbols) ** 2)
    assert sample == pytest.approx(sigma2, rel=0.05)


def test_single_tone_structure(small_numerology):
    site = BsSite(id=0, position_m=(0., 0., 0.))
    link = LinkSpec(0, 0, snr_db=np.inf)
    target = Target(position_m=(800., 0., 0.))  # static
    frame = generate_frame(small_numerology, derive_rng_stream(4, 0, "payload"))
    rx = synthesize_echo(frame, link, {0: site}, [target], None)
    g = channel_quotient(rx, frame).values
    # Constant along the symbol axis, exact exponential along subcarriers.
    assert np.abs(g - g[:, :1]).max() < 1e-12
    ratio = g[1:, 0] / g[:-1, 0]
    expected = np.exp(-2j * np.pi * small_numerology.subcarrier_spacing_hz
                      * 1600.0 / C)
    assert np.abs(ratio - expected).max() < 1e-12


def test_linearity_of_two_targets(small_numerology):
    site = BsSite(id=0, position_m=(0., 0., 0.))
    link = LinkSpec(0, 0, snr_db=np.inf)
    t1 = Target(position_m=(700., 0., 0.), velocity_mps=(-10., 0., 0.))
    t2 = Target(position_m=(1900., 200., 0.), velocity_mps=(5., 2., 0.),
                amplitude=0.5 - 0.2j)
    frame = generate_frame(small_numerology, derive_rng_stream(4, 0, "payload"))
    both = synthesize_echo(frame, link, {0: site}, [t1, t2], None).symbols
    one = synthesize_echo(frame, link, {0: site}, [t1], None).symbols
    two = synthesize_echo(frame, link, {0: site}, [t2], None).symbols
    scale = np.abs(both).max()
    np.testing.assert_allclose(both, one + two, rtol=0, atol=1e-12 * scale)


@pytest.mark.parametrize("payload_trial", [0, 1, 2])
def test_monostatic_geometry_recovered_regardless_of_payload(payload_trial):
    num = Numerology(24e9, 30e3, 256, 64)
    site = BsSite(id=0, position_m=(0., 0., 0.))
    link = LinkSpec(0, 0, snr_db=np.inf)
    target = Target(position_m=(1200., 0., 0.), velocity_mps=(-15., 0., 0.))
    frame = generate_frame(num, derive_rng_stream(9, payload_trial, "payload"))
    rx = synthesize_echo(frame, link, {0: site}, [target], None)
    g = channel_quotient(rx, frame)
    delay, doppler, _ = refine_peak(g, 4, 4)
    true_tau = 2 * 1200.0 / C
    true_fd = 2 * 15.0 * 24e9 / C
    assert abs(delay - true_tau) < 0.02 / (num.num_subcarriers * num.subcarrier_spacing_hz)
    assert abs(doppler - true_fd) < 0.02 / (num.num_symbols * num.symbol_duration_s)


def test_timing_offset_shifts_delay_estimate_exactly():
    num = Numerology(4e9, 120e3, 256, 32)
    sites = {0: BsSite(id=0, position_m=(0., 0., 0.)),
             1: BsSite(id=1, position_m=(50., -60., 0.))}
    target = Target(position_m=(150., 10., 0.), velocity_mps=(4., -3., 0.))
    frame = generate_frame(num, derive_rng_stream(6, 0, "payload"))

    delays = {}
    dopplers = {}
    for name, sync in {"clean": SyncError(), "offset": SyncError(0.9e-6, 140.0)}.items():
        link = LinkSpec(1, 0, snr_db=np.inf, sync_error=sync)
        rx = synthesize_echo(frame, link, sites, [target], None)
        d, f, _ = refine_peak(channel_quotient(rx, frame), 4, 4)
        delays[name], dopplers[name] = d, f

    bin_tau = 1.0 / (4 * num.num_subcarriers * num.subcarrier_spacing_hz)
    bin_f = 1.0 / (4 * num.num_symbols * num.symbol_duration_s)
    assert abs((delays["offset"] - delays["clean"]) - 0.9e-6) < bin_tau
    assert abs((dopplers["offset"] - dopplers["clean"]) - 140.0) < bin_f


def test_delay_window_violation_raises(small_numerology):
    site = BsSite(id=0, position_m=(0., 0., 0.))
    link = LinkSpec(0, 0, snr_db=np.inf)
    target = Target(position_m=(6000.0, 0., 0.))
    frame = generate_frame(small_numerology, derive_rng_stream(1, 0, "payload"))
    with pytest.raises(ValueError, match="unambiguous"):
        synthesize_echo(frame, link, {0: site}, [target], None)


def test_doppler_window_violation_raises():
    num = Numerology(24e9, 30e3, 64, 16)
    site = BsSite(id=0, position_m=(0., 0., 0.))
    link = LinkSpec(0, 0, snr_db=np.inf)
    # 1/(2 T_sym) = 13.33 kHz; 90 m/s at 24 GHz gives 14.4 kHz.
    target = Target(position_m=(500., 0., 0.), velocity_mps=(-90., 0., 0.))
    frame = generate_frame(num, derive_rng_stream(1, 0, "payload"))
    with pytest.raises(ValueError, match="Doppler"):
        synthesize_echo(frame, link, {0: site}, [target], None)
