import numpy as np
import pytest

from isac_coop_sim import (BsSite, LinkSpec, Numerology, Target,
                           derive_rng_stream, generate_frame, synthesize_echo,
                           channel_quotient)


@pytest.fixture
def small_numerology():
    """Light numerology for fast unit tests."""
    return Numerology(carrier_freq_hz=24e9, subcarrier_spacing_hz=30e3,
                      num_subcarriers=128, num_symbols=32)


@pytest.fixture
def fig7_numerology():
    """Full 93.12 MHz numerology used by the headline experiment."""
    return Numerology(carrier_freq_hz=24e9, subcarrier_spacing_hz=30e3,
                      num_subcarriers=3104, num_symbols=112)


def make_channel(numerology, target, snr_db=np.inf, seed=0,
                 site_pos=(0.0, 0.0, 0.0), payload_trial=0):
    """Single monostatic link pipeline up to the quotient matrix."""
    site = BsSite(id=0, position_m=tuple(float(x) for x in site_pos))
    link = LinkSpec(0, 0, snr_db=snr_db)
    frame = generate_frame(numerology, derive_rng_stream(seed, payload_trial, "payload"))
    noise = None if snr_db == np.inf else derive_rng_stream(seed, payload_trial, "noise")
    rx = synthesize_echo(frame, link, {0: site}, [target], noise)
    return channel_quotient(rx, frame), link, site, frame
