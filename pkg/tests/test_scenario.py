import numpy as np
import pytest

from isac_coop_sim import (Numerology, config_hash, derive_rng_stream,
                           load_scenario, serialize_scenario)
from isac_coop_sim.scenario import SPEED_OF_LIGHT, ScenarioError

FIG7_DOC = """
[numerology]
carrier_freq_hz = 24.0e9
subcarrier_spacing_hz = 30000.0
num_subcarriers = 3104
num_symbols = 112

[[site]]
id = 0
position_m = [0.0, 0.0, 0.0]
array_rows = 32
array_cols = 32

[[target]]
position_m = [500.0, 0.0, 0.0]
velocity_mps = [-27.0, 0.0, 0.0]

[[link]]
tx_site = 0
rx_site = 0
snr_db = 0.0

[experiment]
kind = "fig7"
trials = 5
master_seed = 11
"""


def test_fig7_preset_document_loads():
    config = load_scenario(FIG7_DOC)
    assert config.numerology.bandwidth_hz == pytest.approx(93.12e6)
    assert config.numerology.carrier_freq_hz == 24e9
    assert len(config.sites) == 1 and len(config.links) == 1
    assert config.targets[0].position_m == (500.0, 0.0, 0.0)


def test_zero_targets_is_valid():
    doc = FIG7_DOC.replace("""[[target]]
position_m = [500.0, 0.0, 0.0]
velocity_mps = [-27.0, 0.0, 0.0]

""", "")
    config = load_scenario(doc)
    assert config.targets == ()


def test_range_beyond_unambiguous_window_rejected():
    # c/(2 df) at 30 kHz, computed by hand: 4996.54 m.
    window = SPEED_OF_LIGHT / (2 * 30e3)
    assert window == pytest.approx(4996.5409666, abs=1e-4)
    doc = FIG7_DOC.replace("[500.0, 0.0, 0.0]", "[6000.0, 0.0, 0.0]")
    with pytest.raises(ScenarioError, match="unambiguous"):
        load_scenario(doc)


def test_doppler_beyond_window_rejected():
    doc = FIG7_DOC.replace("[-27.0, 0.0, 0.0]", "[-90.0, 0.0, 0.0]")
    with pytest.raises(ScenarioError, match="Doppler"):
        load_scenario(doc)


def test_monostatic_link_with_sync_error_rejected():
    doc = FIG7_DOC.replace("snr_db = 0.0", "snr_db = 0.0\ntiming_offset_s = 1.0e-6")
    with pytest.raises(ScenarioError, match="monostatic"):
        load_scenario(doc)


def test_link_to_unknown_site_rejected():
    doc = FIG7_DOC.replace("tx_site = 0\nrx_site = 0", "tx_site = 0\nrx_site = 7")
    with pytest.raises(ScenarioError, match="unknown site"):
        load_scenario(doc)


def test_schema_violation_names_key():
    with pytest.raises(ScenarioError, match="carrier_freq_hz"):
        load_scenario("[numerology]\nsubcarrier_spacing_hz = 1.0e4\n"
                      "num_subcarriers = 4\nnum_symbols = 4\n")


def test_round_trip_serialization():
    config = load_scenario(FIG7_DOC)
    text = serialize_scenario(config)
    again = load_scenario(text)
    assert again == config
    assert config_hash(again) == config_hash(config)


def test_derived_quantities_match_hand_computation():
    n = Numerology(carrier_freq_hz=24e9, subcarrier_spacing_hz=30e3,
                   num_subcarriers=3104, num_symbols=112, cp_fraction=0.125)
    assert n.bandwidth_hz == pytest.approx(3104 * 30e3, rel=1e-12)
    assert n.symbol_duration_s == pytest.approx(1.125 / 30e3, rel=1e-12)
    assert n.wavelength_m == pytest.approx(SPEED_OF_LIGHT / 24e9, rel=1e-12)
    assert n.range_resolution_m == pytest.approx(
        SPEED_OF_LIGHT / (2 * 93.12e6), rel=1e-12)
    assert n.velocity_resolution_mps == pytest.approx(
        (SPEED_OF_LIGHT / 24e9) / (2 * 112 * 1.125 / 30e3), rel=1e-12)


def test_defaults_filled():
    config = load_scenario(FIG7_DOC)
    assert config.numerology.cp_fraction == 0.125
    assert config.sites[0].element_spacing_wavelengths == 0.5
    assert config.targets[0].amplitude == 1 + 0j


def test_rng_stream_determinism_and_separation():
    a1 = derive_rng_stream(1, 0, "payload").standard_normal(8)
    a2 = derive_rng_stream(1, 0, "payload").standard_normal(8)
    np.testing.assert_array_equal(a1, a2)

    b = derive_rng_stream(1, 1, "payload").standard_normal(8)
    c = derive_rng_stream(1, 0, "noise").standard_normal(8)
    assert not np.allclose(a1, b)
    assert not np.allclose(a1, c)


def test_rng_purpose_enumeration_enforced():
    with pytest.raises(ScenarioError, match="purpose_tag"):
        derive_rng_stream(1, 0, "weather")
