import numpy as np
import pytest

from isac_coop_sim import (BsSite, LinkSpec, Numerology, Target,
                           build_confidence_interval, build_confidence_region,
                           channel_quotient, dense_grid_search, derive_rng_stream,
                           generate_frame, hypothesis_score, iterative_refine,
                           steering_signature, synthesize_echo, RefineParams)
from isac_coop_sim.signal_fusion import LinkScoreEvaluator, build_evaluators, link_delay_doppler

HEADING = np.array([0.6, 0.8, 0.0])


def scene(num, n_bs=4, pos=(12.0, -7.0), speed=9.0, seed=3, snr_db=np.inf):
    azimuths = [0.2, 1.8, 3.3, 4.9, 0.9][:n_bs]
    sites = {i: BsSite(id=i, position_m=(float(400 * np.cos(a)),
                                         float(400 * np.sin(a)), 0.0))
             for i, a in enumerate(azimuths)}
    target = Target(position_m=(pos[0], pos[1], 0.0),
                    velocity_mps=tuple(speed * HEADING))
    links = [LinkSpec(i, i, snr_db=snr_db) for i in range(n_bs)]
    rng = derive_rng_stream(seed, 0, "payload")
    noise = derive_rng_stream(seed, 0, "noise") if snr_db != np.inf else None
    channels = []
    for link in links:
        frame = generate_frame(num, rng)
        rx = synthesize_echo(frame, link, sites, [target], noise)
        channels.append(channel_quotient(rx, frame))
    return channels, sites, target


def test_signature_matched_case(small_numerology):
    channels, sites, target = scene(small_numerology, n_bs=1)
    s = steering_signature(channels[0].link, sites, (12.0, -7.0), 9.0, HEADING,
                           small_numerology)
    product = channels[0].values * np.conj(s)
    np.testing.assert_allclose(product, 1.0, atol=1e-9)


def test_signature_zero_doppler_constant_along_symbols(small_numerology):
    link = LinkSpec(0, 0)
    sites = {0: BsSite(id=0, position_m=(0., 0., 0.))}
    s = steering_signature(link, sites, (100.0, 50.0), 0.0, HEADING,
                           small_numerology)
    assert np.abs(s - s[:, :1]).max() < 1e-12


def test_signature_energy(small_numerology):
    link = LinkSpec(0, 0)
    sites = {0: BsSite(id=0, position_m=(0., 0., 0.))}
    s = steering_signature(link, sites, (313.0, -88.0), 14.0, HEADING,
                           small_numerology)
    n, m = small_numerology.num_subcarriers, small_numerology.num_symbols
    assert np.sum(np.abs(s) ** 2) == pytest.approx(n * m, rel=1e-12)


def test_score_matched_single_link(small_numerology):
    channels, sites, _ = scene(small_numerology, n_bs=1)
    score = hypothesis_score(channels, sites, (12.0, -7.0), 9.0, HEADING)
    n, m = small_numerology.num_subcarriers, small_numerology.num_symbols
    assert score == pytest.approx(n * m, rel=1e-9)


def test_score_four_links_fusion_gain(small_numerology):
    channels, sites, _ = scene(small_numerology, n_bs=4)
    score = hypothesis_score(channels, sites, (12.0, -7.0), 9.0, HEADING)
    n, m = small_numerology.num_subcarriers, small_numerology.num_symbols
    assert score == pytest.approx(4 * n * m, rel=1e-9)


def test_score_far_candidate_low(small_numerology):
    channels, sites, _ = scene(small_numerology, n_bs=1)
    n, m = small_numerology.num_subcarriers, small_numerology.num_symbols
    # Incoherent-sum bound: far off the true parameters the coherent sum
    # collapses; check a candidate far outside the scene.
    score = hypothesis_score(channels, sites, (180.0, 150.0), -20.0, HEADING)
    assert score < 0.05 * n * m


def test_score_phase_invariance_per_link(small_numerology):
    channels, sites, _ = scene(small_numerology, n_bs=2)
    base = hypothesis_score(channels, sites, (12.5, -6.5), 8.0, HEADING)
    from isac_coop_sim import ChannelMatrix
    rotated = [ChannelMatrix(values=channels[0].values * np.exp(1j * 1.234),
                             numerology=small_numerology, link=channels[0].link),
               channels[1]]
    rot = hypothesis_score(rotated, sites, (12.5, -6.5), 8.0, HEADING)
    assert rot == pytest.approx(base, rel=1e-12)


def test_evaluator_matches_direct_scoring(small_numerology):
    channels, sites, _ = scene(small_numerology, n_bs=3)
    region = build_confidence_region((12.4, -6.7), 1.61, kappa=2.0)
    interval = build_confidence_interval(8.4, 1.5, kappa=2.0)
    evals = build_evaluators(channels, sites, region, interval, HEADING)
    rng = np.random.default_rng(8)
    for _ in range(10):
        xy = (region.center_m[0] + rng.uniform(-3, 3),
              region.center_m[1] + rng.uniform(-3, 3))
        v = interval.center_mps + rng.uniform(-2.9, 2.9)
        direct = hypothesis_score(channels, sites, xy, v, HEADING)
        fast = 0.0
        for ev, ch in zip(evals, channels):
            tau, fd = link_delay_doppler(ch.link, sites, xy, v, HEADING,
                                         small_numerology)
            fast += float(ev.scores([tau], [fd])[0])
        assert fast == pytest.approx(direct, rel=1e-10)


def test_evaluator_rejects_out_of_radius(small_numerology):
    channels, sites, _ = scene(small_numerology, n_bs=1)
    region = build_confidence_region((12.0, -7.0), 0.5, kappa=1.0)
    interval = build_confidence_interval(9.0, 0.5, kappa=1.0)
    ev, = build_evaluators(channels, sites, region, interval, HEADING)
    with pytest.raises(ValueError, match="validity"):
        ev.scores([ev.tau0 + 10 * ev.dtau_max], [ev.f0])


def test_refine_converges_noise_free(small_numerology):
    channels, sites, target = scene(small_numerology, n_bs=4)
    region = build_confidence_region((12.0, -7.0), 1.61, kappa=2.0)
    interval = build_confidence_interval(9.0, 1.5, kappa=2.0)
    result = iterative_refine(channels, sites, region, interval, HEADING,
                              RefineParams(max_iterations=6))
    assert abs(result.position_m[0] - 12.0) < 0.05
    assert abs(result.position_m[1] + 7.0) < 0.05
    assert result.iterations <= 6
    # Final position inside the initial region.
    assert region.contains(result.position_m)


def test_refine_trace_scores_non_decreasing(small_numerology):
    channels, sites, _ = scene(small_numerology, n_bs=4, snr_db=0.0)
    region = build_confidence_region((12.3, -7.2), 1.61, kappa=2.0)
    interval = build_confidence_interval(8.6, 1.5, kappa=2.0)
    result = iterative_refine(channels, sites, region, interval, HEADING)
    scores = [step.score for step in result.trace]
    assert all(b >= a for a, b in zip(scores, scores[1:]))
    # Region sizes along the trace never grow.
    widths = [step.region.half_widths_m[0] for step in result.trace]
    assert all(b <= a for a, b in zip(widths, widths[1:]))


def test_refine_region_excluding_truth_lands_on_near_boundary(small_numerology):
    channels, sites, _ = scene(small_numerology, n_bs=4)
    region = build_confidence_region((30.0, -7.0), 2.0, kappa=1.0)  # excludes x=12
    interval = build_confidence_interval(9.0, 1.0, kappa=1.0)
    result = iterative_refine(channels, sites, region, interval, HEADING)
    n, m = small_numerology.num_subcarriers, small_numerology.num_symbols
    # Lands near the boundary closest to the target, flagged by low score.
    assert result.position_m[0] < 29.0
    assert result.score < 0.9 * 4 * n * m


def test_refine_matches_dense_grid_oracle():
    num = Numerology(3e9, 15e3, 48, 12)
    rng = np.random.default_rng(123)
    for _ in range(6):
        pos = (float(rng.uniform(-20, 20)), float(rng.uniform(-20, 20)))
        speed = float(rng.uniform(4, 14))
        channels, sites, _ = scene(num, n_bs=3, pos=pos, speed=speed,
                                   seed=int(rng.integers(1 << 30)))
        center = (pos[0] + float(rng.uniform(-1, 1)),
                  pos[1] + float(rng.uniform(-1, 1)))
        region = build_confidence_region(center, 1.61, kappa=2.0)
        interval = build_confidence_interval(speed + float(rng.uniform(-0.5, 0.5)),
                                             1.5, kappa=2.0)
        result = iterative_refine(channels, sites, region, interval, HEADING,
                                  RefineParams(max_iterations=14,
                                               tol_position_m=1e-4,
                                               tol_velocity_mps=1e-4))
        oracle_pos, oracle_v, oracle_score = dense_grid_search(
            channels, sites, region, interval, HEADING, pitch_m=0.05)
        assert abs(result.position_m[0] - oracle_pos[0]) <= 0.05
        assert abs(result.position_m[1] - oracle_pos[1]) <= 0.05
        assert result.score >= oracle_score * (1 - 1e-6)
