"""Cooperative active-and-passive sensing with cross-correlation sync.

A receiving BS holds its own monostatic echo (active link) and the echo
of another BS's transmission (passive link). Transceiver separation puts
an unknown timing offset and carrier frequency offset on the passive
link. The elementwise product of the passive and conjugated active
channel matrices is, for a single dominant target, one 2-D exponential
whose frequencies are the delay and Doppler DIFFERENCES plus the
offsets; locating its peak and subtracting the geometry-predicted
differences (from the active-sensing estimate, no line of sight needed)
yields the offsets. After compensation the two links fuse on a common
monostatic-equivalent range axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rdmap import (ChannelMatrix, Estimate, peak_estimate, range_doppler_map,
                    _parabolic_offset)
from .scenario import SPEED_OF_LIGHT


@dataclass(frozen=True)
class OffsetEstimate:
    """Estimated passive-link sync error and the correlation peak height."""

    timing_offset_s: float
    cfo_hz: float
    correlation_score: float


def wrap_signed(value: float, window: float) -> float:
    """Wrap into [-window/2, window/2)."""
    return (value + window / 2.0) % window - window / 2.0


def _dtft_mag(values: np.ndarray, numerology, taus: np.ndarray,
              dopplers: np.ndarray) -> np.ndarray:
    """|sum G exp(+j2pi n df tau) exp(-j2pi m T f)| on a taus x dopplers grid."""
    n = np.arange(values.shape[0])
    m = np.arange(values.shape[1])
    u = np.exp(2j * np.pi * numerology.subcarrier_spacing_hz * np.outer(taus, n))
    w = np.exp(-2j * np.pi * numerology.symbol_duration_s * np.outer(m, dopplers))
    return np.abs(u @ values @ w)


def _local_peak_refine(values: np.ndarray, numerology, tau0: float, f0: float,
                       tau_step: float, f_step: float, rounds: int = 10):
    """Shrinking 3x3 exact-DTFT parabolic descent around a coarse peak.

    Removes the interpolation quantization of the padded-grid estimate;
    each round evaluates a 3x3 patch, re-centers on the argmax, applies
    the parabola vertices, and shrinks the step. Keeps the step fixed for
    a round whenever the argmax hits the patch edge (still approaching).
    """
    tau, f = float(tau0), float(f0)
    for _ in range(rounds):
        taus = tau + tau_step * np.array([-1.0, 0.0, 1.0])
        fs = f + f_step * np.array([-1.0, 0.0, 1.0])
        patch = _dtft_mag(values, numerology, taus, fs)
        i, j = np.unravel_index(int(np.argmax(patch)), patch.shape)
        tau, f = taus[i], fs[j]
        di = _parabolic_offset(patch[0, j], patch[1, j], patch[2, j]) if i == 1 else 0.0
        dj = _parabolic_offset(patch[i, 0], patch[i, 1], patch[i, 2]) if j == 1 else 0.0
        tau += di * tau_step
        f += dj * f_step
        if i == 1:
            tau_step /= 3.0
        if j == 1:
            f_step /= 3.0
    score = float(_dtft_mag(values, numerology, np.array([tau]), np.array([f]))[0, 0])
    return tau, f, score


def correlation_offsets(
    corr: ChannelMatrix,
    predicted_delay_diff_s: float,
    predicted_doppler_diff_hz: float,
    zero_pad: tuple[int, int] = (2, 2),
    refine: bool = True,
    floor_db: float = 6.0,
) -> OffsetEstimate:
    """Offsets from a formed correlation matrix (see cross_correlate)."""
    num = corr.numerology
    rd = range_doppler_map(corr, *zero_pad)
    (delay, doppler, score), = peak_estimate(rd, num_targets=1)

    median = float(np.median(rd.magnitudes[::7, :]))
    if median > 0 and score < median * 10.0 ** (floor_db / 20.0):
        raise ValueError(
            f"correlation peak {score:.3e} below the {floor_db:.0f} dB floor "
            f"over the map median {median:.3e}: no reliable offset")

    # Interpret the measured delay difference as signed.
    delay = wrap_signed(delay, num.delay_window_s)
    if refine:
        delay, doppler, score = _local_peak_refine(
            corr.values, num, delay, doppler,
            tau_step=rd.delay_spacing_s, f_step=rd.doppler_spacing_hz)

    timing = wrap_signed(delay - predicted_delay_diff_s, num.delay_window_s)
    cfo = wrap_signed(doppler - predicted_doppler_diff_hz, 1.0 / num.symbol_duration_s)
    return OffsetEstimate(timing_offset_s=float(timing), cfo_hz=float(cfo),
                          correlation_score=float(score))


def cross_correlate(
    active_G: ChannelMatrix,
    passive_G: ChannelMatrix,
    predicted_delay_diff_s: float,
    predicted_doppler_diff_hz: float,
    zero_pad: tuple[int, int] = (2, 2),
    refine: bool = True,
    floor_db: float = 6.0,
) -> OffsetEstimate:
    """Estimate the passive link's TO/CFO against the co-located active echo.

    predicted_delay_diff_s and predicted_doppler_diff_hz are the
    geometry-predicted (tau_passive - tau_active) and (f_passive -
    f_active), computed by the caller from the active-sensing target
    estimate. Raises when the correlation peak is less than floor_db
    above the map median (no reliable offset).
    """
    if active_G.values.shape != passive_G.values.shape:
        raise ValueError(
            f"shape mismatch: active {active_G.values.shape} vs "
            f"passive {passive_G.values.shape}")
    num = active_G.numerology
    corr = ChannelMatrix(values=passive_G.values * np.conj(active_G.values),
                         numerology=num)
    return correlation_offsets(corr, predicted_delay_diff_s,
                               predicted_doppler_diff_hz, zero_pad, refine,
                               floor_db)


def compensate(passive_G: ChannelMatrix, offsets: OffsetEstimate) -> ChannelMatrix:
    """Remove an estimated TO/CFO from a passive channel matrix."""
    if not (np.isfinite(offsets.timing_offset_s) and np.isfinite(offsets.cfo_hz)):
        raise ValueError("offsets must be finite")
    num = passive_G.numerology
    n = np.arange(num.num_subcarriers)
    m = np.arange(num.num_symbols)
    ramp_n = np.exp(2j * np.pi * num.subcarrier_spacing_hz * offsets.timing_offset_s * n)
    ramp_m = np.exp(-2j * np.pi * num.symbol_duration_s * offsets.cfo_hz * m)
    return ChannelMatrix(values=passive_G.values * np.outer(ramp_n, ramp_m),
                         numerology=num, link=passive_G.link)


def polish_peak_1d(fn, x0: float, step: float, rounds: int = 9) -> float:
    """Shrinking 3-point parabolic ascent of a smooth 1-D objective."""
    x = float(x0)
    for _ in range(rounds):
        xs = x + step * np.array([-1.0, 0.0, 1.0])
        vals = np.asarray(fn(xs), dtype=float)
        i = int(np.argmax(vals))
        x = float(xs[i])
        if i == 1:
            x += _parabolic_offset(vals[0], vals[1], vals[2]) * step
            step /= 3.0
    return x


def _estimated_element_snr(rd_map) -> float:
    """Linear per-element SNR from the map peak over its median floor."""
    mags = rd_map.magnitudes
    peak = float(mags.max())
    median = float(np.median(mags[::7, :]))  # strided subsample, noise floor
    if median <= 0:
        return np.inf
    n_elem = rd_map.numerology.num_subcarriers * rd_map.numerology.num_symbols
    out_snr = (peak / median) ** 2 * np.log(2.0)  # Rayleigh median -> power
    return max(out_snr / n_elem, 0.0)


class PassiveResampler:
    """Maps the passive delay axis onto a monostatic-equivalent range axis.

    Precomputes, for every bin of the active link's padded delay axis,
    the candidate position along the configured geometry and the passive
    bistatic delay there, plus the phase ramp that evaluates the passive
    delay profile exactly at those off-grid delays. Geometry-only, so one
    instance serves every noise realization of a scenario.
    """

    def __init__(self, numerology, tx_passive_pos, rx_pos,
                 range_to_position: Callable[[np.ndarray], np.ndarray],
                 zero_pad_range: int):
        self.numerology = numerology
        self._tx = np.asarray(tx_passive_pos, dtype=float)
        self._rx = np.asarray(rx_pos, dtype=float)
        self._range_to_position = range_to_position
        n_bins = zero_pad_range * numerology.num_subcarriers
        delay_spacing = 1.0 / (n_bins * numerology.subcarrier_spacing_hz)
        ranges = np.arange(n_bins) * delay_spacing * SPEED_OF_LIGHT / 2.0
        tau_p = self.delay_of_range(ranges)
        self.inside = (tau_p >= 0.0) & (tau_p < numerology.delay_window_s)
        if not np.any(self.inside):
            raise ValueError("empty axis overlap: passive delays never intersect "
                             "the monostatic-equivalent range axis")
        self._ramp = np.exp(2j * np.pi * numerology.subcarrier_spacing_hz
                            * np.outer(tau_p[self.inside],
                                       np.arange(numerology.num_subcarriers)))

    def delay_of_range(self, ranges: np.ndarray) -> np.ndarray:
        """Passive bistatic delay at monostatic-equivalent ranges."""
        positions = np.asarray(self._range_to_position(ranges), dtype=float)
        return (np.linalg.norm(positions - self._tx, axis=1)
                + np.linalg.norm(positions - self._rx, axis=1)) / SPEED_OF_LIGHT

    def doppler_column(self, passive_values: np.ndarray, doppler_bin: int,
                       m_pad: int) -> np.ndarray:
        """Symbol-axis transform at one Doppler bin (length-N vector)."""
        m_idx = np.arange(self.numerology.num_symbols)
        return passive_values @ np.exp(-2j * np.pi * m_idx * doppler_bin / m_pad)

    def profile(self, passive_values: np.ndarray, doppler_bin: int,
                m_pad: int) -> np.ndarray:
        """Exact passive delay profile at the mapped delays."""
        y = self.doppler_column(passive_values, doppler_bin, m_pad)
        out = np.zeros(self.inside.shape[0])
        out[self.inside] = np.abs(self._ramp @ y)
        return out

    def profile_at(self, y: np.ndarray, ranges) -> np.ndarray:
        """Exact passive profile at arbitrary monostatic-equivalent ranges."""
        taus = self.delay_of_range(np.atleast_1d(np.asarray(ranges, dtype=float)))
        ramp = np.exp(2j * np.pi * self.numerology.subcarrier_spacing_hz
                      * np.outer(taus, np.arange(self.numerology.num_subcarriers)))
        return np.abs(ramp @ y)


def fuse_active_passive(
    active_G: ChannelMatrix,
    passive_G: ChannelMatrix,
    tx_passive_pos,
    rx_pos,
    range_to_position: Callable[[np.ndarray], np.ndarray],
    zero_pad: tuple[int, int] = (2, 2),
    rd_active=None,
    rd_passive=None,
    resampler: PassiveResampler | None = None,
) -> Estimate:
    """Fuse a monostatic link with an offset-compensated passive link.

    Both range-Doppler maps are reduced to delay profiles at their own
    peak Doppler bins; the passive profile is resampled onto the active
    link's monostatic-equivalent range axis through the link geometry
    (range_to_position maps ranges from the receive site to candidate
    positions, vectorized; the profile values at the mapped delays are
    evaluated exactly by continuing the transform off its grid, which
    adds no resampling error). Profiles are combined weighted by each
    link's estimated linear SNR and the fused peak gives the range
    estimate. Precomputed maps and a precomputed resampler may be passed
    to avoid recomputation.
    """
    num = active_G.numerology
    rd_a = rd_active if rd_active is not None else range_doppler_map(active_G, *zero_pad)
    rd_p = rd_passive if rd_passive is not None else range_doppler_map(passive_G, *zero_pad)

    j_a = int(np.argmax(rd_a.magnitudes.max(axis=0)))
    j_p = int(np.argmax(rd_p.magnitudes.max(axis=0)))
    prof_a = rd_a.magnitudes[:, j_a]
    n_bins = prof_a.shape[0]

    if resampler is None:
        resampler = PassiveResampler(num, tx_passive_pos, rx_pos,
                                     range_to_position, rd_a.zero_pad_range)
    y_p = resampler.doppler_column(passive_G.values, j_p, rd_p.magnitudes.shape[1])
    prof_p_resampled = np.zeros(n_bins)
    prof_p_resampled[resampler.inside] = np.abs(resampler._ramp @ y_p)

    w_a = _estimated_element_snr(rd_a)
    w_p = _estimated_element_snr(rd_p)
    fused = w_a * prof_a + w_p * prof_p_resampled

    i = int(np.argmax(fused))
    di = _parabolic_offset(fused[(i - 1) % n_bins], fused[i], fused[(i + 1) % n_bins])
    range_step = rd_a.delay_spacing_s * SPEED_OF_LIGHT / 2.0
    coarse_range = (i + di) * range_step

    # Polish on the exact continued profiles, removing the grid
    # quantization of the parabolic step.
    m_idx = np.arange(num.num_symbols)
    y_a = active_G.values @ np.exp(-2j * np.pi * m_idx * j_a
                                   / rd_a.magnitudes.shape[1])
    n_idx = np.arange(num.num_subcarriers)

    def fused_profile(ranges):
        taus_a = 2.0 * np.atleast_1d(ranges) / SPEED_OF_LIGHT
        ramp_a = np.exp(2j * np.pi * num.subcarrier_spacing_hz
                        * np.outer(taus_a, n_idx))
        return (w_a * np.abs(ramp_a @ y_a)
                + w_p * resampler.profile_at(y_p, ranges))

    range_m = polish_peak_1d(fused_profile, coarse_range, range_step)

    # Velocity: SNR-weighted combination of the two links' Doppler peaks
    # under the same divide-by-two convention as to_range_velocity.
    f_a = rd_a.doppler_of_bin(j_a)
    f_p = rd_p.doppler_of_bin(j_p)
    vel = (w_a * f_a + w_p * f_p) / (w_a + w_p) * SPEED_OF_LIGHT / (2.0 * num.carrier_freq_hz)

    return Estimate(range_m=range_m, velocity_mps=float(vel), score=float(fused[i]),
                    source_link_id=None,
                    snr_db=float(10.0 * np.log10(max(w_a + w_p, 1e-30))))
