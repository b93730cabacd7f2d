"""Echo channel synthesis for monostatic and bistatic sensing links.

The received grid for a link is

    rx(n, m) = tx(n, m) * sum_k a_k exp(-j 2 pi n df (tau_k + TO))
                              * exp(+j 2 pi m T_sym (f_k + CFO)) + w(n, m)

with tau_k and f_k from the link geometry, TO/CFO the link's sync error,
and w circularly symmetric complex Gaussian noise. SNR is defined per
grid element, before any processing gain. CFO is modeled as a pure
inter-symbol phase progression (ICI neglected); there is no path-loss
scaling, the SNR is imposed directly per link.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .frame import TxFrame
from .scenario import SPEED_OF_LIGHT, BsSite, LinkSpec, SyncError, Target

__all__ = [
    "LinkSpec", "SyncError", "RxSymbolMatrix",
    "bistatic_delay", "bistatic_doppler", "synthesize_echo",
]


@dataclass(frozen=True)
class RxSymbolMatrix:
    """Received symbol grid for one link, with the noise level used."""

    symbols: np.ndarray
    link: LinkSpec
    noise_variance: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.symbols)):
            raise ValueError("received symbol matrix contains non-finite entries")
        if self.noise_variance < 0:
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance}")


def bistatic_delay(tx_pos, target_pos, rx_pos) -> float:
    """Propagation delay (||target - tx|| + ||rx - target||) / c in seconds."""
    tx_pos = np.asarray(tx_pos, dtype=float)
    target_pos = np.asarray(target_pos, dtype=float)
    rx_pos = np.asarray(rx_pos, dtype=float)
    d = np.linalg.norm(target_pos - tx_pos) + np.linalg.norm(rx_pos - target_pos)
    return float(d) / SPEED_OF_LIGHT


def bistatic_doppler(target: Target, tx_pos, rx_pos, carrier_freq_hz: float) -> float:
    """Doppler shift (fc/c) (v . u_t->tx + v . u_t->rx) in Hz.

    u are unit vectors from the target toward each site, so a closing
    target has positive Doppler. Raises for degenerate geometry where the
    target coincides with a site.
    """
    tx_pos = np.asarray(tx_pos, dtype=float)
    rx_pos = np.asarray(rx_pos, dtype=float)
    d_tx = np.linalg.norm(tx_pos - target.position)
    d_rx = np.linalg.norm(rx_pos - target.position)
    if d_tx == 0.0 or d_rx == 0.0:
        raise ValueError("degenerate geometry: target coincides with a site")
    u_tx = (tx_pos - target.position) / d_tx
    u_rx = (rx_pos - target.position) / d_rx
    radial = float(target.velocity @ u_tx + target.velocity @ u_rx)
    return carrier_freq_hz / SPEED_OF_LIGHT * radial


def echo_response(
    numerology,
    delays_s: Sequence[float],
    dopplers_hz: Sequence[float],
    amplitudes: Sequence[complex],
    dtype=np.complex128,
) -> np.ndarray:
    """Noise-free multiplicative channel grid sum_k a_k u_k(n) v_k(m)."""
    n = np.arange(numerology.num_subcarriers)
    m = np.arange(numerology.num_symbols)
    df = numerology.subcarrier_spacing_hz
    ts = numerology.symbol_duration_s
    grid = np.zeros((numerology.num_subcarriers, numerology.num_symbols), dtype=dtype)
    for tau, fd, a in zip(delays_s, dopplers_hz, amplitudes):
        u = np.exp(-2j * np.pi * df * tau * n).astype(dtype)
        v = np.exp(2j * np.pi * ts * fd * m).astype(dtype)
        grid += a * np.outer(u, v)
    return grid


def link_delays_dopplers(
    link: LinkSpec,
    sites: Mapping[int, BsSite],
    targets: Sequence[Target],
    carrier_freq_hz: float,
) -> tuple[list[float], list[float]]:
    """Geometry-true per-target delays and Dopplers for one link."""
    tx = sites[link.tx_site_id]
    rx = sites[link.rx_site_id]
    delays = [bistatic_delay(tx.position, t.position, rx.position) for t in targets]
    dopplers = [bistatic_doppler(t, tx.position, rx.position, carrier_freq_hz)
                for t in targets]
    return delays, dopplers


def synthesize_echo(
    tx_frame: TxFrame,
    link: LinkSpec,
    sites: Mapping[int, BsSite],
    targets: Sequence[Target],
    noise_stream: np.random.Generator | None,
) -> RxSymbolMatrix:
    """Synthesize the received symbol matrix for one link.

    Parameters
    ----------
    tx_frame : TxFrame
        Transmitted grid of the link's transmit site.
    link : LinkSpec
        Link under simulation; its sync error shifts delay and Doppler.
    sites : mapping of site id -> BsSite
    targets : sequence of Target
    noise_stream : Generator or None
        Noise random stream. None, or snr_db = +inf, disables noise.

    The per-element noise variance is sum_k |a_k|^2 / 10^(snr_db/10); a
    scene with no targets uses unit reference power instead.
    """
    num = tx_frame.numerology
    delays, dopplers = link_delays_dopplers(link, sites, targets, num.carrier_freq_hz)
    to = link.sync_error.timing_offset_s
    cfo = link.sync_error.cfo_hz

    # The window checks constrain the geometry; the sync offsets shift the
    # phase ramps cyclically (the grid response is periodic in both).
    for k, (tau, fd) in enumerate(zip(delays, dopplers)):
        if not 0.0 <= tau < num.delay_window_s:
            raise ValueError(
                f"target[{k}] delay {tau:.3e} s outside the unambiguous "
                f"window [0, {num.delay_window_s:.3e}) s")
        if abs(fd) >= num.doppler_window_hz:
            raise ValueError(
                f"target[{k}] Doppler {fd:.1f} Hz outside the unambiguous "
                f"window (+-{num.doppler_window_hz:.1f} Hz)")

    amplitudes = [t.amplitude for t in targets]
    channel = echo_response(
        num,
        [tau + to for tau in delays],
        [fd + cfo for fd in dopplers],
        amplitudes,
    )
    rx = tx_frame.symbols * channel

    signal_power = sum(abs(a) ** 2 for a in amplitudes) if targets else 1.0
    if noise_stream is None or link.snr_db == np.inf:
        sigma2 = 0.0
    else:
        sigma2 = signal_power / 10.0 ** (link.snr_db / 10.0)
        scale = np.sqrt(sigma2 / 2.0)
        noise = noise_stream.standard_normal(rx.shape) + 1j * noise_stream.standard_normal(rx.shape)
        rx = rx + scale * noise
    return RxSymbolMatrix(symbols=rx, link=link, noise_variance=sigma2)
