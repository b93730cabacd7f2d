"""Per-link range-Doppler estimation.

Pipeline: elementwise quotient rx/tx -> 2-D periodogram (inverse DFT along
the subcarrier axis for delay, forward DFT along the symbol axis for
Doppler, both zero-padded) -> greedy peak extraction with parabolic
interpolation -> conversion to range and velocity.

The map is normalized so a unit-amplitude noise-free target peaks at
N*M. No windowing is applied (rectangular), which keeps that
normalization exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .frame import TxFrame
from .channel import RxSymbolMatrix
from .scenario import SPEED_OF_LIGHT, LinkSpec, Numerology


@dataclass(frozen=True)
class ChannelMatrix:
    """Quotient grid rx / tx for one link; same shape as the frame."""

    values: np.ndarray
    numerology: Numerology
    link: LinkSpec | None = None

    def __post_init__(self):
        n, m = self.numerology.num_subcarriers, self.numerology.num_symbols
        if self.values.shape != (n, m):
            raise ValueError(
                f"channel matrix shape {self.values.shape} does not match ({n}, {m})")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("channel matrix contains non-finite entries")


@dataclass(frozen=True)
class RangeDopplerMap:
    """Magnitude periodogram with its axis scalings.

    Delay bins are unsigned in [0, 1/df); Doppler bins are interpreted
    with wraparound, bins at or above Zd*M/2 map to negative Doppler.
    """

    magnitudes: np.ndarray
    numerology: Numerology
    zero_pad_range: int
    zero_pad_doppler: int

    @property
    def delay_spacing_s(self) -> float:
        return 1.0 / (self.zero_pad_range * self.numerology.num_subcarriers
                      * self.numerology.subcarrier_spacing_hz)

    @property
    def doppler_spacing_hz(self) -> float:
        return 1.0 / (self.zero_pad_doppler * self.numerology.num_symbols
                      * self.numerology.symbol_duration_s)

    def delay_of_bin(self, delay_bin: float) -> float:
        return delay_bin * self.delay_spacing_s

    def doppler_of_bin(self, doppler_bin: float) -> float:
        m_pad = self.magnitudes.shape[1]
        if doppler_bin >= m_pad / 2:
            doppler_bin -= m_pad
        return doppler_bin * self.doppler_spacing_hz


@dataclass(frozen=True)
class Estimate:
    """Per-link target parameter estimate with provenance."""

    range_m: float
    velocity_mps: float
    score: float
    source_link_id: tuple[int, int] | None = None
    snr_db: float = 0.0

    def __post_init__(self):
        if self.score < 0:
            raise ValueError(f"score must be >= 0, got {self.score}")


def channel_quotient(rx: RxSymbolMatrix, tx: TxFrame) -> ChannelMatrix:
    """Elementwise rx / tx; exact noise statistics preserved since |tx| = 1."""
    if rx.symbols.shape != tx.symbols.shape:
        raise ValueError(
            f"shape mismatch: rx {rx.symbols.shape} vs tx {tx.symbols.shape}")
    mods = np.abs(tx.symbols)
    if not np.allclose(mods, 1.0, atol=1e-9):
        raise ValueError("tx frame entries must have unit modulus")
    return ChannelMatrix(values=rx.symbols / tx.symbols,
                         numerology=tx.numerology, link=rx.link)


def range_doppler_map(G: ChannelMatrix, zero_pad_range: int = 4,
                      zero_pad_doppler: int = 4) -> RangeDopplerMap:
    """2-D periodogram of the channel matrix.

    Inverse transform along subcarriers (delay axis), forward along
    symbols (Doppler axis), zero-padded by the given integer factors.
    """
    if int(zero_pad_range) != zero_pad_range or zero_pad_range < 1:
        raise ValueError(f"zero_pad_range must be an integer >= 1, got {zero_pad_range}")
    if int(zero_pad_doppler) != zero_pad_doppler or zero_pad_doppler < 1:
        raise ValueError(f"zero_pad_doppler must be an integer >= 1, got {zero_pad_doppler}")
    n, m = G.values.shape
    n_pad = int(zero_pad_range) * n
    m_pad = int(zero_pad_doppler) * m
    spec = sfft.ifft(G.values, n=n_pad, axis=0) * n_pad
    spec = sfft.fft(spec, n=m_pad, axis=1)
    return RangeDopplerMap(
        magnitudes=np.abs(spec),
        numerology=G.numerology,
        zero_pad_range=int(zero_pad_range),
        zero_pad_doppler=int(zero_pad_doppler),
    )


def _parabolic_offset(alpha: float, beta: float, gamma: float) -> float:
    """Vertex offset in bins of the parabola through (-1, a), (0, b), (1, c)."""
    denom = alpha + gamma - 2.0 * beta
    if denom == 0.0:
        return 0.0
    offset = 0.5 * (alpha - gamma) / denom
    return float(np.clip(offset, -0.5, 0.5))


GUARD_BINS = 2


def peak_estimate(rd_map: RangeDopplerMap, num_targets: int = 1) -> list[tuple[float, float, float]]:
    """Greedy extraction of the largest local maxima.

    A guard region of +-GUARD_BINS bins around each accepted peak is
    excluded from later picks; each peak is refined independently along
    both axes by 3-point parabolic interpolation (circular indexing, the
    map is periodic). Magnitude ties resolve to the smaller delay bin,
    then the smaller Doppler bin. Returns (delay_s, doppler_hz, score)
    tuples sorted by descending score.
    """
    if num_targets < 1:
        raise ValueError(f"num_targets must be >= 1, got {num_targets}")
    mags = rd_map.magnitudes
    n_pad, m_pad = mags.shape
    if n_pad < 2 * GUARD_BINS + 1 or m_pad < 2 * GUARD_BINS + 1:
        raise ValueError(
            f"map shape {mags.shape} smaller than the guard region "
            f"(needs >= {2 * GUARD_BINS + 1} bins per axis)")

    work = mags.copy()
    peaks = []
    for _ in range(num_targets):
        flat = int(np.argmax(work))  # first occurrence: smaller delay, then Doppler
        i, j = divmod(flat, m_pad)
        if not np.isfinite(work[i, j]):
            break
        di = _parabolic_offset(mags[(i - 1) % n_pad, j], mags[i, j], mags[(i + 1) % n_pad, j])
        dj = _parabolic_offset(mags[i, (j - 1) % m_pad], mags[i, j], mags[i, (j + 1) % m_pad])
        delay = rd_map.delay_of_bin((i + di) % n_pad)
        doppler = rd_map.doppler_of_bin((j + dj) % m_pad)
        peaks.append((float(delay), float(doppler), float(mags[i, j])))
        rows = [(i + r) % n_pad for r in range(-GUARD_BINS, GUARD_BINS + 1)]
        cols = [(j + c) % m_pad for c in range(-GUARD_BINS, GUARD_BINS + 1)]
        work[np.ix_(rows, cols)] = -np.inf
    return peaks


def to_range_velocity(
    delay_s: float,
    doppler_hz: float,
    link: LinkSpec,
    baseline_m: float,
    numerology: Numerology,
    score: float = 0.0,
    snr_db: float = 0.0,
) -> Estimate:
    """Convert a (delay, Doppler) peak into a range/velocity estimate.

    Monostatic: range = c tau / 2, velocity = f c / (2 fc). Bistatic:
    range is the bistatic ellipse parameter (c tau - baseline) / 2 and the
    velocity keeps the same divide-by-two convention.
    """
    if delay_s < 0:
        raise ValueError(f"negative delay after offset compensation: {delay_s:.3e} s")
    path = SPEED_OF_LIGHT * delay_s
    if link.is_monostatic:
        range_m = path / 2.0
    else:
        if path < baseline_m:
            raise ValueError(
                f"total path {path:.2f} m shorter than the baseline {baseline_m:.2f} m")
        range_m = (path - baseline_m) / 2.0
    velocity = doppler_hz * SPEED_OF_LIGHT / (2.0 * numerology.carrier_freq_hz)
    if range_m >= numerology.unambiguous_range_m:
        raise ValueError(
            f"range {range_m:.1f} m outside the unambiguous window "
            f"{numerology.unambiguous_range_m:.1f} m")
    return Estimate(range_m=float(range_m), velocity_mps=float(velocity),
                    score=float(score),
                    source_link_id=(link.tx_site_id, link.rx_site_id),
                    snr_db=snr_db)


# ---------------------------------------------------------------------------
# Fast equivalent of range_doppler_map + peak_estimate for one dominant
# target: coarse unpadded argmax, then the padded-grid values on a local
# patch evaluated exactly (zoomed DFT), then the same parabolic refinement.
# ---------------------------------------------------------------------------

def zoom_patch(values: np.ndarray, n_pad: int, m_pad: int,
               rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Exact padded-periodogram values at the given (row, col) bin sets.

    Equals |range_doppler_map(...)| sampled at rows x cols: rows index the
    zero-padded delay axis (length n_pad), cols the Doppler axis (m_pad).
    """
    n, m = values.shape
    ns = np.arange(n)[None, :]
    ms = np.arange(m)[:, None]
    # delay: ifft * n_pad convention -> exp(+2j pi n p / n_pad)
    left = np.exp(2j * np.pi * rows[:, None] * ns / n_pad)
    right = np.exp(-2j * np.pi * ms * cols[None, :] / m_pad)
    return np.abs(left @ values @ right)


def refine_peak(G: ChannelMatrix, zero_pad_range: int = 4, zero_pad_doppler: int = 4,
                patch_half: int = 8) -> tuple[float, float, float]:
    """Single-target peak equal to range_doppler_map + peak_estimate.

    Locates the coarse peak on the unpadded map, then evaluates the exact
    zero-padded periodogram on a local patch around it and applies the
    same parabolic refinement. Valid when one target dominates the map
    (the padded global maximum then lies within the patch).
    """
    n, m = G.values.shape
    n_pad, m_pad = zero_pad_range * n, zero_pad_doppler * m
    coarse = sfft.ifft(G.values, axis=0) * n
    coarse = sfft.fft(coarse, axis=1)
    ci, cj = np.unravel_index(int(np.argmax(np.abs(coarse))), (n, m))

    half_i = max(patch_half, 2 * zero_pad_range)
    half_j = max(patch_half, 2 * zero_pad_doppler)
    rows = (ci * zero_pad_range + np.arange(-half_i, half_i + 1)) % n_pad
    cols = (cj * zero_pad_doppler + np.arange(-half_j, half_j + 1)) % m_pad
    patch = zoom_patch(G.values, n_pad, m_pad, rows, cols)

    pi, pj = np.unravel_index(int(np.argmax(patch)), patch.shape)
    # Keep one neighbor on each side inside the patch for interpolation.
    pi = int(np.clip(pi, 1, patch.shape[0] - 2))
    pj = int(np.clip(pj, 1, patch.shape[1] - 2))
    di = _parabolic_offset(patch[pi - 1, pj], patch[pi, pj], patch[pi + 1, pj])
    dj = _parabolic_offset(patch[pi, pj - 1], patch[pi, pj], patch[pi, pj + 1])

    num = G.numerology
    delay_spacing = 1.0 / (n_pad * num.subcarrier_spacing_hz)
    doppler_spacing = 1.0 / (m_pad * num.symbol_duration_s)
    delay_bin = (float(rows[pi]) + di) % n_pad
    doppler_bin = (float(cols[pj]) + dj) % m_pad
    if doppler_bin >= m_pad / 2:
        doppler_bin -= m_pad
    return (float(delay_bin * delay_spacing),
            float(doppler_bin * doppler_spacing),
            float(patch[pi, pj]))
