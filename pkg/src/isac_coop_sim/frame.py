"""Transmitted frame generation: an N x M grid of unit-modulus QPSK symbols.

The simulation works entirely in the symbol domain: the cyclic prefix is
assumed long enough to absorb every modeled delay, so channels act
multiplicatively on the grid and no time-domain samples are ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Numerology

_SQRT_HALF = np.sqrt(0.5)

# The four QPSK points (+-1 +-1j)/sqrt(2), indexed by 2-bit symbol.
QPSK_POINTS = np.array(
    [1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j], dtype=np.complex128) * _SQRT_HALF


@dataclass(frozen=True)
class TxFrame:
    """Transmitted symbol grid, shape (num_subcarriers, num_symbols)."""

    symbols: np.ndarray
    numerology: Numerology

    def __post_init__(self):
        n, m = self.numerology.num_subcarriers, self.numerology.num_symbols
        if self.symbols.shape != (n, m):
            raise ValueError(
                f"frame shape {self.symbols.shape} does not match numerology ({n}, {m})")

    @property
    def shape(self) -> tuple[int, int]:
        return self.symbols.shape


def generate_frame(numerology: Numerology, payload_stream: np.random.Generator) -> TxFrame:
    """Draw an i.i.d. uniform QPSK frame from a payload random stream.

    Deterministic given the stream state; every symbol has modulus 1.
    """
    n, m = numerology.num_subcarriers, numerology.num_symbols
    idx = payload_stream.integers(0, 4, size=(n, m))
    return TxFrame(symbols=QPSK_POINTS[idx], numerology=numerology)
