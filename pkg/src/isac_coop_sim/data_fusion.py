"""Data-level fusion of per-BS estimates.

Covers the low-complexity fusion path: weighted averaging of per-link
estimates, Gauss-Newton multilateration of per-BS ranges to a horizontal
position, and confidence region / interval construction that seeds the
signal-level search.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rdmap import Estimate


@dataclass(frozen=True)
class ConfidenceRegion:
    """Axis-aligned square region in the horizontal plane."""

    center_m: tuple[float, float]
    half_widths_m: tuple[float, float]

    def __post_init__(self):
        if not (self.half_widths_m[0] > 0 and self.half_widths_m[1] > 0):
            raise ValueError(f"half_widths_m must be > 0, got {self.half_widths_m}")

    def contains(self, point_xy) -> bool:
        dx = abs(point_xy[0] - self.center_m[0])
        dy = abs(point_xy[1] - self.center_m[1])
        return dx <= self.half_widths_m[0] and dy <= self.half_widths_m[1]

    @property
    def area_m2(self) -> float:
        return 4.0 * self.half_widths_m[0] * self.half_widths_m[1]


@dataclass(frozen=True)
class ConfidenceInterval:
    """Symmetric interval for the velocity estimate."""

    center_mps: float
    half_width_mps: float

    def __post_init__(self):
        if not self.half_width_mps > 0:
            raise ValueError(f"half_width_mps must be > 0, got {self.half_width_mps}")

    def contains(self, value: float) -> bool:
        return abs(value - self.center_mps) <= self.half_width_mps


def weighted_average(estimates: Sequence[Estimate],
                     weights: Sequence[float] | None = None) -> Estimate:
    """Convex combination of ranges and velocities.

    Default weights are proportional to each link's linear SNR
    (inverse-variance weighting under equal geometry).
    """
    if len(estimates) == 0:
        raise ValueError("weighted_average requires at least one estimate")
    if weights is None:
        weights = [10.0 ** (e.snr_db / 10.0) for e in estimates]
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(estimates):
        raise ValueError(
            f"got {len(weights)} weights for {len(estimates)} estimates")
    if np.any(weights < 0):
        raise ValueError("weights must be >= 0")
    total = weights.sum()
    if total == 0:
        raise ValueError("weights must not all be zero")
    w = weights / total
    return Estimate(
        range_m=float(w @ [e.range_m for e in estimates]),
        velocity_mps=float(w @ [e.velocity_mps for e in estimates]),
        score=float(w @ [e.score for e in estimates]),
        source_link_id=None,
        snr_db=float(w @ [e.snr_db for e in estimates]),
    )


def multilaterate(
    ranges: Sequence[tuple[np.ndarray, float]],
    initial_guess=None,
    max_iterations: int = 50,
    step_tolerance_m: float = 1e-6,
) -> np.ndarray:
    """Gauss-Newton least squares position fix from per-BS ranges.

    Minimizes sum_i (||p - bs_i|| - r_i)^2 over the horizontal plane.
    ranges is a sequence of (bs_position, range_m); the fix uses the x, y
    components (targets at known height 0). Requires >= 3 BSs that are not
    collinear. Returns the position as a length-2 array.
    """
    if len(ranges) < 3:
        raise ValueError(
            f"multilateration needs >= 3 ranges for a 2-D fix, got {len(ranges)}")
    anchors = np.asarray([np.asarray(p, dtype=float)[:2] for p, _ in ranges])
    meas = np.asarray([r for _, r in ranges], dtype=float)

    # Collinearity check on the anchor geometry.
    centered = anchors - anchors.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[-1] < 1e-9 * max(sv[0], 1.0):
        raise ValueError("collinear BS geometry: normal matrix is degenerate")

    p = anchors.mean(axis=0) if initial_guess is None else np.asarray(
        initial_guess, dtype=float)[:2].copy()
    for _ in range(max_iterations):
        diff = p[None, :] - anchors
        dist = np.linalg.norm(diff, axis=1)
        dist = np.maximum(dist, 1e-12)
        residual = dist - meas
        jac = diff / dist[:, None]
        step, *_ = np.linalg.lstsq(jac, residual, rcond=None)
        p = p - step
        if np.linalg.norm(step) < step_tolerance_m:
            return p
    raise ValueError(
        f"multilateration did not converge within {max_iterations} iterations")


def multilaterate_residual(position_xy, ranges) -> float:
    """Sum of squared range residuals at a candidate position."""
    p = np.asarray(position_xy, dtype=float)[:2]
    total = 0.0
    for bs, r in ranges:
        total += (np.linalg.norm(p - np.asarray(bs, dtype=float)[:2]) - r) ** 2
    return float(total)


def build_confidence_region(position_xy, range_rmse_m: float,
                            kappa: float = 2.0) -> ConfidenceRegion:
    """Square region of half-width kappa * range_rmse_m around a position."""
    if not range_rmse_m > 0:
        raise ValueError(f"range_rmse_m must be > 0, got {range_rmse_m}")
    hw = kappa * range_rmse_m
    return ConfidenceRegion(
        center_m=(float(position_xy[0]), float(position_xy[1])),
        half_widths_m=(hw, hw),
    )


def build_confidence_interval(velocity_mps: float, velocity_rmse_mps: float,
                              kappa: float = 2.0) -> ConfidenceInterval:
    """Interval of half-width kappa * velocity_rmse_mps around a velocity."""
    if not velocity_rmse_mps > 0:
        raise ValueError(f"velocity_rmse_mps must be > 0, got {velocity_rmse_mps}")
    return ConfidenceInterval(
        center_mps=float(velocity_mps),
        half_width_mps=kappa * velocity_rmse_mps,
    )
