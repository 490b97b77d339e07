"""Bjøntegaard Delta metrics on convexity-filtered RD curves.

Interpolation is shape-preserving piecewise-cubic Hermite (PCHIP), so 4-5
point ladders never oscillate, and integration is exact via the interpolant's
antiderivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import NoOverlap, TooFewPoints


@dataclass(frozen=True)
class RDCurve:
    """A strictly increasing (rate, quality) curve for one metric."""

    rates: np.ndarray
    qualities: np.ndarray
    metric: str = "vmaf"

    def __post_init__(self):
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=np.float64))
        object.__setattr__(self, "qualities", np.asarray(self.qualities, dtype=np.float64))
        if self.rates.ndim != 1 or self.rates.shape != self.qualities.shape:
            raise TooFewPoints(f"malformed curve: shapes {self.rates.shape} / {self.qualities.shape}")
        if self.rates.size < 2:
            raise TooFewPoints(f"RD curve needs at least 2 points, got {self.rates.size}")
        if not (np.diff(self.rates) > 0).all():
            raise TooFewPoints("rates must be strictly increasing")
        if not (np.diff(self.qualities) > 0).all():
            raise TooFewPoints("qualities must be strictly increasing")
        if not (self.rates > 0).all():
            raise TooFewPoints("rates must be positive")


def _mean_diff(x_ref, y_ref, x_test, y_test) -> float:
    """Average (test - ref) of the PCHIP interpolants over the shared x range."""
    lo = max(x_ref.min(), x_test.min())
    hi = min(x_ref.max(), x_test.max())
    if not hi > lo:
        raise NoOverlap(f"curves share no interval (shared range [{lo:g}, {hi:g}])")
    ref = PchipInterpolator(x_ref, y_ref)
    test = PchipInterpolator(x_test, y_test)
    area = test.antiderivative()(hi) - test.antiderivative()(lo)
    area -= ref.antiderivative()(hi) - ref.antiderivative()(lo)
    return float(area / (hi - lo))


def bd_rate(reference: RDCurve, test: RDCurve) -> float:
    """Average bitrate change (%) at equal quality; negative saves bitrate."""
    diff = _mean_diff(
        reference.qualities,
        np.log10(reference.rates),
        test.qualities,
        np.log10(test.rates),
    )
    return (10.0**diff - 1.0) * 100.0


def bd_quality(reference: RDCurve, test: RDCurve) -> float:
    """Average quality change at equal bitrate; positive means test is better."""
    return _mean_diff(
        np.log10(reference.rates),
        reference.qualities,
        np.log10(test.rates),
        test.qualities,
    )
