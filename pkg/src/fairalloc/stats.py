"""Statistical utilities for audits: Gaussian KDE and Welch's t-test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .errors import DegenerateVarianceError, EmptySampleError

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))
DEFAULT_GRID_SIZE = 512
DEFAULT_GRID_PADDING = 3.0  # bandwidths beyond the sample range


@dataclass(frozen=True)
class KdeCurve:
    """A kernel density estimate evaluated on an ascending grid."""

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def mass(self) -> float:
        """Trapezoidal integral of the density over the grid."""
        return float(np.trapezoid(self.density, self.grid))


@dataclass(frozen=True)
class TTestResult:
    """Welch's two-sample t-test (unequal variances, two-sided)."""

    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    mean_a: float
    mean_b: float
    n_a: int
    n_b: int

    def to_dict(self) -> dict:
        return {
            "t_statistic": self.t_statistic,
            "degrees_of_freedom": self.degrees_of_freedom,
            "p_value": self.p_value,
            "mean_a": self.mean_a,
            "mean_b": self.mean_b,
            "n_a": self.n_a,
            "n_b": self.n_b,
        }


def kde(
    samples,
    bandwidth: float,
    grid: np.ndarray | None = None,
    grid_size: int = DEFAULT_GRID_SIZE,
    padding: float = DEFAULT_GRID_PADDING,
) -> KdeCurve:
    """Gaussian kernel density estimate.

    density(x) = (1 / (n h)) * sum_i phi((x - x_i) / h) with phi the standard
    normal density. The default grid spans [min - padding*h, max + padding*h]
    with ``grid_size`` evenly spaced points.

    Raises:
        EmptySampleError: if ``samples`` is empty.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptySampleError("empty-sample: KDE needs at least one sample")
    if not np.isfinite(bandwidth) or bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if grid is None:
        grid = np.linspace(x.min() - padding * bandwidth, x.max() + padding * bandwidth, grid_size)
    else:
        grid = np.asarray(grid, dtype=np.float64)
    z = (grid[:, None] - x[None, :]) / bandwidth
    density = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * bandwidth * _SQRT_2PI)
    return KdeCurve(grid=grid, density=density, bandwidth=float(bandwidth))


def welch_t(samples_a, samples_b) -> TTestResult:
    """Welch's unequal-variance t-test with a two-sided p-value.

    The p-value comes from the Student-t survival function expressed through
    the regularized incomplete beta function.

    Raises:
        DegenerateVarianceError: if either sample has fewer than two points
            or zero variance.
    """
    a = np.asarray(samples_a, dtype=np.float64).ravel()
    b = np.asarray(samples_b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise DegenerateVarianceError("degenerate-variance: each group needs >= 2 samples")
    va = float(np.var(a, ddof=1))
    vb = float(np.var(b, ddof=1))
    if va <= 0.0 or vb <= 0.0:
        raise DegenerateVarianceError("degenerate-variance: zero within-group variance")
    sa, sb = va / a.size, vb / b.size
    t = (float(np.mean(a)) - float(np.mean(b))) / np.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(
        t_statistic=float(t),
        degrees_of_freedom=float(df),
        p_value=min(max(p, 0.0), 1.0),
        mean_a=float(np.mean(a)),
        mean_b=float(np.mean(b)),
        n_a=int(a.size),
        n_b=int(b.size),
    )
