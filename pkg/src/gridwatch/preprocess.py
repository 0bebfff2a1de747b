"""Per-channel linear de-trending and standard-deviation normalization.

Each channel is fitted with an ordinary least squares line over the window
index (origin at the window start), and the de-trended values are divided by
their population standard deviation.  The transform is exactly invertible
given the fitted parameters, so physical units can always be recovered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# De-trended sigma below this (relative to the channel scale) marks the
# channel degenerate: downstream covariance inversion cannot survive it.
DEGENERATE_REL_TOL = 1e-10


class DegenerateChannelError(ValueError):
    def __init__(self, channel: int, sigma: float):
        self.channel = channel
        super().__init__(f"channel {channel} is degenerate after de-trending (sigma={sigma:.3e})")


@dataclass(frozen=True)
class StandardizationParams:
    """Per-channel (intercept, slope, sigma) of the fitted trend line.

    intercept/slope are in channel units (slope per window step); sigma is the
    population standard deviation of the de-trended residuals.
    """

    intercept: np.ndarray
    slope: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        for name in ("intercept", "slope", "sigma"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.intercept.shape == self.slope.shape == self.sigma.shape):
            raise ValueError("parameter arrays must share one shape")
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive for every channel")

    @property
    def K(self) -> int:
        return self.intercept.shape[0]

    def trend(self, indices: np.ndarray) -> np.ndarray:
        """Trend-line values, shape (len(indices), K)."""
        t = np.asarray(indices, dtype=float)[:, None]
        return self.intercept[None, :] + self.slope[None, :] * t

    def to_dict(self) -> dict:
        return {
            "intercept": [float(v) for v in self.intercept],
            "slope": [float(v) for v in self.slope],
            "sigma": [float(v) for v in self.sigma],
        }


def fit_standardization(window: np.ndarray) -> StandardizationParams:
    """Fit per-channel OLS trend lines and residual sigmas over a window.

    Parameters
    ----------
    window : (n, K) array, n >= 3.

    Raises
    ------
    DegenerateChannelError naming the first channel whose de-trended residuals
    have (near-)zero standard deviation.
    """
    window = np.asarray(window, dtype=float)
    if window.ndim != 2:
        raise ValueError("window must be 2-D (n, K)")
    n, K = window.shape
    if n < 3:
        raise ValueError(f"window must hold at least 3 points, got {n}")
    t = np.arange(n, dtype=float)
    t_mean = t.mean()
    t_var = np.mean((t - t_mean) ** 2)
    y_mean = window.mean(axis=0)
    slope = np.mean((t - t_mean)[:, None] * (window - y_mean), axis=0) / t_var
    intercept = y_mean - slope * t_mean
    resid = window - intercept - slope * t[:, None]
    sigma = np.sqrt(np.mean(resid**2, axis=0))
    scale = np.maximum(1.0, window.std(axis=0))
    for k in range(K):
        if sigma[k] < DEGENERATE_REL_TOL * scale[k]:
            raise DegenerateChannelError(k, float(sigma[k]))
    return StandardizationParams(intercept=intercept, slope=slope, sigma=sigma)


def standardize(window: np.ndarray, params: StandardizationParams, start_index: int = 0) -> np.ndarray:
    """Map channel units to dimensionless trend-relative sigmas.

    `start_index` is the window-relative index of the first row, so points
    beyond the training window can be standardized against the extrapolated
    trend (used by the live pipeline between refits).
    """
    window = np.atleast_2d(np.asarray(window, dtype=float))
    idx = np.arange(start_index, start_index + window.shape[0])
    return (window - params.trend(idx)) / params.sigma[None, :]


def de_standardize(series: np.ndarray, params: StandardizationParams, start_index: int = 0) -> np.ndarray:
    """Exact inverse of `standardize` at matching indices."""
    series = np.atleast_2d(np.asarray(series, dtype=float))
    idx = np.arange(start_index, start_index + series.shape[0])
    return series * params.sigma[None, :] + params.trend(idx)
