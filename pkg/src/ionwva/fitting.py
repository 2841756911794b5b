"""Weighted linear least squares on monomial bases."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import FitError


class WeightedFit(NamedTuple):
    coefficients: np.ndarray
    covariance: np.ndarray
    powers: tuple
    chi2: float

    def coefficient(self, power: int) -> float:
        return float(self.coefficients[self.powers.index(power)])

    def sigma(self, power: int) -> float:
        i = self.powers.index(power)
        return float(np.sqrt(self.covariance[i, i]))


def weighted_polyfit(x, y, sigma=None, powers=(1,)) -> WeightedFit:
    """Minimise sum((y - sum_j c_j x^p_j)^2 / sigma^2).

    The covariance is the inverse normal matrix with the supplied sigmas
    taken as absolute (no rescaling by the reduced chi^2).  Weights are
    normalised to the smallest sigma, so equal sigmas reproduce the
    unweighted fit bit for bit.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    powers = tuple(int(p) for p in powers)
    if x.shape != y.shape or x.ndim != 1:
        raise FitError("x and y must be 1-d arrays of equal length")
    if x.size < len(powers):
        raise FitError(f"{x.size} points cannot determine {len(powers)} coefficients")
    if sigma is None:
        sigma = np.ones_like(x)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != x.shape or np.any(~(sigma > 0)):
        raise FitError("sigmas must be positive and match the data")

    scale = sigma.min()
    w = scale / sigma
    design = np.stack([x**p for p in powers], axis=1)
    a = design * w[:, None]
    b = y * w
    coef, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < len(powers):
        raise FitError("design matrix is rank deficient")
    cov = np.linalg.inv(a.T @ a) * scale**2
    resid = (y - design @ coef) / sigma
    return WeightedFit(coef, cov, powers, float(resid @ resid))
