"""Filter consistency statistics: NEES/NIS series and chi-square bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2


@dataclass(frozen=True)
class ConsistencyReport:
    nees: np.ndarray          # per-epoch normalized estimation error squared
    dof: int
    lower: float              # chi-square bounds for a single epoch
    upper: float
    mean_lower: float         # bounds for the mean over all epochs
    mean_upper: float

    @property
    def mean(self) -> float:
        return float(self.nees.mean())

    @property
    def mean_in_bounds(self) -> bool:
        return self.mean_lower <= self.mean <= self.mean_upper

    def fraction_in_bounds(self) -> float:
        ok = (self.nees >= self.lower) & (self.nees <= self.upper)
        return float(ok.mean())


def nees_series(errors: np.ndarray, covariances: np.ndarray) -> np.ndarray:
    """e_k^T P_k^-1 e_k for matched (N, d) errors and (N, d, d) covariances."""
    errors = np.asarray(errors, dtype=float)
    covariances = np.asarray(covariances, dtype=float)
    sol = np.linalg.solve(covariances, errors[..., None])[..., 0]
    return np.einsum("nd,nd->n", errors, sol)


def consistency_stats(errors, covariances, confidence: float = 0.95) -> ConsistencyReport:
    """NEES series with per-epoch and mean chi-square bounds.

    The mean bound treats the epochs as independent; callers should decimate
    correlated series before relying on it.
    """
    nees = nees_series(errors, covariances)
    n, d = np.asarray(errors).shape
    a = 0.5 * (1.0 - confidence)
    return ConsistencyReport(
        nees=nees, dof=d,
        lower=float(chi2.ppf(a, d)), upper=float(chi2.ppf(1.0 - a, d)),
        mean_lower=float(chi2.ppf(a, d * n) / n),
        mean_upper=float(chi2.ppf(1.0 - a, d * n) / n),
    )
