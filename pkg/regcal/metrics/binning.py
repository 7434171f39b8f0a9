"""
RegCal - Binning Schemes
Equal-frequency bins over a dispersion statistic, and the quantile level grid
"""

from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from ..errors import DataError

DEFAULT_BINS = 20
DEFAULT_LEVELS = "0.05:0.95:0.05"


@dataclass(frozen=True)
class BinningScheme:
    """
    Equal-frequency partition of N samples into M bins.

    Attributes:
        edges: (M + 1,) statistic values bounding the bins
        assignment: (N,) bin index per sample
        n_bins: M
    """
    edges: np.ndarray
    assignment: np.ndarray
    n_bins: int
    strategy: str = "equal_frequency"

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_bins)

    def members(self) -> List[np.ndarray]:
        """Sample indices of every bin (possibly empty arrays)."""
        return [np.flatnonzero(self.assignment == m) for m in range(self.n_bins)]


def equal_frequency_bins(statistic: np.ndarray, n_bins: int = DEFAULT_BINS) -> BinningScheme:
    """
    Split samples into n_bins groups of (nearly) equal size by sorted statistic.

    Membership depends only on the rank order of the statistic, so it is preserved
    under any strictly increasing transform (e.g. positive rescaling). Ties are
    broken by sample index.

    Args:
        statistic: (N,) binning statistic (variance, sigma, sqrt(SGV), ...)
        n_bins: number of bins M

    Returns:
        BinningScheme assigning each sample to exactly one bin
    """
    statistic = np.asarray(statistic, dtype=float).ravel()
    if n_bins < 1:
        raise DataError("bin count must be at least 1")
    if statistic.size == 0:
        raise DataError("cannot bin an empty sample")

    order = np.argsort(statistic, kind="stable")
    assignment = np.empty(statistic.size, dtype=int)
    chunks = np.array_split(order, n_bins)
    edges = np.empty(n_bins + 1)
    edges[0] = statistic[order[0]]
    for m, chunk in enumerate(chunks):
        assignment[chunk] = m
        edges[m + 1] = statistic[chunk].max() if chunk.size else edges[m]
    return BinningScheme(edges=edges, assignment=assignment, n_bins=n_bins)


@dataclass(frozen=True)
class QuantileGrid:
    """Strictly increasing quantile levels in (0, 1)."""
    levels: np.ndarray

    def __post_init__(self):
        levels = np.atleast_1d(np.asarray(self.levels, dtype=float))
        if levels.size == 0:
            raise DataError("quantile grid is empty")
        if not np.all((levels > 0) & (levels < 1)):
            raise DataError("quantile levels must lie in (0, 1)")
        if np.any(np.diff(levels) <= 0):
            raise DataError("quantile levels must be strictly increasing")
        object.__setattr__(self, "levels", levels)

    def __iter__(self) -> Iterable[float]:
        return iter(self.levels.tolist())

    def __len__(self) -> int:
        return self.levels.size

    @classmethod
    def parse(cls, spec: str) -> "QuantileGrid":
        """Parse 'start:stop:step' (inclusive stop) or a comma separated list."""
        try:
            if ":" in spec:
                start, stop, step = (float(part) for part in spec.split(":"))
                if step <= 0:
                    raise DataError("level step must be positive")
                count = int(np.floor((stop - start) / step + 1e-9)) + 1
                levels = np.round(start + step * np.arange(max(count, 1)), 10)
            else:
                levels = np.array([float(part) for part in spec.split(",")])
        except ValueError as exc:
            raise DataError(f"invalid level specification {spec!r}: {exc}") from None
        return cls(levels=levels)

    @classmethod
    def default(cls) -> "QuantileGrid":
        return cls.parse(DEFAULT_LEVELS)
