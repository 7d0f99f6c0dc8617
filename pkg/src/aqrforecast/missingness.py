"""Missingness simulators over a complete series, keeping the ground truth.

Three mechanisms are provided, named after how they behave:

* ``sporadic``  -- every point is dropped independently with probability p
  (missing completely at random);
* ``blocks``    -- a fixed number of contiguous outage blocks with random
  starts and lengths, overlaps unioned (missing at random);
* ``selfmask``  -- a point is dropped exactly when its own value exceeds a
  threshold, curtailment style (missing not at random).

Randomized mechanisms draw from ``numpy.random.default_rng(seed)`` (PCG64),
so a (series, parameters, seed) triple pins the output exactly. The draw
order is part of the contract and is documented per function; regression
fixtures in the test suite freeze reference outputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .pipeline import ObservedSeries

MAX_PATTERN_DIM = 12


class Mechanism(enum.Enum):
    SPORADIC_MCAR = "sporadic"
    BLOCK_MAR = "blocks"
    SELFMASK_MNAR = "selfmask"


@dataclass(frozen=True, eq=False)
class MaskedSeriesPair:
    """A complete truth series and its masked counterpart."""

    truth: ObservedSeries
    observed: ObservedSeries
    mechanism: Mechanism
    seed: int

    def __post_init__(self):
        if not self.truth.is_complete:
            raise DataFormatError("truth series must be complete")
        if len(self.truth) != len(self.observed) or np.any(
            self.truth.timestamps != self.observed.timestamps
        ):
            raise DataFormatError("truth and observed must share timestamps")
        obs = self.observed.values
        kept = ~np.isnan(obs)
        if not np.array_equal(obs[kept], self.truth.values[kept]):
            raise DataFormatError("observed values must equal truth where present")


def _require_complete(series: ObservedSeries) -> None:
    if not series.is_complete:
        raise DataFormatError("masking requires a complete input series")


def _pair(series, na_mask, mechanism, seed) -> MaskedSeriesPair:
    observed = np.where(na_mask, np.nan, series.values)
    return MaskedSeriesPair(
        truth=series,
        observed=ObservedSeries(
            timestamps=series.timestamps, values=observed, capacity=series.capacity
        ),
        mechanism=mechanism,
        seed=int(seed),
    )


def mask_sporadic(series: ObservedSeries, p: float, seed: int) -> MaskedSeriesPair:
    """Drop each point independently with probability ``p``.

    Draw order: a single ``rng.random(n)`` vector, point i missing iff
    ``u[i] < p``.
    """
    _require_complete(series)
    if not 0.0 <= p <= 1.0:
        raise DataFormatError(f"p must be in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    na_mask = rng.random(len(series)) < p
    return _pair(series, na_mask, Mechanism.SPORADIC_MCAR, seed)


def mask_blocks(
    series: ObservedSeries,
    n_blocks: int,
    len_min: int,
    len_max: int,
    seed: int,
) -> MaskedSeriesPair:
    """Drop ``n_blocks`` contiguous blocks with uniform starts and lengths.

    Draw order: ``starts = rng.integers(0, n, n_blocks)`` then
    ``lengths = rng.integers(len_min, len_max + 1, n_blocks)``. Blocks may
    overlap (the union is taken) and are truncated at the series end.
    """
    _require_complete(series)
    n = len(series)
    if n_blocks < 1:
        raise DataFormatError(f"n_blocks must be >= 1, got {n_blocks}")
    if len_min < 1 or len_min > len_max:
        raise DataFormatError(f"need 1 <= len_min <= len_max, got [{len_min}, {len_max}]")
    if len_max > n:
        raise DataFormatError(f"len_max={len_max} exceeds series length {n}")
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, n, size=n_blocks)
    lengths = rng.integers(len_min, len_max + 1, size=n_blocks)
    na_mask = np.zeros(n, dtype=bool)
    for start, length in zip(starts, lengths):
        na_mask[start : min(start + length, n)] = True
    return _pair(series, na_mask, Mechanism.BLOCK_MAR, seed)


def mask_selfmask(series: ObservedSeries, threshold: float) -> MaskedSeriesPair:
    """Drop exactly the points whose value strictly exceeds ``threshold``."""
    _require_complete(series)
    if not 0.0 <= threshold <= 1.0:
        raise DataFormatError(f"threshold must be in [0, 1], got {threshold}")
    na_mask = series.values > threshold
    return _pair(series, na_mask, Mechanism.SELFMASK_MNAR, seed=0)


def pattern_enumerate(d: int) -> np.ndarray:
    """All 2^d missingness patterns in lexicographic order, one per row.

    Deliberately capped at d <= 12: this exists to support brute-force
    per-pattern oracles at small dimension, not production use.
    """
    if d < 1:
        raise DataFormatError(f"d must be >= 1, got {d}")
    if d > MAX_PATTERN_DIM:
        raise DataFormatError(f"pattern enumeration capped at d <= {MAX_PATTERN_DIM}")
    codes = np.arange(2**d, dtype=np.uint32)[:, None]
    shifts = np.arange(d - 1, -1, -1, dtype=np.uint32)
    return ((codes >> shifts) & 1).astype(np.uint8)
