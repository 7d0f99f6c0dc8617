"""Data pipeline: series ingestion, lagged sample construction, chronological splits.

A series lives on a uniform hourly grid (integer epoch seconds, 3600 s step).
Values are normalized power in [0, 1]; missing observations are ``NaN``.
Rows absent from the hourly grid are materialized as missing so that lag
indexing stays uniform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError

HOUR_SECONDS = 3600


def _locked(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ObservedSeries:
    """Hourly series of normalized values in [0, 1], NaN marking missing points.

    ``capacity`` records the normalization constant (MW); internal artifacts
    written by this package are already normalized and carry capacity 1.0.
    """

    timestamps: np.ndarray
    values: np.ndarray
    capacity: float = 1.0

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if ts.ndim != 1 or vals.ndim != 1:
            raise DataFormatError("timestamps and values must be 1-D")
        if len(ts) != len(vals):
            raise DataFormatError(
                f"length mismatch: {len(ts)} timestamps vs {len(vals)} values"
            )
        if len(ts) == 0:
            raise DataFormatError("series must contain at least one row")
        if self.capacity <= 0:
            raise DataFormatError(f"capacity must be positive, got {self.capacity}")
        steps = np.diff(ts)
        if np.any(steps <= 0):
            raise DataFormatError("timestamps must be strictly increasing")
        if np.any(steps != HOUR_SECONDS):
            raise DataFormatError("timestamps must lie on a uniform hourly grid")
        observed = vals[~np.isnan(vals)]
        if observed.size and (observed.min() < 0.0 or observed.max() > 1.0):
            raise DataFormatError("observed values must lie in [0, 1]")
        object.__setattr__(self, "timestamps", _locked(ts))
        object.__setattr__(self, "values", _locked(vals))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def is_complete(self) -> bool:
        return not np.any(np.isnan(self.values))

    @property
    def missing_fraction(self) -> float:
        return float(np.isnan(self.values).mean())


@dataclass(frozen=True)
class SplitSpec:
    """Chronological train/validation/test fractions; must sum to 1."""

    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2

    def __post_init__(self):
        for name, frac in (
            ("train_frac", self.train_frac),
            ("val_frac", self.val_frac),
            ("test_frac", self.test_frac),
        ):
            if not 0.0 < frac < 1.0:
                raise DataFormatError(f"{name} must be in (0, 1), got {frac}")
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-12:
            raise DataFormatError(f"split fractions must sum to 1, got {total!r}")


@dataclass(frozen=True)
class ArSpec:
    """Bounded AR(1) generator: latent s_{t+1} = rho*s_t + eps, value = logistic(s_t)."""

    rho: float = 0.98
    sigma: float = 0.15
    s0: float = 0.0

    def __post_init__(self):
        if abs(self.rho) >= 1.0:
            raise DataFormatError(f"|rho| must be < 1 for a stable latent, got {self.rho}")
        if self.sigma < 0.0:
            raise DataFormatError(f"sigma must be nonnegative, got {self.sigma}")


@dataclass(frozen=True)
class LaggedSample:
    """One supervised sample: lag window (may contain NaN), mask, lead, target."""

    features: np.ndarray
    mask: np.ndarray
    lead: int
    target: float
    origin_time: int


@dataclass(eq=False)
class SampleBatch:
    """Column-oriented sequence of LaggedSample, ordered by origin time.

    ``features`` is (n, d) float64 with NaN at missing lags, ``mask`` the
    matching (n, d) uint8 indicator (1 = missing), ``targets`` (n,) float64
    with NaN where the target itself is missing.
    """

    features: np.ndarray
    mask: np.ndarray
    targets: np.ndarray
    origin_times: np.ndarray
    lead: int

    def __post_init__(self):
        if self.features.shape != self.mask.shape:
            raise DataFormatError("features and mask shapes differ")
        if len(self.features) != len(self.targets) or len(self.targets) != len(
            self.origin_times
        ):
            raise DataFormatError("sample arrays must share their first dimension")

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def n_lags(self) -> int:
        return self.features.shape[1]

    def __getitem__(self, i: int) -> LaggedSample:
        return LaggedSample(
            features=self.features[i].copy(),
            mask=self.mask[i].copy(),
            lead=self.lead,
            target=float(self.targets[i]),
            origin_time=int(self.origin_times[i]),
        )

    def subset(self, idx) -> "SampleBatch":
        return SampleBatch(
            features=self.features[idx].copy(),
            mask=self.mask[idx].copy(),
            targets=self.targets[idx].copy(),
            origin_times=self.origin_times[idx].copy(),
            lead=self.lead,
        )


def ingest_csv(path, capacity: float) -> ObservedSeries:
    """Read a `timestamp,value` CSV into a normalized hourly series.

    The value field may be empty or the literal ``NA`` for a missing point.
    Values are divided by ``capacity`` and clipped to [0, 1]; hours absent
    from the grid become NaN rows. Rows must be strictly increasing in time
    and aligned to the 3600 s grid anchored at the first row.
    """
    path = Path(path)
    if capacity <= 0:
        raise DataFormatError(f"capacity must be positive, got {capacity}")
    if not path.is_file():
        raise DataFormatError(f"no CSV series at {path}")
    timestamps: list[int] = []
    raw: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["timestamp", "value"]:
            raise DataFormatError(f"{path}: expected header 'timestamp,value'")
        for row_idx, row in enumerate(reader):
            if len(row) < 2:
                raise DataFormatError(f"{path}: row {row_idx}: expected 2 fields")
            try:
                ts = int(row[0].strip())
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {row_idx}: unparsable timestamp {row[0]!r}"
                ) from None
            cell = row[1].strip()
            if cell == "" or cell == "NA":
                val = np.nan
            else:
                try:
                    val = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {row_idx}: unparsable value {cell!r}"
                    ) from None
                if val < 0:
                    raise DataFormatError(
                        f"{path}: row {row_idx}: negative value {val}"
                    )
            if timestamps:
                if ts <= timestamps[-1]:
                    raise DataFormatError(
                        f"{path}: row {row_idx}: timestamp {ts} not increasing"
                    )
                if (ts - timestamps[0]) % HOUR_SECONDS != 0:
                    raise DataFormatError(
                        f"{path}: row {row_idx}: timestamp {ts} off the hourly grid"
                    )
            timestamps.append(ts)
            raw.append(val)
    if not timestamps:
        raise DataFormatError(f"{path}: no data rows")

    grid = np.arange(timestamps[0], timestamps[-1] + 1, HOUR_SECONDS, dtype=np.int64)
    values = np.full(len(grid), np.nan)
    pos = (np.asarray(timestamps, dtype=np.int64) - timestamps[0]) // HOUR_SECONDS
    values[pos] = raw
    with np.errstate(invalid="ignore"):
        values = np.clip(values / capacity, 0.0, 1.0)
    return ObservedSeries(timestamps=grid, values=values, capacity=float(capacity))


def write_csv(series: ObservedSeries, path) -> None:
    """Write a series as `timestamp,value` with normalized values and NA gaps.

    Values are written with full round-trip precision, so re-ingesting the
    file with capacity 1.0 reproduces the series bit for bit.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "value"])
        for ts, v in zip(series.timestamps, series.values):
            writer.writerow([int(ts), "NA" if np.isnan(v) else repr(float(v))])


def build_samples(series: ObservedSeries, h: int, k: int) -> SampleBatch:
    """Build one lagged sample per forecast origin for lead time ``k``.

    Origin t (1-indexed, t in [h, n-k]) yields features (y_{t-h+1}, ..., y_t)
    and target y_{t+k}; the sample count is exactly n - h - k + 1.
    """
    if h < 1 or k < 1:
        raise DataFormatError(f"h and k must be >= 1, got h={h}, k={k}")
    n = len(series)
    if n < h + k:
        raise DataFormatError(
            f"series of length {n} too short for h={h}, k={k} (needs >= {h + k})"
        )
    windows = np.lib.stride_tricks.sliding_window_view(series.values, h)
    features = windows[: n - h - k + 1].copy()
    targets = series.values[h + k - 1 :].copy()
    origin_times = series.timestamps[h - 1 : n - k].copy()
    mask = np.isnan(features).astype(np.uint8)
    return SampleBatch(
        features=features,
        mask=mask,
        targets=targets,
        origin_times=origin_times,
        lead=int(k),
    )


def chronological_split(
    samples: SampleBatch, spec: SplitSpec
) -> tuple[SampleBatch, SampleBatch, SampleBatch]:
    """Contiguous prefix/middle/suffix partition by origin time, no shuffling."""
    n = len(samples)
    if n == 0:
        raise DataFormatError("cannot split an empty sample set")
    if np.any(np.diff(samples.origin_times) <= 0):
        raise DataFormatError("samples must be ordered by origin_time")
    # tiny epsilon guards against 0.7 + 0.1 style float dust before flooring
    b1 = int(np.floor(n * spec.train_frac + 1e-9))
    b2 = int(np.floor(n * (spec.train_frac + spec.val_frac) + 1e-9))
    return (
        samples.subset(slice(0, b1)),
        samples.subset(slice(b1, b2)),
        samples.subset(slice(b2, n)),
    )


def generate_synthetic(n: int, seed: int, spec: ArSpec = ArSpec()) -> ObservedSeries:
    """Deterministic bounded test series driven by a latent Gaussian AR(1)."""
    if n < 1:
        raise DataFormatError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    shocks = spec.sigma * rng.standard_normal(n - 1) if n > 1 else np.empty(0)
    s = np.empty(n)
    s[0] = spec.s0
    for t in range(n - 1):
        s[t + 1] = spec.rho * s[t] + shocks[t]
    values = 1.0 / (1.0 + np.exp(-s))
    timestamps = np.arange(n, dtype=np.int64) * HOUR_SECONDS
    return ObservedSeries(timestamps=timestamps, values=values, capacity=1.0)
