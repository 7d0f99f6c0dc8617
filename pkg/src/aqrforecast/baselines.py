"""Reference forecasters the adaptive model is compared against.

climatology     unconditional empirical quantiles of the training targets
im-qr-locf/mean impute the series, rebuild complete lag windows, train the
                same network with every mask forced to zero
r-qr            same network trained on the untouched ground truth, the
                upper reference bar (unavailable in practice)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import artifacts
from .errors import DataFormatError, EvaluationError
from .missingness import MaskedSeriesPair
from .model import AqrParams, ModelHyper, QuantileForecast
from .pipeline import (
    ObservedSeries,
    SampleBatch,
    SplitSpec,
    build_samples,
    chronological_split,
)
from .training import TrainConfig, TrainReport, train

__all__ = [
    "IMPUTE_METHODS",
    "ClimatologyModel",
    "climatology_fit",
    "climatology_forecast",
    "impute",
    "fit_imqr",
    "fit_rqr",
]

IMPUTE_METHODS = ("locf_nocb", "mean")


@dataclass(frozen=True)
class ClimatologyModel:
    """Sorted pool of observed training targets; forecasts ignore the input."""

    train_values: np.ndarray

    def __post_init__(self):
        vals = np.sort(np.asarray(self.train_values, dtype=np.float64))
        if vals.size == 0:
            raise EvaluationError("climatology needs at least one observed target")
        if np.any(np.isnan(vals)):
            raise EvaluationError("climatology value pool must be NA-free")
        vals.setflags(write=False)
        object.__setattr__(self, "train_values", vals)


def climatology_fit(train_batch: SampleBatch) -> ClimatologyModel:
    targets = train_batch.targets
    pool = targets[~np.isnan(targets)]
    if pool.size == 0:
        raise EvaluationError("every training target is NA; cannot fit climatology")
    return ClimatologyModel(train_values=pool)


def climatology_forecast(model: ClimatologyModel, levels) -> QuantileForecast:
    """Type-7 empirical quantiles, the same for every input."""
    lv = tuple(float(a) for a in levels)
    values = np.quantile(model.train_values, lv)
    return QuantileForecast(levels=lv, values=values)


def impute(series: ObservedSeries, method: str) -> ObservedSeries:
    if method not in IMPUTE_METHODS:
        raise DataFormatError(
            f"unknown imputation method {method!r}, expected one of {IMPUTE_METHODS}"
        )
    values = series.values.copy()
    obs = ~np.isnan(values)
    if not obs.any():
        raise DataFormatError("cannot impute an all-NA series")
    if method == "mean":
        values[~obs] = values[obs].mean()
    else:  # locf_nocb: carry last observation forward, back-fill the head
        idx = np.where(obs, np.arange(len(values)), -1)
        idx = np.maximum.accumulate(idx)
        first = np.flatnonzero(obs)[0]
        idx[idx < 0] = first
        values = values[idx]
    return ObservedSeries(
        timestamps=series.timestamps, values=values, capacity=series.capacity
    )


def _fit_network(
    series: ObservedSeries,
    kind: str,
    h: int,
    k: int,
    hyper: ModelHyper,
    cfg: TrainConfig,
    split: SplitSpec,
    artifact_path=None,
) -> tuple[AqrParams, TrainReport]:
    if not series.is_complete:
        raise DataFormatError(f"{kind} requires a complete series, found NAs")
    batch = build_samples(series, h=h, k=k)
    train_b, val_b, _test_b = chronological_split(batch, split)
    params, report = train(train_b, val_b, hyper, cfg)
    if artifact_path is not None:
        artifacts.save_network(artifact_path, kind, params)
    return params, report


def fit_imqr(
    masked: MaskedSeriesPair,
    method: str,
    h: int,
    k: int,
    hyper: ModelHyper,
    cfg: TrainConfig = TrainConfig(),
    split: SplitSpec = SplitSpec(),
    artifact_path=None,
) -> tuple[AqrParams, TrainReport]:
    """Impute-then-predict: the network never sees a missingness pattern."""
    if method not in IMPUTE_METHODS:
        raise DataFormatError(
            f"unknown imputation method {method!r}, expected one of {IMPUTE_METHODS}"
        )
    filled = impute(masked.observed, method)
    kind = f"im-qr-{'locf' if method == 'locf_nocb' else 'mean'}"
    return _fit_network(filled, kind, h, k, hyper, cfg, split, artifact_path)


def fit_rqr(
    truth: ObservedSeries,
    h: int,
    k: int,
    hyper: ModelHyper,
    cfg: TrainConfig = TrainConfig(),
    split: SplitSpec = SplitSpec(),
    artifact_path=None,
) -> tuple[AqrParams, TrainReport]:
    """Reference model trained on the complete series."""
    return _fit_network(truth, "r-qr", h, k, hyper, cfg, split, artifact_path)
