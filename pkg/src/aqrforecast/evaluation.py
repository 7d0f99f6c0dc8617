"""Forecast verification: CRPS, reliability, sharpness, eval reports.

The predictive CDF is reconstructed from the quantile set as a piecewise
linear function through (0, 0), (q^{a_1}, a_1), ..., (q^{a_m}, a_m), (1, 1);
tied quantile values give vertical jumps. CRPS is the exact integral

    crps(F, y) = integral over [0, 1] of (F(v) - 1{v >= y})^2 dv

computed segment by segment (each integrand piece is quadratic in v, so
the antiderivative is evaluated in closed form, no sampling anywhere).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .artifacts import LoadedArtifact
from .errors import EvaluationError
from .model import QuantileForecast, forward_batch, validate_levels
from .pipeline import SampleBatch
from .training import filter_trainable

__all__ = [
    "DEFAULT_CENTRAL_LEVELS",
    "PredictiveCdf",
    "EvalReport",
    "cdf_from_quantiles",
    "crps",
    "crps_batch",
    "pinball_crps_approx",
    "reliability",
    "sharpness",
    "artifact_forecasts",
    "evaluate",
]

DEFAULT_CENTRAL_LEVELS = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass(frozen=True)
class PredictiveCdf:
    """Piecewise-linear CDF knots on the unit interval."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        p = np.asarray(self.probs, dtype=np.float64)
        if v.shape != p.shape or v.ndim != 1 or v.size < 2:
            raise EvaluationError("CDF needs matching 1-D knot arrays, length >= 2")
        if np.any(np.diff(v) < 0) or np.any(np.diff(p) < 0):
            raise EvaluationError("CDF knots must be nondecreasing")
        if v[0] < 0 or v[-1] > 1 or p[0] != 0.0 or p[-1] != 1.0:
            raise EvaluationError("CDF must rise from probability 0 to 1 on [0, 1]")
        for arr in (v, p):
            arr.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @property
    def knots(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.probs.tolist()))


def cdf_from_quantiles(forecast: QuantileForecast) -> PredictiveCdf:
    q = forecast.values
    if np.any(q < 0) or np.any(q > 1):
        raise EvaluationError("forecast values must be clipped to [0, 1]")
    v = np.concatenate([[0.0], q, [1.0]])
    p = np.concatenate([[0.0], np.asarray(forecast.levels), [1.0]])
    # collapse each run of tied values to its endpoints: one vertical jump
    keep = np.ones(len(v), dtype=bool)
    keep[1:-1] = (v[1:-1] != v[:-2]) | (v[1:-1] != v[2:])
    return PredictiveCdf(values=v[keep], probs=p[keep])


def _as_matrix(forecasts, levels) -> np.ndarray:
    if isinstance(forecasts, np.ndarray):
        mat = np.asarray(forecasts, dtype=np.float64)
    else:
        rows = []
        for fc in forecasts:
            if tuple(fc.levels) != tuple(levels):
                raise EvaluationError("forecast levels do not match the requested levels")
            rows.append(fc.values)
        mat = np.asarray(rows, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != len(levels):
        raise EvaluationError(
            f"forecast matrix has shape {mat.shape}, expected (n, {len(levels)})"
        )
    if np.any(np.diff(mat, axis=1) < 0):
        raise EvaluationError("forecast rows must be nondecreasing across levels")
    if np.any(mat < 0) or np.any(mat > 1):
        raise EvaluationError("forecast values must lie in [0, 1]")
    return mat


def _check_targets(y: np.ndarray):
    if y.size == 0:
        raise EvaluationError("no targets to score")
    if np.any(np.isnan(y)) or np.any(y < 0) or np.any(y > 1):
        raise EvaluationError("targets must be NA-free and lie in [0, 1]")


def crps_batch(forecasts, levels, targets) -> np.ndarray:
    """Exact CRPS per sample for an (n, m) matrix of quantile values."""
    levels = validate_levels(levels)
    q = _as_matrix(forecasts, levels)
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != (q.shape[0],):
        raise EvaluationError("targets must be one scalar per forecast row")
    _check_targets(y)

    n = q.shape[0]
    knot_v = np.concatenate([np.zeros((n, 1)), q, np.ones((n, 1))], axis=1)
    knot_p = np.concatenate([[0.0], levels, [1.0]])
    v0, v1 = knot_v[:, :-1], knot_v[:, 1:]
    w = v1 - v0
    p0, p1 = knot_p[:-1][None, :], knot_p[1:][None, :]
    # t = position of y inside each segment, clipped to its ends
    t = np.zeros_like(w)
    np.divide(y[:, None] - v0, w, out=t, where=w > 0)
    np.clip(t, 0.0, 1.0, out=t)
    pt = p0 + t * (p1 - p0)
    # integral of F^2 below y, of (F-1)^2 above; both quadratics in v
    below = w * t * (p0 * p0 + p0 * pt + pt * pt) / 3.0
    e0, e1 = pt - 1.0, p1 - 1.0
    above = w * (1.0 - t) * (e0 * e0 + e0 * e1 + e1 * e1) / 3.0
    return (below + above).sum(axis=1)


def crps(forecast: QuantileForecast, y: float) -> float:
    if not 0.0 <= y <= 1.0:
        raise EvaluationError(f"target {y} outside [0, 1]")
    out = crps_batch(forecast.values[None, :], forecast.levels, np.array([float(y)]))
    return float(out[0])


def pinball_crps_approx(forecasts, levels, targets) -> np.ndarray:
    """(2/m) * sum_i pinball_i, a quantile-score approximation of CRPS."""
    levels = validate_levels(levels)
    q = _as_matrix(forecasts, levels)
    y = np.asarray(targets, dtype=np.float64)
    _check_targets(y)
    alphas = np.asarray(levels)
    e = y[:, None] - q
    return 2.0 * np.mean(np.maximum(alphas * e, (alphas - 1.0) * e), axis=1)


def reliability(forecasts, targets, levels) -> np.ndarray:
    """Empirical coverage per level: share of targets at or below q^alpha."""
    levels = validate_levels(levels)
    q = _as_matrix(forecasts, levels)
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != (q.shape[0],):
        raise EvaluationError("targets must be one scalar per forecast row")
    _check_targets(y)
    return (y[:, None] <= q).mean(axis=0)


def sharpness(forecasts, levels, central_levels=DEFAULT_CENTRAL_LEVELS) -> np.ndarray:
    """Mean width of the central interval for each nominal coverage beta."""
    levels = validate_levels(levels)
    q = _as_matrix(forecasts, levels)
    grid = np.asarray(levels)
    widths = []
    for beta in central_levels:
        if not 0.0 < beta < 1.0:
            raise EvaluationError(f"central coverage beta={beta} outside (0, 1)")
        lo = np.flatnonzero(np.isclose(grid, (1.0 - beta) / 2.0, rtol=0.0, atol=1e-9))
        hi = np.flatnonzero(np.isclose(grid, (1.0 + beta) / 2.0, rtol=0.0, atol=1e-9))
        if lo.size != 1 or hi.size != 1:
            raise EvaluationError(
                f"levels for the beta={beta} central interval are not in the forecast grid"
            )
        widths.append(float((q[:, hi[0]] - q[:, lo[0]]).mean()))
    return np.asarray(widths)


@dataclass(frozen=True)
class EvalReport:
    model_kind: str
    case: str
    lead: int
    seed: int
    n_samples: int
    crps_pct: float
    levels: tuple[float, ...]
    coverage: tuple[float, ...]
    central_levels: tuple[float, ...]
    mean_widths: tuple[float, ...]
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.crps_pct < 0:
            raise EvaluationError("CRPS cannot be negative")
        if any(not 0.0 <= c <= 1.0 for c in self.coverage):
            raise EvaluationError("coverage values must lie in [0, 1]")
        if any(not 0.0 <= w <= 1.0 for w in self.mean_widths):
            raise EvaluationError("interval widths must lie in [0, 1]")


def artifact_forecasts(artifact: LoadedArtifact, batch: SampleBatch) -> tuple[np.ndarray, tuple]:
    """(n, m) clipped quantile matrix and the levels an artifact predicts at."""
    if artifact.kind == "climatology":
        levels = artifact.levels
        row = np.quantile(artifact.train_values, levels)
        return np.tile(row, (len(batch), 1)), tuple(levels)
    params = artifact.params
    if artifact.kind != "aqr" and np.any(np.isnan(batch.features)):
        raise EvaluationError(
            f"{artifact.kind} expects imputed (complete) features, got NAs; "
            "evaluate it on the imputed test batch"
        )
    return forward_batch(batch.features, batch.mask, params, clip=True), params.hyper.levels


def evaluate(
    artifact: LoadedArtifact,
    test_batch: SampleBatch,
    case: str = "unspecified",
    seed: int = 0,
    central_levels=DEFAULT_CENTRAL_LEVELS,
    notes=(),
) -> EvalReport:
    """Score one model on a test batch (NA targets are dropped first)."""
    batch = filter_trainable(test_batch)
    if len(batch) == 0:
        raise EvaluationError("test set has no scoreable samples (all targets NA)")
    q, levels = artifact_forecasts(artifact, batch)
    scores = crps_batch(q, levels, batch.targets)
    cov = reliability(q, batch.targets, levels)
    widths = sharpness(q, levels, central_levels)
    return EvalReport(
        model_kind=artifact.kind,
        case=case,
        lead=batch.lead,
        seed=seed,
        n_samples=len(batch),
        crps_pct=float(100.0 * scores.mean()),
        levels=tuple(levels),
        coverage=tuple(float(c) for c in cov),
        central_levels=tuple(float(b) for b in central_levels),
        mean_widths=tuple(float(w) for w in widths),
        notes=tuple(notes),
    )
