"""Probabilistic forecasting of bounded time series under missing data.

The package trains a missingness-adaptive, non-crossing quantile
regression network directly on gappy observations, next to classical
baselines (climatology, impute-then-predict, complete-data reference),
and verifies forecasts with CRPS, reliability and sharpness.

Orchestration (config files, run directories, plots, CLI) lives in
``aqrforecast.experiment`` and ``aqrforecast.cli``; importing the core
package stays free of matplotlib.
"""

from .artifacts import MODEL_KINDS, NETWORK_KINDS, LoadedArtifact, load_model
from .baselines import (
    ClimatologyModel,
    climatology_fit,
    climatology_forecast,
    fit_imqr,
    fit_rqr,
    impute,
)
from .errors import (
    AqrError,
    ArtifactError,
    ConfigError,
    DataFormatError,
    EvaluationError,
    ModelError,
    TrainingError,
)
from .evaluation import (
    EvalReport,
    PredictiveCdf,
    cdf_from_quantiles,
    crps,
    crps_batch,
    evaluate,
    pinball_crps_approx,
    reliability,
    sharpness,
)
from .missingness import (
    MaskedSeriesPair,
    Mechanism,
    mask_blocks,
    mask_selfmask,
    mask_sporadic,
    pattern_enumerate,
)
from .model import (
    AqrParams,
    ModelHyper,
    QuantileForecast,
    batch_loss,
    feature_block,
    forward,
    forward_batch,
    init_params,
    loss_and_gradients,
    loss_gradients,
    pinball,
    quantile_head,
    zero_fill,
)
from .pipeline import (
    ArSpec,
    LaggedSample,
    ObservedSeries,
    SampleBatch,
    SplitSpec,
    build_samples,
    chronological_split,
    generate_synthetic,
    ingest_csv,
    write_csv,
)
from .training import TrainConfig, TrainReport, filter_trainable, train

__version__ = "0.1.0"
