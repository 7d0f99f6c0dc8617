import numpy as np
import pytest

from aqrforecast.errors import TrainingError
from aqrforecast.model import ModelHyper, batch_loss, init_params
from aqrforecast.pipeline import (
    ArSpec,
    SampleBatch,
    SplitSpec,
    build_samples,
    chronological_split,
    generate_synthetic,
)
from aqrforecast.training import TrainConfig, TrainReport, filter_trainable, train

SMALL = ModelHyper(
    n_lags=4, hidden=8, feature_layers=2, head_layers=2, levels=(0.1, 0.5, 0.9)
)


def toy_batch(n=40, d=4, seed=0, na_targets=()):
    rng = np.random.default_rng(seed)
    feats = rng.uniform(size=(n, d))
    targets = rng.uniform(size=n)
    for i in na_targets:
        targets[i] = np.nan
    return SampleBatch(
        features=feats,
        mask=np.zeros((n, d), dtype=np.uint8),
        targets=targets,
        origin_times=np.arange(n, dtype=np.int64) * 3600,
        lead=1,
    )


@pytest.fixture(scope="module")
def ar_splits():
    series = generate_synthetic(2000, seed=42, spec=ArSpec())
    batch = build_samples(series, h=6, k=1)
    return chronological_split(batch, SplitSpec())


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.lr == 1e-3 and cfg.batch_size == 256
        assert cfg.max_epochs == 200 and cfg.patience == 20
        assert (cfg.beta1, cfg.beta2, cfg.eps) == (0.9, 0.999, 1e-8)
        assert cfg.weight_decay == 0.0 and cfg.lr_decay == 1.0

    def test_validation(self):
        with pytest.raises(TrainingError):
            TrainConfig(lr=0.0)
        with pytest.raises(TrainingError):
            TrainConfig(beta1=1.0)
        with pytest.raises(TrainingError):
            TrainConfig(eps=0.0)
        with pytest.raises(TrainingError):
            TrainConfig(batch_size=0)
        with pytest.raises(TrainingError):
            TrainConfig(max_epochs=0)
        with pytest.raises(TrainingError):
            TrainConfig(patience=-1)
        with pytest.raises(TrainingError):
            TrainConfig(lr_decay=0.0)
        TrainConfig(patience=0)  # legal: stop at first non-improving epoch


class TestFilterTrainable:
    def test_drops_only_na_targets(self):
        b = toy_batch(n=5, na_targets=(1, 3))
        out = filter_trainable(b)
        assert len(out) == 3
        assert out.origin_times.tolist() == [0, 2 * 3600, 4 * 3600]

    def test_all_na_gives_empty(self):
        b = toy_batch(n=3, na_targets=(0, 1, 2))
        assert len(filter_trainable(b)) == 0

    def test_no_na_is_identity(self):
        b = toy_batch(n=4)
        out = filter_trainable(b)
        assert np.array_equal(out.features, b.features)
        assert np.array_equal(out.targets, b.targets)

    def test_feature_nas_are_kept(self):
        b = toy_batch(n=4)
        b.features[0, 0] = np.nan
        b.mask[0, 0] = 1
        assert len(filter_trainable(b)) == 4


class TestTrain:
    def test_deterministic_rerun(self):
        tr, va = toy_batch(seed=1), toy_batch(seed=2, n=16)
        cfg = TrainConfig(max_epochs=5, batch_size=16, seed=7)
        p1, r1 = train(tr, va, SMALL, cfg)
        p2, r2 = train(tr, va, SMALL, cfg)
        for (_, a), (_, b) in zip(p1.named_arrays(), p2.named_arrays()):
            assert np.array_equal(a, b)
        assert r1.val_losses == r2.val_losses

    def test_single_epoch_patience_zero(self):
        tr, va = toy_batch(seed=1), toy_batch(seed=2, n=16)
        cfg = TrainConfig(max_epochs=1, patience=0, batch_size=16, seed=0)
        _, report = train(tr, va, SMALL, cfg)
        assert report.epochs_run == 1
        assert report.best_epoch == 0
        assert len(report.train_losses) == 1 and len(report.val_losses) == 1

    def test_report_invariants(self):
        tr, va = toy_batch(seed=3), toy_batch(seed=4, n=16)
        cfg = TrainConfig(max_epochs=12, patience=3, batch_size=16, seed=5)
        _, report = train(tr, va, SMALL, cfg)
        assert len(report.val_losses) == report.epochs_run
        assert len(report.train_losses) == report.epochs_run
        assert report.val_losses[report.best_epoch] == min(report.val_losses)
        assert report.best_val_loss == min(report.val_losses)

    def test_returns_argmin_val_params_not_last(self):
        tr, va = toy_batch(seed=1), toy_batch(seed=2, n=16)
        cfg = TrainConfig(max_epochs=30, patience=30, batch_size=16, seed=3, lr=5e-2)
        params, report = train(tr, va, SMALL, cfg)
        got = batch_loss(va, params)
        assert got == pytest.approx(min(report.val_losses), rel=1e-12)
        # an aggressive learning rate makes some later epoch worse, so the
        # snapshot cannot simply be the final state
        assert report.best_epoch < report.epochs_run - 1 or report.stopped_early

    def test_training_improves_validation_loss(self, ar_splits):
        tr, va, _ = ar_splits
        hyper = ModelHyper(n_lags=6, hidden=16, levels=(0.1, 0.5, 0.9))
        cfg = TrainConfig(max_epochs=20, patience=20, seed=1)
        _, report = train(tr, va, hyper, cfg)
        assert min(report.val_losses) < report.val_losses[0]

    def test_empty_train_set_rejected(self):
        tr = toy_batch(n=3, na_targets=(0, 1, 2))
        va = toy_batch(n=8, seed=2)
        with pytest.raises(TrainingError, match="empty"):
            train(tr, va, SMALL)

    def test_lag_count_mismatch_rejected(self):
        tr = toy_batch(n=8, d=5)
        va = toy_batch(n=8, d=5, seed=2)
        with pytest.raises(TrainingError, match="lags"):
            train(tr, va, SMALL, TrainConfig(max_epochs=1))

    def test_lead_mismatch_rejected(self):
        tr, va = toy_batch(n=8), toy_batch(n=8, seed=2)
        hyper = ModelHyper(n_lags=4, hidden=8, levels=(0.5,), lead=2)
        with pytest.raises(TrainingError, match="lead"):
            train(tr, va, hyper, TrainConfig(max_epochs=1))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_names_epoch(self):
        tr, va = toy_batch(seed=1), toy_batch(seed=2, n=16)
        cfg = TrainConfig(max_epochs=3, batch_size=16, seed=0, lr=1e150)
        with pytest.raises(TrainingError, match="epoch"):
            train(tr, va, SMALL, cfg)

    def test_early_stop_happens(self):
        tr, va = toy_batch(seed=1), toy_batch(seed=2, n=16)
        cfg = TrainConfig(max_epochs=200, patience=2, batch_size=16, seed=0, lr=0.1)
        _, report = train(tr, va, SMALL, cfg)
        assert report.stopped_early
        assert report.epochs_run < 200
