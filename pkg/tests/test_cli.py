import json

import numpy as np
import pytest

from aqrforecast.cli import main
from aqrforecast.errors import AqrError, ConfigError, TrainingError
from aqrforecast.experiment import (
    cmd_simulate,
    cmd_train,
    config_from_dict,
    derive_seed,
)
from aqrforecast.pipeline import generate_synthetic, write_csv


def tiny_config(out_dir, **over):
    cfg = {
        "seed": 9,
        "out_dir": str(out_dir),
        "data": {"source": "synthetic", "n": 600},
        "h": 4,
        "leads": [1],
        "levels": [0.1, 0.5, 0.9],
        "models": ["climatology", "aqr"],
        "network": {"hidden": 6, "feature_layers": 2, "head_layers": 1},
        "train": {"max_epochs": 2, "batch_size": 128, "patience": 2},
        "eval": {"fan_window": 24, "central_levels": [0.8]},
        "mechanism": {"kind": "sporadic", "p": 0.2},
    }
    cfg.update(over)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_tree(root):
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class TestConfigParsing:
    def test_seed_is_mandatory(self, tmp_path):
        cfg = tiny_config(tmp_path)
        del cfg["seed"]
        with pytest.raises(ConfigError, match="seed"):
            config_from_dict(cfg)

    def test_bool_seed_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="seed"):
            config_from_dict(tiny_config(tmp_path, seed=True))

    def test_unknown_keys_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="mystery"):
            config_from_dict(tiny_config(tmp_path, mystery=1))
        bad = tiny_config(tmp_path)
        bad["train"] = {"max_epochs": 2, "warmup": 5}
        with pytest.raises(ConfigError, match="warmup"):
            config_from_dict(bad)

    def test_model_and_lead_validation(self, tmp_path):
        with pytest.raises(ConfigError, match="model"):
            config_from_dict(tiny_config(tmp_path, models=["oracle"]))
        with pytest.raises(ConfigError, match="leads"):
            config_from_dict(tiny_config(tmp_path, leads=[]))
        with pytest.raises(ConfigError, match="leads"):
            config_from_dict(tiny_config(tmp_path, leads=[1, 1]))

    def test_train_section_validated_at_parse_time(self, tmp_path):
        bad = tiny_config(tmp_path)
        bad["train"] = {"lr": -1.0}
        with pytest.raises(AqrError):
            config_from_dict(bad)

    def test_defaults(self, tmp_path):
        cfg = config_from_dict({"seed": 1, "out_dir": str(tmp_path)})
        assert cfg.h == 6
        assert cfg.leads == (1, 2, 3)
        assert len(cfg.levels) == 19
        assert set(cfg.models) == {
            "aqr", "im-qr-locf", "im-qr-mean", "r-qr", "climatology"
        }
        assert cfg.fan_window == 144
        assert cfg.run_dir == tmp_path / "seed1"

    def test_config_hash_ignores_out_dir_only(self, tmp_path):
        a = config_from_dict(tiny_config(tmp_path / "a"))
        b = config_from_dict(tiny_config(tmp_path / "b"))
        c = config_from_dict(tiny_config(tmp_path / "a", seed=10))
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()

    def test_derive_seed_is_stable_and_purpose_dependent(self):
        assert derive_seed(5, "mask") == derive_seed(5, "mask")
        assert derive_seed(5, "mask") != derive_seed(5, "source")
        assert derive_seed(5, "aqr", 1, "init") != derive_seed(5, "aqr", 2, "init")


class TestSimulateCommand:
    def test_manifest_records_missing_fraction(self, tmp_path):
        cfg_path = write_config(
            tmp_path, tiny_config(tmp_path / "runs", data={"source": "synthetic", "n": 2000})
        )
        assert main(["simulate", "--config", cfg_path]) == 0
        manifest = json.loads(
            (tmp_path / "runs" / "seed9" / "data" / "manifest.json").read_text()
        )
        assert manifest["mechanism"] == {"kind": "sporadic", "p": 0.2}
        assert 0.15 <= manifest["missing_fraction"] <= 0.25
        assert manifest["seed"] == 9
        assert manifest["tool_version"]
        assert manifest["config_hash"]

    def test_selfmask_without_exceedance_changes_nothing(self, tmp_path):
        cfg = tiny_config(
            tmp_path / "runs",
            mechanism={"kind": "selfmask", "threshold": 0.999},
            data={"source": "synthetic", "n": 300, "ar": {"sigma": 0.01}},
        )
        assert main(["simulate", "--config", write_config(tmp_path, cfg)]) == 0
        data_dir = tmp_path / "runs" / "seed9" / "data"
        assert (data_dir / "observed.csv").read_bytes() == (
            data_dir / "truth.csv"
        ).read_bytes()

    def test_rerun_byte_identical(self, tmp_path):
        cfg_path = write_config(tmp_path, tiny_config(tmp_path / "runs"))
        main(["simulate", "--config", cfg_path])
        first = read_tree(tmp_path / "runs")
        main(["simulate", "--config", cfg_path])
        assert read_tree(tmp_path / "runs") == first

    def test_mechanism_flag_overrides(self, tmp_path):
        cfg_path = write_config(tmp_path, tiny_config(tmp_path / "runs"))
        main(["simulate", "--config", cfg_path, "--p", "0.5"])
        manifest = json.loads(
            (tmp_path / "runs" / "seed9" / "data" / "manifest.json").read_text()
        )
        assert manifest["mechanism"]["p"] == 0.5
        assert 0.35 <= manifest["missing_fraction"] <= 0.65

    def test_mechanism_switch_drops_stale_params(self, tmp_path):
        cfg_path = write_config(tmp_path, tiny_config(tmp_path / "runs"))
        code = main(
            ["simulate", "--config", cfg_path, "--mechanism", "selfmask",
             "--threshold", "0.6"]
        )
        assert code == 0
        manifest = json.loads(
            (tmp_path / "runs" / "seed9" / "data" / "manifest.json").read_text()
        )
        assert manifest["mechanism"] == {"kind": "selfmask", "threshold": 0.6}

    def test_csv_source_never_mutated(self, tmp_path):
        src = tmp_path / "input.csv"
        write_csv(generate_synthetic(200, seed=3), src)
        before = src.read_bytes()
        cfg = tiny_config(
            tmp_path / "runs", data={"source": "csv", "path": str(src)}
        )
        assert main(["simulate", "--config", write_config(tmp_path, cfg)]) == 0
        assert src.read_bytes() == before


class TestTrainCommand:
    def test_one_artifact_per_model_and_lead(self, tmp_path):
        cfg = tiny_config(tmp_path / "runs", models=["aqr"], leads=[1, 2, 3])
        cfg_path = write_config(tmp_path, cfg)
        assert main(["simulate", "--config", cfg_path]) == 0
        assert main(["train", "--config", cfg_path]) == 0
        models = tmp_path / "runs" / "seed9" / "models"
        found = sorted(p.name for p in models.glob("*.model"))
        assert found == ["aqr_lead1.model", "aqr_lead2.model", "aqr_lead3.model"]

    def test_distinct_kind_headers(self, tmp_path):
        from aqrforecast.artifacts import load_model

        cfg = tiny_config(tmp_path / "runs", models=["aqr", "im-qr-mean", "r-qr"])
        cfg_path = write_config(tmp_path, cfg)
        main(["simulate", "--config", cfg_path])
        assert main(["train", "--config", cfg_path]) == 0
        models = tmp_path / "runs" / "seed9" / "models"
        kinds = {load_model(p).kind for p in models.glob("*_lead1.model")}
        assert kinds == {"aqr", "im-qr-mean", "r-qr"}

    def test_failures_do_not_abort_other_jobs(self, tmp_path, monkeypatch):
        cfg = config_from_dict(
            tiny_config(tmp_path / "runs", models=["climatology", "im-qr-mean", "aqr"])
        )
        cmd_simulate(cfg)

        def boom(series, method):
            raise TrainingError("imputer exploded")

        monkeypatch.setattr("aqrforecast.experiment.baselines.impute", boom)
        result = cmd_train(cfg)
        assert set(result["failures"]) == {"im-qr-mean_lead1"}
        assert set(result["artifacts"]) == {"climatology_lead1", "aqr_lead1"}
        manifest = json.loads(
            (cfg.run_dir / "models" / "manifest.json").read_text()
        )
        assert "im-qr-mean_lead1" in manifest["failures"]

    def test_all_jobs_failing_raises(self, tmp_path, monkeypatch):
        cfg = config_from_dict(tiny_config(tmp_path / "runs", models=["im-qr-mean"]))
        cmd_simulate(cfg)
        monkeypatch.setattr(
            "aqrforecast.experiment.baselines.impute",
            lambda s, m: (_ for _ in ()).throw(TrainingError("imputer exploded")),
        )
        with pytest.raises(TrainingError, match="every training job failed"):
            cmd_train(cfg)

    def test_train_before_simulate_fails(self, tmp_path):
        cfg_path = write_config(tmp_path, tiny_config(tmp_path / "runs"))
        assert main(["train", "--config", cfg_path]) == 1


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("evalrun")
    cfg = tiny_config(tmp / "runs", models=["climatology", "aqr"], leads=[1, 2])
    cfg_path = write_config(tmp, cfg)
    assert main(["run", "--config", cfg_path]) == 0
    return tmp, cfg_path


class TestEvaluateCommand:
    def test_crps_schema_one_row_per_model_lead(self, run_dir):
        tmp, _ = run_dir
        lines = (tmp / "runs" / "seed9" / "reports" / "crps.csv").read_text().splitlines()
        assert lines[0] == "model,lead,case,seed,n_samples,crps_pct"
        assert len(lines) == 1 + 2 * 2
        pairs = {tuple(line.split(",")[:2]) for line in lines[1:]}
        assert pairs == {
            ("climatology", "1"), ("aqr", "1"), ("climatology", "2"), ("aqr", "2")
        }

    def test_reliability_and_sharpness_schemas(self, run_dir):
        tmp, _ = run_dir
        reports = tmp / "runs" / "seed9" / "reports"
        rel = (reports / "reliability.csv").read_text().splitlines()
        assert rel[0] == "model,lead,level,coverage"
        assert len(rel) == 1 + 2 * 2 * 3  # models x leads x levels
        sharp = (reports / "sharpness.csv").read_text().splitlines()
        assert sharp[0] == "model,lead,central_coverage,mean_width"

    def test_plots_written_per_lead(self, run_dir):
        tmp, _ = run_dir
        reports = tmp / "runs" / "seed9" / "reports"
        for lead in (1, 2):
            for stem in ("reliability", "sharpness", "fan"):
                svg = reports / f"{stem}_lead{lead}.svg"
                assert svg.is_file() and svg.stat().st_size > 0

    def test_summary_sorted_by_crps_within_lead(self, run_dir):
        tmp, _ = run_dir
        lines = (tmp / "runs" / "seed9" / "summary.csv").read_text().splitlines()
        assert lines[0] == "lead,model,crps_pct,n_samples"
        rows = [line.split(",") for line in lines[1:]]
        for lead in ("1", "2"):
            scores = [float(r[2]) for r in rows if r[0] == lead]
            assert scores == sorted(scores)

    def test_rerun_byte_identical_reports(self, run_dir):
        tmp, cfg_path = run_dir
        reports = tmp / "runs" / "seed9" / "reports"
        before = read_tree(reports)
        assert main(["evaluate", "--config", cfg_path]) == 0
        assert read_tree(reports) == before

    def test_missing_artifact_named(self, run_dir, capsys):
        tmp, cfg_path = run_dir
        target = tmp / "runs" / "seed9" / "models" / "aqr_lead2.model"
        payload = target.read_bytes()
        try:
            target.unlink()
            assert main(["evaluate", "--config", cfg_path]) == 1
            err = json.loads(capsys.readouterr().err.strip())
            assert err["error"] == "ArtifactError"
            assert "aqr_lead2.model" in err["message"]
        finally:
            target.write_bytes(payload)

    def test_fan_chart_receives_window(self, run_dir, monkeypatch):
        tmp, cfg_path = run_dir
        seen = []
        monkeypatch.setattr(
            "aqrforecast.experiment.plots.fan_chart",
            lambda hours, targets, q, levels, path, **kw: seen.append(len(hours)),
        )
        assert main(["evaluate", "--config", cfg_path]) == 0
        assert seen == [24, 24]  # fan_window from config, one chart per lead


class TestRunCommand:
    def test_seed_override_disjoint_dirs(self, tmp_path):
        cfg_path = write_config(tmp_path, tiny_config(tmp_path / "runs"))
        assert main(["run", "--config", cfg_path, "--seed", "21"]) == 0
        assert main(["run", "--config", cfg_path, "--seed", "22"]) == 0
        d21 = tmp_path / "runs" / "seed21"
        d22 = tmp_path / "runs" / "seed22"
        assert d21.is_dir() and d22.is_dir()
        assert not (tmp_path / "runs" / "seed9").exists()
        # different seeds, different data
        assert (d21 / "data" / "observed.csv").read_bytes() != (
            d22 / "data" / "observed.csv"
        ).read_bytes()

    def test_manifest_links_config_hash(self, tmp_path):
        cfg = tiny_config(tmp_path / "runs")
        cfg_path = write_config(tmp_path, cfg)
        assert main(["run", "--config", cfg_path]) == 0
        manifest = json.loads(
            (tmp_path / "runs" / "seed9" / "manifest.json").read_text()
        )
        assert manifest["config_hash"] == config_from_dict(cfg).config_hash()
        assert manifest["stages"] == ["simulate", "train", "evaluate"]

    def test_error_line_is_machine_readable(self, tmp_path, capsys):
        cfg = tiny_config(tmp_path / "runs")
        del cfg["seed"]
        cfg_path = write_config(tmp_path, cfg)
        assert main(["run", "--config", cfg_path]) == 1
        err_lines = capsys.readouterr().err.strip().splitlines()
        parsed = json.loads(err_lines[-1])
        assert parsed["error"] == "ConfigError"
        assert "seed" in parsed["message"]

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "nope.json")]) == 1
        parsed = json.loads(capsys.readouterr().err.strip())
        assert parsed["error"] == "ConfigError"
