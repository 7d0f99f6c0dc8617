"""Experiment orchestration behind the CLI.

A single JSON config plus one integer seed fully determines a run. Every
consumer of randomness gets its own generator seeded from
sha256(seed, purpose, ...), so adding or removing one model never shifts
the random stream of another, and a rerun writes byte-identical outputs.

Run directory layout (``<out_dir>/seed<seed>/``):

    data/      truth.csv, observed.csv, manifest.json
    models/    <kind>_lead<k>.model, <kind>_lead<k>_train.json, manifest.json
    reports/   crps.csv, reliability.csv, sharpness.csv, eval_report.txt,
               reliability_lead<k>.svg, sharpness_lead<k>.svg,
               fan_lead<k>.svg, manifest.json
    manifest.json, summary.csv          (written by the `run` command)
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import baselines, plots
from .artifacts import MODEL_KINDS, load_model, save_climatology, save_network
from .errors import AqrError, ConfigError, EvaluationError, TrainingError
from .evaluation import EvalReport, artifact_forecasts, evaluate
from .missingness import mask_blocks, mask_selfmask, mask_sporadic
from .model import ModelHyper, validate_levels
from .pipeline import (
    ArSpec,
    ObservedSeries,
    SplitSpec,
    build_samples,
    chronological_split,
    generate_synthetic,
    ingest_csv,
    write_csv,
)
from .training import TrainConfig, train

__all__ = [
    "TOOL_VERSION",
    "ExperimentConfig",
    "load_config",
    "config_from_dict",
    "derive_seed",
    "cmd_simulate",
    "cmd_train",
    "cmd_evaluate",
    "cmd_run",
]

TOOL_VERSION = "0.1.0"

DEFAULT_LEVELS = tuple(round(0.05 * i, 2) for i in range(1, 20))

_MECHANISM_PARAMS = {
    "sporadic": {"p": 0.2},
    "blocks": {"n_blocks": 300, "len_min": 5, "len_max": 30},
    "selfmask": {"threshold": 0.87},
}

_DEFAULT_DATA = {
    "source": "synthetic",
    "n": 20000,
    "ar": {"rho": 0.98, "sigma": 0.15, "s0": 0.0},
}

_DEFAULT_NETWORK = {"hidden": 64, "feature_layers": 3, "head_layers": 2}

_DEFAULT_TRAIN = {
    "lr": 1e-3,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "batch_size": 256,
    "max_epochs": 200,
    "patience": 20,
    "weight_decay": 0.0,
    "lr_decay": 1.0,
}

_DEFAULT_EVAL = {
    "central_levels": [round(0.1 * i, 1) for i in range(1, 10)],
    "fan_window": 144,
}


def derive_seed(root_seed: int, *parts) -> int:
    """Independent child seed for one named purpose, stable across runs."""
    text = ":".join(str(p) for p in (int(root_seed),) + parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


def _merged(defaults: dict, given: dict, where: str) -> dict:
    for key in given:
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in config section {where!r}")
    out = dict(defaults)
    out.update(given)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    out_dir: Path
    case: str
    data: dict
    mechanism: dict
    h: int
    leads: tuple[int, ...]
    levels: tuple[float, ...]
    models: tuple[str, ...]
    split: SplitSpec
    network: dict
    train: dict
    central_levels: tuple[float, ...]
    fan_window: int
    normalized: dict  # full config with defaults filled in, for manifests

    @property
    def run_dir(self) -> Path:
        return self.out_dir / f"seed{self.seed}"

    def config_hash(self) -> str:
        payload = {k: v for k, v in self.normalized.items() if k != "out_dir"}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def hyper_for(self, kind: str, lead: int) -> ModelHyper:
        return ModelHyper(
            n_lags=self.h,
            hidden=int(self.network["hidden"]),
            feature_layers=int(self.network["feature_layers"]),
            head_layers=int(self.network["head_layers"]),
            levels=self.levels,
            lead=lead,
            init_seed=derive_seed(self.seed, kind, lead, "init"),
        )

    def train_config_for(self, kind: str, lead: int) -> TrainConfig:
        return TrainConfig(
            seed=derive_seed(self.seed, kind, lead, "shuffle"), **self.train
        )


def config_from_dict(raw: dict, out_override=None, seed_override=None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {
        "seed", "out_dir", "case", "data", "mechanism", "h", "leads",
        "levels", "models", "split", "network", "train", "eval",
    }
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown top-level config key {key!r}")

    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise ConfigError("config must set an explicit integer `seed`")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {seed!r}")

    out_dir = Path(out_override if out_override is not None else raw.get("out_dir", "runs"))

    mech_raw = raw.get("mechanism", {})
    kind = mech_raw.get("kind", "sporadic")
    if kind not in _MECHANISM_PARAMS:
        raise ConfigError(
            f"unknown mechanism kind {kind!r}, expected one of {sorted(_MECHANISM_PARAMS)}"
        )
    mechanism = {"kind": kind}
    mechanism.update(
        _merged(
            _MECHANISM_PARAMS[kind],
            {k: v for k, v in mech_raw.items() if k != "kind"},
            f"mechanism[{kind}]",
        )
    )

    data_raw = raw.get("data", {})
    source = data_raw.get("source", "synthetic")
    if source == "synthetic":
        data = {"source": "synthetic", "n": int(data_raw.get("n", _DEFAULT_DATA["n"]))}
        data["ar"] = _merged(_DEFAULT_DATA["ar"], data_raw.get("ar", {}), "data.ar")
        extra = set(data_raw) - {"source", "n", "ar"}
        if data["n"] < 2:
            raise ConfigError("synthetic data length must be >= 2")
    elif source == "csv":
        if "path" not in data_raw:
            raise ConfigError("csv data source requires a `path`")
        data = {
            "source": "csv",
            "path": str(data_raw["path"]),
            "capacity": float(data_raw.get("capacity", 1.0)),
        }
        extra = set(data_raw) - {"source", "path", "capacity"}
    else:
        raise ConfigError(f"unknown data source {source!r}, expected synthetic or csv")
    if extra:
        raise ConfigError(f"unknown key {sorted(extra)[0]!r} in config section 'data'")

    h = int(raw.get("h", 6))
    if h < 1:
        raise ConfigError("h (number of lags) must be >= 1")
    leads = tuple(int(k) for k in raw.get("leads", [1, 2, 3]))
    if not leads or any(k < 1 for k in leads) or len(set(leads)) != len(leads):
        raise ConfigError("leads must be a nonempty list of distinct positive integers")

    levels = validate_levels(raw.get("levels", DEFAULT_LEVELS))

    models = tuple(raw.get("models", list(MODEL_KINDS)))
    if not models or len(set(models)) != len(models):
        raise ConfigError("models must be a nonempty list without duplicates")
    for kind_ in models:
        if kind_ not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {kind_!r}, expected one of {MODEL_KINDS}")

    split_raw = _merged({"train": 0.7, "val": 0.1, "test": 0.2}, raw.get("split", {}), "split")
    split = SplitSpec(
        train_frac=float(split_raw["train"]),
        val_frac=float(split_raw["val"]),
        test_frac=float(split_raw["test"]),
    )

    network = _merged(_DEFAULT_NETWORK, raw.get("network", {}), "network")
    train_cfg = _merged(_DEFAULT_TRAIN, raw.get("train", {}), "train")
    TrainConfig(seed=0, **train_cfg)  # validate eagerly, at parse time

    eval_cfg = _merged(_DEFAULT_EVAL, raw.get("eval", {}), "eval")
    central = tuple(float(b) for b in eval_cfg["central_levels"])
    fan_window = int(eval_cfg["fan_window"])
    if fan_window < 1:
        raise ConfigError("eval.fan_window must be >= 1")

    case = str(raw.get("case", kind))

    normalized = {
        "seed": seed,
        "out_dir": str(out_dir),
        "case": case,
        "data": data,
        "mechanism": mechanism,
        "h": h,
        "leads": list(leads),
        "levels": [float(a) for a in levels],
        "models": list(models),
        "split": {k: float(split_raw[k]) for k in ("train", "val", "test")},
        "network": {k: int(network[k]) for k in network},
        "train": train_cfg,
        "eval": {"central_levels": list(central), "fan_window": fan_window},
    }
    return ExperimentConfig(
        seed=seed,
        out_dir=out_dir,
        case=case,
        data=data,
        mechanism=mechanism,
        h=h,
        leads=leads,
        levels=levels,
        models=models,
        split=split,
        network=normalized["network"],
        train=train_cfg,
        central_levels=central,
        fan_window=fan_window,
        normalized=normalized,
    )


def load_config(path, out_override=None, seed_override=None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw, out_override=out_override, seed_override=seed_override)


# ---------------------------------------------------------------------------
# shared stage helpers


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_table(path: Path, header: list[str], rows: list[list[str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)] + [",".join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _fmt(x: float) -> str:
    return repr(float(x))


def _stage_manifest(cfg: ExperimentConfig, stage: str, extra: dict) -> dict:
    out = {
        "stage": stage,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "tool_version": TOOL_VERSION,
        "config": cfg.normalized,
    }
    out.update(extra)
    return out


def _source_series(cfg: ExperimentConfig) -> ObservedSeries:
    if cfg.data["source"] == "synthetic":
        return generate_synthetic(
            cfg.data["n"], derive_seed(cfg.seed, "source"), ArSpec(**cfg.data["ar"])
        )
    return ingest_csv(cfg.data["path"], cfg.data["capacity"])


def _apply_mechanism(cfg: ExperimentConfig, series: ObservedSeries):
    mech = cfg.mechanism
    if mech["kind"] == "sporadic":
        return mask_sporadic(series, p=mech["p"], seed=derive_seed(cfg.seed, "mask"))
    if mech["kind"] == "blocks":
        return mask_blocks(
            series,
            n_blocks=mech["n_blocks"],
            len_min=mech["len_min"],
            len_max=mech["len_max"],
            seed=derive_seed(cfg.seed, "mask"),
        )
    return mask_selfmask(series, threshold=mech["threshold"])


def _load_stage_series(cfg: ExperimentConfig, name: str) -> ObservedSeries:
    path = cfg.run_dir / "data" / f"{name}.csv"
    if not path.is_file():
        raise ConfigError(f"missing {path}; run the simulate stage first")
    return ingest_csv(path, capacity=1.0)


_MODEL_NOTES = {
    "aqr": ("adaptive quantile regression on raw observations with masks",),
    "im-qr-locf": ("features imputed with locf_nocb before training and scoring",),
    "im-qr-mean": ("features imputed with mean before training and scoring",),
    "r-qr": ("reference model trained on the complete ground truth",),
    "climatology": ("unconditional empirical quantiles of training targets",),
}


# ---------------------------------------------------------------------------
# stage commands


def cmd_simulate(cfg: ExperimentConfig) -> Path:
    """Generate (or load) a complete series, mask it, persist both versions."""
    data_dir = cfg.run_dir / "data"
    series = _source_series(cfg)
    if not series.is_complete:
        raise ConfigError(
            "simulate needs a complete source series; the input already has NAs"
        )
    pair = _apply_mechanism(cfg, series)
    data_dir.mkdir(parents=True, exist_ok=True)
    write_csv(pair.truth, data_dir / "truth.csv")
    write_csv(pair.observed, data_dir / "observed.csv")
    _write_json(
        data_dir / "manifest.json",
        _stage_manifest(
            cfg,
            "simulate",
            {
                "mechanism": cfg.mechanism,
                "n": len(pair.truth),
                "missing_fraction": pair.observed.missing_fraction,
                "files": ["observed.csv", "truth.csv"],
            },
        ),
    )
    return data_dir


def _artifact_path(cfg: ExperimentConfig, kind: str, lead: int) -> Path:
    return cfg.run_dir / "models" / f"{kind}_lead{lead}.model"


def _train_one(cfg: ExperimentConfig, kind: str, lead: int, observed, truth) -> dict:
    hyper = cfg.hyper_for(kind, lead)
    tcfg = cfg.train_config_for(kind, lead)
    path = _artifact_path(cfg, kind, lead)

    if kind == "climatology":
        batch = build_samples(observed, h=cfg.h, k=lead)
        train_b, _val_b, _test_b = chronological_split(batch, cfg.split)
        model = baselines.climatology_fit(train_b)
        save_climatology(path, cfg.levels, model.train_values)
        return {"kind": kind, "lead": lead, "n_pool": int(model.train_values.size)}

    if kind == "aqr":
        batch = build_samples(observed, h=cfg.h, k=lead)
        train_b, val_b, _test_b = chronological_split(batch, cfg.split)
        params, report = train(train_b, val_b, hyper, tcfg)
        save_network(path, kind, params)
    elif kind in ("im-qr-locf", "im-qr-mean"):
        method = "locf_nocb" if kind.endswith("locf") else "mean"
        filled = baselines.impute(observed, method)
        batch = build_samples(filled, h=cfg.h, k=lead)
        train_b, val_b, _test_b = chronological_split(batch, cfg.split)
        params, report = train(train_b, val_b, hyper, tcfg)
        save_network(path, kind, params)
    elif kind == "r-qr":
        batch = build_samples(truth, h=cfg.h, k=lead)
        train_b, val_b, _test_b = chronological_split(batch, cfg.split)
        params, report = train(train_b, val_b, hyper, tcfg)
        save_network(path, kind, params)
    else:  # pragma: no cover - guarded at config parse time
        raise ConfigError(f"unknown model kind {kind!r}")
    return {
        "kind": kind,
        "lead": lead,
        "epochs_run": report.epochs_run,
        "best_epoch": report.best_epoch,
        "best_val_loss": report.best_val_loss,
        "stopped_early": report.stopped_early,
        "train_losses": report.train_losses,
        "val_losses": report.val_losses,
    }


def cmd_train(cfg: ExperimentConfig) -> dict:
    """Fit every configured (model, lead) job; isolate per-job failures."""
    models_dir = cfg.run_dir / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    observed = _load_stage_series(cfg, "observed")
    truth = _load_stage_series(cfg, "truth") if "r-qr" in cfg.models else None

    artifacts_done: dict[str, str] = {}
    failures: dict[str, str] = {}
    for lead in cfg.leads:
        for kind in cfg.models:
            job = f"{kind}_lead{lead}"
            try:
                info = _train_one(cfg, kind, lead, observed, truth)
                _write_json(models_dir / f"{job}_train.json", info)
                artifacts_done[job] = f"{job}.model"
            except AqrError as exc:
                failures[job] = str(exc)
                _write_json(models_dir / f"{job}_train.json", {"error": str(exc)})
    _write_json(
        models_dir / "manifest.json",
        _stage_manifest(
            cfg, "train", {"artifacts": artifacts_done, "failures": failures}
        ),
    )
    if not artifacts_done:
        raise TrainingError(f"every training job failed: {failures}")
    return {"artifacts": artifacts_done, "failures": failures}


def _aligned_test_batches(cfg: ExperimentConfig, lead: int, observed, truth, imputed):
    """Per-kind test batches sharing origins and (non-NA) targets.

    Scoring origins are those test samples whose observed target exists;
    at such origins the observed, imputed and true targets all coincide,
    so every model answers the same question on the same points.
    """
    obs_b = build_samples(observed, h=cfg.h, k=lead)
    _, _, test_obs = chronological_split(obs_b, cfg.split)
    keep = np.flatnonzero(~np.isnan(test_obs.targets))
    if keep.size == 0:
        raise EvaluationError(
            f"lead {lead}: every test target is missing; nothing to score"
        )
    ref = test_obs.subset(keep)
    batches = {}
    for kind in cfg.models:
        if kind in ("aqr", "climatology"):
            batches[kind] = ref
            continue
        source = truth if kind == "r-qr" else imputed[kind]
        b = build_samples(source, h=cfg.h, k=lead)
        _, _, test_b = chronological_split(b, cfg.split)
        sub = test_b.subset(keep)
        if not np.array_equal(sub.origin_times, ref.origin_times) or not np.array_equal(
            sub.targets, ref.targets
        ):
            raise EvaluationError(
                f"{kind} test batch is misaligned with the observed test batch"
            )
        batches[kind] = sub
    return batches


def cmd_evaluate(cfg: ExperimentConfig) -> list[EvalReport]:
    """Score all trained models on aligned test sets; write reports and plots."""
    reports_dir = cfg.run_dir / "reports"
    observed = _load_stage_series(cfg, "observed")
    truth = _load_stage_series(cfg, "truth") if "r-qr" in cfg.models else None
    imputed = {
        kind: baselines.impute(observed, "locf_nocb" if kind.endswith("locf") else "mean")
        for kind in cfg.models
        if kind.startswith("im-qr")
    }

    reports: list[EvalReport] = []
    crps_rows, rel_rows, sharp_rows = [], [], []
    for lead in cfg.leads:
        batches = _aligned_test_batches(cfg, lead, observed, truth, imputed)
        curves, widths = {}, {}
        fan_done = False
        for kind in cfg.models:
            artifact = load_model(_artifact_path(cfg, kind, lead))
            if artifact.kind != kind:
                raise EvaluationError(
                    f"artifact for {kind} actually holds a {artifact.kind} model"
                )
            rep = evaluate(
                artifact,
                batches[kind],
                case=cfg.case,
                seed=cfg.seed,
                central_levels=cfg.central_levels,
                notes=_MODEL_NOTES.get(kind, ()),
            )
            reports.append(rep)
            curves[kind] = (rep.levels, rep.coverage)
            widths[kind] = (rep.central_levels, rep.mean_widths)
            crps_rows.append(
                [kind, str(lead), cfg.case, str(cfg.seed), str(rep.n_samples), _fmt(rep.crps_pct)]
            )
            rel_rows += [
                [kind, str(lead), _fmt(a), _fmt(c)]
                for a, c in zip(rep.levels, rep.coverage)
            ]
            sharp_rows += [
                [kind, str(lead), _fmt(b), _fmt(w)]
                for b, w in zip(rep.central_levels, rep.mean_widths)
            ]
            if not fan_done:
                batch = batches[kind]
                window = min(cfg.fan_window, len(batch))
                win = batch.subset(np.arange(window))
                q, levels = artifact_forecasts(artifact, win)
                hours = (win.origin_times - win.origin_times[0]) / 3600.0 + lead
                # shade the widest configured interval plus the most central one
                bands = [max(cfg.central_levels)]
                mid = min(cfg.central_levels, key=lambda b: abs(b - 0.5))
                if mid not in bands:
                    bands.append(mid)
                plots.fan_chart(
                    hours,
                    win.targets,
                    q,
                    levels,
                    reports_dir / f"fan_lead{lead}.svg",
                    bands=tuple(bands),
                )
                fan_done = True
        plots.reliability_diagram(curves, reports_dir / f"reliability_lead{lead}.svg")
        plots.sharpness_bars(widths, reports_dir / f"sharpness_lead{lead}.svg")

    _write_table(
        reports_dir / "crps.csv",
        ["model", "lead", "case", "seed", "n_samples", "crps_pct"],
        crps_rows,
    )
    _write_table(
        reports_dir / "reliability.csv", ["model", "lead", "level", "coverage"], rel_rows
    )
    _write_table(
        reports_dir / "sharpness.csv",
        ["model", "lead", "central_coverage", "mean_width"],
        sharp_rows,
    )
    _write_eval_text(reports_dir / "eval_report.txt", reports)
    _write_json(
        reports_dir / "manifest.json",
        _stage_manifest(
            cfg,
            "evaluate",
            {"files": sorted(p.name for p in reports_dir.iterdir() if p.suffix != ".json")},
        ),
    )
    return reports


def _write_eval_text(path: Path, reports: list[EvalReport]) -> None:
    blocks = []
    for rep in reports:
        lines = [
            f"model: {rep.model_kind}",
            f"case: {rep.case}",
            f"lead: {rep.lead}",
            f"seed: {rep.seed}",
            f"n_samples: {rep.n_samples}",
            f"crps_pct: {_fmt(rep.crps_pct)}",
            "levels: " + " ".join(_fmt(a) for a in rep.levels),
            "coverage: " + " ".join(_fmt(c) for c in rep.coverage),
            "central_levels: " + " ".join(_fmt(b) for b in rep.central_levels),
            "mean_widths: " + " ".join(_fmt(w) for w in rep.mean_widths),
        ]
        lines += [f"note: {note}" for note in rep.notes]
        blocks.append("\n".join(lines))
    path.write_text("\n\n".join(blocks) + "\n")


def cmd_run(cfg: ExperimentConfig) -> Path:
    """simulate -> train -> evaluate -> summary, failing fast between stages."""
    cmd_simulate(cfg)
    train_out = cmd_train(cfg)
    reports = cmd_evaluate(cfg)

    order = sorted(reports, key=lambda r: (r.lead, r.crps_pct, r.model_kind))
    _write_table(
        cfg.run_dir / "summary.csv",
        ["lead", "model", "crps_pct", "n_samples"],
        [
            [str(r.lead), r.model_kind, _fmt(r.crps_pct), str(r.n_samples)]
            for r in order
        ],
    )
    _write_json(
        cfg.run_dir / "manifest.json",
        _stage_manifest(
            cfg,
            "run",
            {
                "stages": ["simulate", "train", "evaluate"],
                "artifacts": train_out["artifacts"],
                "failures": train_out["failures"],
            },
        ),
    )
    return cfg.run_dir
