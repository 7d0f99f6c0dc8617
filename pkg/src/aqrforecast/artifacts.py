"""Deterministic binary container for trained models.

Layout (all integers little-endian):

    bytes 0..3    magic  b"AQRM"
    bytes 4..7    format version (u32)
    bytes 8..11   header length in bytes (u32)
    header        canonical JSON (utf-8, sorted keys, no whitespace)
    payload       tensors as raw C-order float64, concatenated in the
                  order listed under header["tensors"]

The header records the model kind, its hyperparameters and the tensor
manifest (name, shape). Writing the same model twice produces identical
bytes: the container embeds no timestamps or environment detail, which
is what lets a rerun of the same seed reproduce artifacts exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArtifactError
from .model import AqrParams, ModelHyper

__all__ = [
    "NETWORK_KINDS",
    "MODEL_KINDS",
    "LoadedArtifact",
    "save_network",
    "save_climatology",
    "load_model",
]

_MAGIC = b"AQRM"
_VERSION = 1

NETWORK_KINDS = ("aqr", "im-qr-locf", "im-qr-mean", "r-qr")
MODEL_KINDS = NETWORK_KINDS + ("climatology",)


@dataclass(frozen=True)
class LoadedArtifact:
    kind: str
    params: AqrParams | None = None  # network kinds
    levels: tuple[float, ...] | None = None  # climatology
    train_values: np.ndarray | None = None  # climatology, sorted


def _write(path, header: dict, tensors: list[tuple[str, np.ndarray]]) -> None:
    header = dict(header)
    header["tensors"] = [
        {"name": name, "shape": list(arr.shape)} for name, arr in tensors
    ]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(_VERSION).tobytes())
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        for _name, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def save_network(path, kind: str, params: AqrParams) -> None:
    if kind not in NETWORK_KINDS:
        raise ArtifactError(f"unknown network kind {kind!r}, expected one of {NETWORK_KINDS}")
    hp = params.hyper
    header = {
        "format": "aqrforecast-model",
        "kind": kind,
        "hyper": {
            "n_lags": hp.n_lags,
            "hidden": hp.hidden,
            "feature_layers": hp.feature_layers,
            "head_layers": hp.head_layers,
            "levels": list(hp.levels),
            "lead": hp.lead,
            "init_seed": hp.init_seed,
        },
    }
    _write(path, header, params.named_arrays())


def save_climatology(path, levels, train_values: np.ndarray) -> None:
    values = np.sort(np.asarray(train_values, dtype=np.float64))
    if values.size == 0 or np.any(np.isnan(values)):
        raise ArtifactError("climatology artifact needs a nonempty, NA-free value pool")
    header = {
        "format": "aqrforecast-model",
        "kind": "climatology",
        "levels": [float(a) for a in levels],
    }
    _write(path, header, [("train_values", values)])


def _read_exact(fh, count: int, what: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise ArtifactError(f"truncated artifact: short read while loading {what}")
    return buf


def load_model(path) -> LoadedArtifact:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"no model artifact at {path}")
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != _MAGIC:
            raise ArtifactError(f"{path} is not a model artifact (bad magic)")
        version = int(np.frombuffer(_read_exact(fh, 4, "version"), "<u4")[0])
        if version != _VERSION:
            raise ArtifactError(f"unsupported artifact version {version}")
        hlen = int(np.frombuffer(_read_exact(fh, 4, "header length"), "<u4")[0])
        try:
            header = json.loads(_read_exact(fh, hlen, "header"))
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"corrupt artifact header in {path}: {exc}") from exc
        kind = header.get("kind")
        if kind not in MODEL_KINDS:
            raise ArtifactError(f"unknown model kind {kind!r} in {path}")
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(int(s) for s in entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, 8 * n, f"tensor {entry['name']}")
            tensors[entry["name"]] = np.frombuffer(raw, "<f8").reshape(shape).copy()
        if fh.read(1):
            raise ArtifactError(f"trailing bytes after payload in {path}")

    if kind == "climatology":
        if "train_values" not in tensors:
            raise ArtifactError("climatology artifact is missing its value pool")
        return LoadedArtifact(
            kind=kind,
            levels=tuple(float(a) for a in header["levels"]),
            train_values=tensors["train_values"],
        )

    try:
        h = header["hyper"]
        hyper = ModelHyper(
            n_lags=int(h["n_lags"]),
            hidden=int(h["hidden"]),
            feature_layers=int(h["feature_layers"]),
            head_layers=int(h["head_layers"]),
            levels=tuple(float(a) for a in h["levels"]),
            lead=int(h["lead"]),
            init_seed=int(h["init_seed"]),
        )
        params = AqrParams(
            hyper=hyper,
            feature_weights=tensors["feature_weights"],
            adaptive_bias=tensors["adaptive_bias"],
            head_weights=[
                tensors[f"head_weights_{l}"] for l in range(hyper.head_layers)
            ],
            head_biases=[tensors[f"head_biases_{l}"] for l in range(hyper.head_layers)],
            out_coeffs=tensors["out_coeffs"],
        )
    except KeyError as exc:
        raise ArtifactError(f"artifact {path} is missing field {exc}") from exc
    return LoadedArtifact(kind=kind, params=params)
