"""Model library: prediction matrices, model metadata, manifest I/O, pruning.

A library is a set of models that were already trained elsewhere; each model
carries a class-probability matrix over a shared validation set plus the
metadata (cost, memory, metric) that selection and allocation operate on.

On-disk layout:
  - manifest: single JSON document
      {"labels": [..], "models": [{"id", "cost", "weight_bytes",
       "activation_bytes_per_image", "validation_metric",
       "predictions_path", "hyperparameters": {..}}]}
  - one prediction file per model: first line header ``n_samples,n_classes``,
    then n_samples comma-separated rows of decimal floats.
Relative prediction paths are resolved against the manifest's directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyLibrary, InvalidProbability, IoError, MissingFile, SchemaError

# Row sums within this tolerance of 1 are silently renormalized; beyond it the
# file is considered corrupt. Individual values may stray from [0,1] by at
# most VALUE_TOLERANCE (float-printing loss), and are clipped.
ROW_SUM_TOLERANCE = 1e-4
VALUE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ModelRecord:
    """One trained model: metadata plus its validation prediction matrix.

    ``cost`` is in seconds per reference workload (time to predict the
    reference image count on one reference device); ``validation_metric`` is
    higher-is-better, so error-style metrics must be negated at ingestion.
    """

    id: str
    cost: float
    weight_bytes: float
    activation_bytes_per_image: float
    validation_metric: float
    predictions: np.ndarray = field(repr=False, compare=False)
    hyperparameters: dict = field(default_factory=dict)


@dataclass
class ModelLibrary:
    models: list[ModelRecord]
    labels: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.models[0].predictions.shape[1])

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.models]

    def get(self, model_id: str) -> ModelRecord:
        for m in self.models:
            if m.id == model_id:
                return m
        from .errors import UnknownModelId

        raise UnknownModelId(f"model id not in library: {model_id!r}")


def validate_prediction_matrix(values: np.ndarray, *, context: str = "") -> np.ndarray:
    """Check matrix invariants and return the renormalized copy.

    Values may stray from [0,1] by at most VALUE_TOLERANCE and row sums from 1
    by at most ROW_SUM_TOLERANCE; anything worse raises InvalidProbability.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise SchemaError(f"prediction matrix must be 2-D{context}")
    n_samples, n_classes = values.shape
    if n_samples < 1 or n_classes < 2:
        raise SchemaError(
            f"need n_samples >= 1 and n_classes >= 2, got {values.shape}{context}"
        )
    if np.any(values < -VALUE_TOLERANCE) or np.any(values > 1.0 + VALUE_TOLERANCE):
        raise InvalidProbability(f"value outside [0,1]{context}")
    values = np.clip(values, 0.0, 1.0)
    sums = values.sum(axis=1)
    bad = np.abs(sums - 1.0) > ROW_SUM_TOLERANCE
    if np.any(bad):
        row = int(np.argmax(bad))
        raise InvalidProbability(
            f"row {row} sums to {sums[row]:.6f}, beyond tolerance {ROW_SUM_TOLERANCE}{context}"
        )
    out = values / sums[:, None]
    out.flags.writeable = False  # libraries are shared read-only across workers
    return out


def validate_labels(labels, n_samples: int, n_classes: int) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1 or arr.shape[0] != n_samples:
        raise SchemaError(
            f"labels must be a vector of length {n_samples}, got shape {arr.shape}"
        )
    if not np.issubdtype(arr.dtype, np.integer):
        if np.issubdtype(arr.dtype, np.floating) and np.all(arr == arr.astype(np.int64)):
            arr = arr.astype(np.int64)
        else:
            raise SchemaError("labels must be integers")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
        raise SchemaError(f"label out of range [0, {n_classes})")
    arr.flags.writeable = False
    return arr


def read_prediction_file(path: Path) -> np.ndarray:
    """Parse the header+rows CSV prediction format (unvalidated values)."""
    if not path.exists():
        raise MissingFile(f"prediction file not found: {path}")
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise SchemaError(f"empty prediction file: {path}")
    header = lines[0].split(",")
    if len(header) != 2:
        raise SchemaError(f"bad header in {path}: {lines[0]!r}")
    try:
        n_samples, n_classes = int(header[0]), int(header[1])
    except ValueError as exc:
        raise SchemaError(f"bad header in {path}: {lines[0]!r}") from exc
    rows = lines[1:]
    if len(rows) != n_samples:
        raise SchemaError(f"{path}: expected {n_samples} rows, found {len(rows)}")
    out = np.empty((n_samples, n_classes), dtype=np.float64)
    for i, row in enumerate(rows):
        parts = row.split(",")
        if len(parts) != n_classes:
            raise SchemaError(f"{path}: row {i} has {len(parts)} values, expected {n_classes}")
        try:
            out[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise SchemaError(f"{path}: row {i} is not numeric") from exc
    return out


def _require(record: dict, key: str, kinds, model_idx: int):
    if key not in record:
        raise SchemaError(f"model #{model_idx}: missing field {key!r}")
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise SchemaError(f"model #{model_idx}: field {key!r} has wrong type")
    return value


def load_library(manifest_path: str | Path) -> ModelLibrary:
    """Load and validate a library from its manifest.

    Rows whose sum deviates from 1 by at most ROW_SUM_TOLERANCE are
    renormalized; worse deviations raise InvalidProbability.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFile(f"manifest not found: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "labels" not in doc or "models" not in doc:
        raise SchemaError("manifest must be an object with 'labels' and 'models'")
    raw_models = doc["models"]
    if not isinstance(raw_models, list):
        raise SchemaError("'models' must be a list")
    if not raw_models:
        raise EmptyLibrary(f"manifest lists no models: {manifest_path}")

    base = manifest_path.parent
    models: list[ModelRecord] = []
    seen: set[str] = set()
    shape: tuple[int, int] | None = None
    for idx, rec in enumerate(raw_models):
        if not isinstance(rec, dict):
            raise SchemaError(f"model #{idx} is not an object")
        model_id = _require(rec, "id", str, idx)
        if not model_id:
            raise SchemaError(f"model #{idx}: empty id")
        if model_id in seen:
            raise SchemaError(f"duplicate model id: {model_id!r}")
        seen.add(model_id)
        cost = float(_require(rec, "cost", (int, float), idx))
        weight = float(_require(rec, "weight_bytes", (int, float), idx))
        act = float(_require(rec, "activation_bytes_per_image", (int, float), idx))
        metric = float(_require(rec, "validation_metric", (int, float), idx))
        pred_path = Path(_require(rec, "predictions_path", str, idx))
        hyper = rec.get("hyperparameters", {})
        if not isinstance(hyper, dict):
            raise SchemaError(f"model {model_id!r}: hyperparameters must be an object")
        if cost <= 0:
            raise SchemaError(f"model {model_id!r}: cost must be > 0")
        if weight <= 0:
            raise SchemaError(f"model {model_id!r}: weight_bytes must be > 0")
        if act < 0:
            raise SchemaError(f"model {model_id!r}: activation_bytes_per_image must be >= 0")
        if not pred_path.is_absolute():
            pred_path = base / pred_path
        raw = read_prediction_file(pred_path)
        preds = validate_prediction_matrix(raw, context=f" (model {model_id!r})")
        if shape is None:
            shape = preds.shape
        elif preds.shape != shape:
            raise SchemaError(
                f"model {model_id!r}: shape {preds.shape} differs from {shape}"
            )
        models.append(
            ModelRecord(
                id=model_id,
                cost=cost,
                weight_bytes=weight,
                activation_bytes_per_image=act,
                validation_metric=metric,
                predictions=preds,
                hyperparameters=hyper,
            )
        )

    labels = validate_labels(doc["labels"], shape[0], shape[1])
    return ModelLibrary(models=models, labels=labels)


def prune_library(lib: ModelLibrary, keep_fraction: float) -> ModelLibrary:
    """Keep the top ceil(keep_fraction * |L|) models by validation metric.

    The result is ordered by metric descending; ties keep their original
    relative order. Labels are shared, not copied.
    """
    if not lib.models:
        raise EmptyLibrary("cannot prune an empty library")
    if not (0.0 < keep_fraction <= 1.0):
        raise ValueError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    keep = math.ceil(keep_fraction * len(lib.models))
    ranked = sorted(lib.models, key=lambda m: -m.validation_metric)
    return ModelLibrary(models=ranked[:keep], labels=lib.labels)


def save_library(lib: ModelLibrary, out_dir: str | Path) -> Path:
    """Write manifest + prediction files; returns the manifest path.

    Round trip holds bit-for-bit on metadata and exactly on probabilities
    (floats are written in shortest round-trip form).
    """
    if not lib.models:
        raise EmptyLibrary("refusing to save an empty library")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc
    entries = []
    try:
        for idx, model in enumerate(lib.models):
            fname = f"predictions_{idx:03d}.csv"
            write_prediction_file(out_dir / fname, model.predictions)
            entries.append(
                {
                    "id": model.id,
                    "cost": model.cost,
                    "weight_bytes": model.weight_bytes,
                    "activation_bytes_per_image": model.activation_bytes_per_image,
                    "validation_metric": model.validation_metric,
                    "predictions_path": fname,
                    "hyperparameters": model.hyperparameters,
                }
            )
        manifest = out_dir / "manifest.json"
        manifest.write_text(
            json.dumps(
                {"labels": [int(x) for x in lib.labels], "models": entries},
                indent=2,
                sort_keys=True,
            )
        )
    except OSError as exc:
        raise IoError(f"cannot write library to {out_dir}: {exc}") from exc
    return manifest


def write_prediction_file(path: Path, values: np.ndarray) -> None:
    n_samples, n_classes = values.shape
    lines = [f"{n_samples},{n_classes}"]
    for row in values:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def libraries_equal(a: ModelLibrary, b: ModelLibrary, prob_tol: float = 1e-9) -> bool:
    """Metadata exactly equal and probabilities within prob_tol."""
    if len(a.models) != len(b.models) or not np.array_equal(a.labels, b.labels):
        return False
    for ma, mb in zip(a.models, b.models):
        if ma != mb:  # predictions excluded from dataclass comparison
            return False
        if ma.predictions.shape != mb.predictions.shape:
            return False
        if not np.allclose(ma.predictions, mb.predictions, rtol=0.0, atol=prob_tol):
            return False
    return True
