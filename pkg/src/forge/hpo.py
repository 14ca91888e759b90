"""Trial scheduling: asynchronous successive halving and random search.

The scheduler owns all trial state; workers are stateless evaluators that
pull ``(trial, target resource)`` jobs and report scores back. At desk scale
the worker pool is simulated in-process on a virtual clock (one epoch = one
time unit), which keeps runs reproducible for any worker count while
preserving the asynchronous structure: there is no barrier between rungs,
and a promotion can happen while other trials are still running.

Promotion rule: a trial that finished rung k is promotable when its score is
in the top ceil(m/eta) of the m rung-k scores recorded so far. Free workers
start fresh trials while any remain (so every sampled configuration reaches
the first rung and joins the model library), then serve promotions from the
highest rung down. Early-stopped trials are kept: they are library members,
not failures.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .errors import BadConfig
from .library import ModelLibrary, ModelRecord, save_library

DIMENSION_KINDS = ("continuous", "discrete", "categorical")


@dataclass(frozen=True)
class HyperparameterSpace:
    """Named dimensions; each continuous/discrete [lo, hi] or categorical."""

    dimensions: dict[str, dict]

    def __post_init__(self):
        if not self.dimensions:
            raise BadConfig("hyperparameter space has no dimensions")
        for name, dim in self.dimensions.items():
            kind = dim.get("type")
            if kind not in DIMENSION_KINDS:
                raise BadConfig(f"dimension {name!r}: unknown type {kind!r}")
            if kind == "categorical":
                values = dim.get("values")
                if not isinstance(values, list) or not values:
                    raise BadConfig(f"dimension {name!r}: categorical needs non-empty values")
            else:
                lo, hi = dim.get("low"), dim.get("high")
                if lo is None or hi is None or not lo < hi:
                    raise BadConfig(f"dimension {name!r}: need low < high")


def load_space(path: str | Path) -> HyperparameterSpace:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        from .errors import MissingFile

        raise MissingFile(f"space file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise BadConfig(f"space file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise BadConfig("space file must be a JSON object of dimensions")
    return HyperparameterSpace(dimensions=doc)


def sample(space: HyperparameterSpace, rng: random.Random) -> dict[str, Any]:
    """Uniform draw per dimension (real, integer, or choice)."""
    out: dict[str, Any] = {}
    for name, dim in space.dimensions.items():
        kind = dim["type"]
        if kind == "continuous":
            out[name] = rng.uniform(dim["low"], dim["high"])
        elif kind == "discrete":
            out[name] = rng.randint(int(dim["low"]), int(dim["high"]))
        else:
            out[name] = rng.choice(dim["values"])
    return out


@dataclass
class TrialRecord:
    id: int
    config: dict[str, Any]
    resource_used: int = 0
    latest_score: float | None = None
    rung: int = -1  # highest completed rung; -1 before the first report
    status: str = "running"  # running | stopped | completed


@dataclass(frozen=True)
class SchedulerConfig:
    eta: int = 3
    min_resource: int = 1
    max_resource: int = 9
    max_trials: int = 9
    seed: int = 0

    def __post_init__(self):
        if self.eta < 2:
            raise BadConfig(f"eta must be >= 2, got {self.eta}")
        if self.min_resource < 1:
            raise BadConfig("min_resource must be >= 1")
        if self.max_resource < self.min_resource:
            raise BadConfig("max_resource must be >= min_resource")
        if self.max_trials < 1:
            raise BadConfig("max_trials must be >= 1")

    def rung_resources(self) -> list[int]:
        """Resources r * eta**k for k = 0..K, with R rounded down to a power."""
        out = [self.min_resource]
        while out[-1] * self.eta <= self.max_resource:
            out.append(out[-1] * self.eta)
        return out


class _AshaScheduler:
    """Single-bracket asynchronous successive halving over one rung ladder."""

    def __init__(self, space: HyperparameterSpace, config: SchedulerConfig):
        self.config = config
        self.space = space
        self.rng = random.Random(config.seed)
        self.resources = config.rung_resources()
        self.top_rung = len(self.resources) - 1
        self.trials: list[TrialRecord] = []
        self.rung_scores: list[dict[int, float]] = [dict() for _ in self.resources]
        self.promoted: list[set[int]] = [set() for _ in self.resources]
        self.busy: set[int] = set()

    def next_job(self) -> tuple[TrialRecord, int] | None:
        if len(self.trials) < self.config.max_trials:
            trial = TrialRecord(id=len(self.trials), config=sample(self.space, self.rng))
            self.trials.append(trial)
            self.busy.add(trial.id)
            return trial, self.resources[0]
        for k in range(self.top_rung - 1, -1, -1):
            trial_id = self._promotable(k)
            if trial_id is not None:
                self.promoted[k].add(trial_id)
                self.busy.add(trial_id)
                return self.trials[trial_id], self.resources[k + 1]
        return None

    def _promotable(self, k: int) -> int | None:
        scores = self.rung_scores[k]
        if not scores:
            return None
        cutoff = math.ceil(len(scores) / self.config.eta)
        ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
        for trial_id, _ in ranked[:cutoff]:
            if trial_id not in self.promoted[k] and trial_id not in self.busy:
                return trial_id
        return None

    def report(self, trial_id: int, resource: int, score: float) -> None:
        trial = self.trials[trial_id]
        k = self.resources.index(resource)
        self.rung_scores[k][trial_id] = score
        trial.resource_used = resource
        trial.latest_score = score
        trial.rung = k
        self.busy.discard(trial_id)
        if k == self.top_rung:
            trial.status = "completed"

    def finalize(self) -> list[TrialRecord]:
        for trial in self.trials:
            if trial.status != "completed":
                trial.status = "stopped"
        return self.trials


def _run_pool(scheduler: _AshaScheduler, objective: Callable[[dict, int], float],
              n_workers: int) -> list[TrialRecord]:
    """Virtual-clock worker pool: job duration = epochs still to train."""
    clock = 0.0
    seq = 0
    running: list[tuple[float, int, int, int, int]] = []  # (finish, seq, worker, trial, resource)
    free = list(range(n_workers))
    while True:
        while free:
            job = scheduler.next_job()
            if job is None:
                break
            trial, resource = job
            worker = heapq.heappop(free)
            duration = resource - trial.resource_used  # training resumes
            heapq.heappush(running, (clock + duration, seq, worker, trial.id, resource))
            seq += 1
        if not running:
            break
        finish, _, worker, trial_id, resource = heapq.heappop(running)
        clock = finish
        scheduler.report(trial_id, resource, objective(scheduler.trials[trial_id].config, resource))
        heapq.heappush(free, worker)
    return scheduler.finalize()


def run_asha(space: HyperparameterSpace, objective: Callable[[dict, int], float],
             config: SchedulerConfig, n_workers: int = 1) -> list[TrialRecord]:
    """Asynchronous successive halving; every trial (stopped or completed)
    is returned with its final score and resource."""
    if n_workers < 1:
        raise BadConfig("n_workers must be >= 1")
    return _run_pool(_AshaScheduler(space, config), objective, n_workers)


def run_random_search(space: HyperparameterSpace, objective: Callable[[dict, int], float],
                      config: SchedulerConfig, n_workers: int = 1) -> list[TrialRecord]:
    """Baseline: every trial trains for the full max_resource."""
    if n_workers < 1:
        raise BadConfig("n_workers must be >= 1")
    rng = random.Random(config.seed)
    trials: list[TrialRecord] = []
    for i in range(config.max_trials):
        config_point = sample(space, rng)
        score = objective(config_point, config.max_resource)
        trials.append(
            TrialRecord(
                id=i,
                config=config_point,
                resource_used=config.max_resource,
                latest_score=score,
                rung=0,
                status="completed",
            )
        )
    return trials


def total_resource(trials: list[TrialRecord]) -> int:
    """Epochs consumed over the whole run (training resumes across rungs)."""
    return sum(t.resource_used for t in trials)


def _unit_hash(*parts) -> float:
    """Deterministic uniform in [0, 1) from the given parts (process-stable)."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


class SyntheticObjective:
    """Saturating learning-curve stand-in for model training.

    score(config, e) = q * (1 - exp(-e / tau)) + noise, with q in [0, 1] and
    tau in tau_range both hash-derived from the config, and noise bounded by
    +-noise_scale and deterministic in (seed, config, e).
    """

    def __init__(self, seed: int, noise_scale: float = 0.01,
                 tau_range: tuple[float, float] = (2.0, 10.0)):
        self.seed = seed
        self.noise_scale = noise_scale
        self.tau_range = tau_range

    def _canonical(self, config: dict) -> str:
        return json.dumps(config, sort_keys=True)

    def quality(self, config: dict) -> float:
        return _unit_hash(self.seed, "q", self._canonical(config))

    def tau(self, config: dict) -> float:
        lo, hi = self.tau_range
        return lo + (hi - lo) * _unit_hash(self.seed, "tau", self._canonical(config))

    def __call__(self, config: dict, epochs: int) -> float:
        base = self.quality(config) * (1.0 - math.exp(-epochs / self.tau(config)))
        noise = self.noise_scale * (
            2.0 * _unit_hash(self.seed, "noise", self._canonical(config), epochs) - 1.0
        )
        return base + noise


def synthetic_objective(seed: int, noise_scale: float = 0.01,
                        tau_range: tuple[float, float] = (2.0, 10.0)) -> SyntheticObjective:
    return SyntheticObjective(seed, noise_scale, tau_range)


def default_cost_model(seed: int) -> Callable[[TrialRecord], dict]:
    """Hash-derived model footprints: 10 MB..1 GB weights, cost tracking size."""

    def model(trial: TrialRecord) -> dict:
        u = _unit_hash(seed, "cost", json.dumps(trial.config, sort_keys=True))
        weight_bytes = 10.0 ** (7.0 + 2.0 * u)
        return {
            "cost": weight_bytes / 5e7,
            "weight_bytes": weight_bytes,
            "activation_bytes_per_image": weight_bytes / 50.0,
        }

    return model


def default_predictions_generator(seed: int, mix_cap: float = 0.97,
                                  wrong_rate_cap: float = 0.5,
                                  shape: float = 0.4) -> Callable:
    """Rows mix one-hot targets with uniform mass at a rate tied to score.

    High scores give near-one-hot correct rows (low cross-entropy); score 0
    gives uniform rows (cross-entropy ln K). Lower scores also flip a
    score-dependent share of targets to wrong classes, so mid-quality models
    disagree and ensembles have something to average out. The concave
    score**shape mapping keeps decent models close in quality; without it the
    best model beats every average and selection degenerates to a singleton.
    """

    def generate(trial: TrialRecord, labels: np.ndarray, n_classes: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence((seed, trial.id)))
        score = trial.latest_score if trial.latest_score is not None else 0.0
        s = min(max(score, 0.0), 1.0) ** shape
        alpha = mix_cap * s
        wrong_rate = wrong_rate_cap * (1.0 - s)
        n = labels.shape[0]
        targets = labels.copy()
        flip = rng.random(n) < wrong_rate
        offsets = rng.integers(1, n_classes, size=n)
        targets[flip] = (labels[flip] + offsets[flip]) % n_classes
        rows = np.full((n, n_classes), (1.0 - alpha) / n_classes)
        rows[np.arange(n), targets] += alpha
        return rows

    return generate


def export_library(trials: list[TrialRecord], out_dir: str | Path, *,
                   n_samples: int = 100, n_classes: int = 5, seed: int = 0,
                   cost_model: Callable[[TrialRecord], dict] | None = None,
                   predictions_generator: Callable | None = None) -> Path:
    """Materialize trials as a model-library manifest (the step-1 -> step-2
    bridge). Every trial becomes a model whose synthetic predictions improve
    with its score; the output loads cleanly with load_library."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    label_rng = np.random.default_rng(np.random.SeedSequence((seed, 0x1ABE15)))
    labels = label_rng.integers(0, n_classes, size=n_samples)
    if not trials:
        manifest = out_dir / "manifest.json"
        manifest.write_text(
            json.dumps({"labels": [int(x) for x in labels], "models": []}, indent=2)
        )
        return manifest
    cost_model = cost_model or default_cost_model(seed)
    generate = predictions_generator or default_predictions_generator(seed)
    models = []
    for trial in trials:
        footprint = cost_model(trial)
        preds = generate(trial, labels, n_classes)
        models.append(
            ModelRecord(
                id=f"trial-{trial.id:04d}",
                cost=float(footprint["cost"]),
                weight_bytes=float(footprint["weight_bytes"]),
                activation_bytes_per_image=float(footprint["activation_bytes_per_image"]),
                validation_metric=float(trial.latest_score or 0.0),
                predictions=preds,
                hyperparameters=dict(trial.config),
            )
        )
    return save_library(ModelLibrary(models=models, labels=labels), out_dir)


def trials_to_json(trials: list[TrialRecord], algo: str, config: SchedulerConfig) -> dict:
    return {
        "algo": algo,
        "scheduler": {
            "eta": config.eta,
            "min_resource": config.min_resource,
            "max_resource": config.max_resource,
            "max_trials": config.max_trials,
            "seed": config.seed,
        },
        "trials": [
            {
                "id": t.id,
                "config": t.config,
                "resource_used": t.resource_used,
                "latest_score": t.latest_score,
                "rung": t.rung,
                "status": t.status,
            }
            for t in trials
        ],
    }


def trials_from_json(doc: dict) -> list[TrialRecord]:
    if not isinstance(doc, dict) or "trials" not in doc:
        raise BadConfig("trials file must be an object with a 'trials' list")
    out = []
    for rec in doc["trials"]:
        out.append(
            TrialRecord(
                id=int(rec["id"]),
                config=dict(rec["config"]),
                resource_used=int(rec["resource_used"]),
                latest_score=None if rec["latest_score"] is None else float(rec["latest_score"]),
                rung=int(rec["rung"]),
                status=str(rec["status"]),
            )
        )
    return out
