"""forge command line: hpo -> library -> select -> allocate, plus reporting.

Every stage reads and writes plain files (JSON/CSV) so each is independently
re-runnable; all randomness flows from one seed (``--seed`` flag, else the
FORGE_SEED environment variable, else a fixed default). Exit codes: 0 on
success, 1 on a domain error (with an error JSON on stderr), 2 on usage
errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import allocation, hpo, report, selection
from .combiners import (
    average_combine,
    cross_entropy,
    error_rate,
    macro_f1,
    majority_vote_combine,
    weighted_average_combine,
)
from .errors import ForgeError, SchemaError
from .library import ModelLibrary, load_library, prune_library, save_library

logger = logging.getLogger("forge")

DEFAULT_SEED = 7
DEFAULT_PB = (8, 16, 32, 64, 128, 256)
DEFAULT_MAX_COMBI = 500
# Used by `forge pipeline` when no device file is given: two 16 GiB GPUs and
# one large-memory CPU, GPU assumed 8x faster.
DEFAULT_DEVICES = (
    allocation.DeviceSpec(id="gpu0", kind="GPU", memory_capacity=16 * 2**30, speed_factor=8.0),
    allocation.DeviceSpec(id="gpu1", kind="GPU", memory_capacity=16 * 2**30, speed_factor=8.0),
    allocation.DeviceSpec(id="cpu0", kind="CPU", memory_capacity=64 * 2**30, speed_factor=1.0),
)
# Number of auto-derived budgets when --budgets is omitted.
AUTO_BUDGET_STEPS = 6


def _auto_budgets(lib: ModelLibrary) -> list[float]:
    """Geometric ladder from just above the cheapest model to the full
    library cost, so the lowest budget is always feasible."""
    lo = 1.05 * min(m.cost for m in lib.models)
    hi = sum(m.cost for m in lib.models)
    if hi <= lo:
        return [lo]
    ratio = (hi / lo) ** (1.0 / (AUTO_BUDGET_STEPS - 1))
    return [lo * ratio**i for i in range(AUTO_BUDGET_STEPS)]


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("FORGE_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise SchemaError(f"FORGE_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _baseline_k(text: str) -> int:
    if not text.startswith("fixed-k="):
        raise argparse.ArgumentTypeError(f"expected fixed-k=<K>, got {text!r}")
    try:
        k = int(text.split("=", 1)[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected fixed-k=<K>, got {text!r}")
    if k < 1:
        raise argparse.ArgumentTypeError("baseline K must be >= 1")
    return k


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_devices(path: str | Path) -> list[allocation.DeviceSpec]:
    p = Path(path)
    if not p.exists():
        from .errors import MissingFile

        raise MissingFile(f"device file not found: {p}")
    try:
        doc = json.loads(p.read_text())
        return [
            allocation.DeviceSpec(
                id=str(d["id"]),
                kind=str(d["kind"]),
                memory_capacity=float(d["memory_capacity"]),
                speed_factor=float(d.get("speed_factor", 1.0)),
            )
            for d in doc
        ]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad device file {p}: {exc}") from exc


def _make_oracle(spec: str):
    if spec == "sim":
        return allocation.SimulatorOracle()
    if spec.startswith("cmd:"):
        return allocation.CommandOracle(spec[4:])
    raise SchemaError(f"--oracle must be 'sim' or 'cmd:<command>', got {spec!r}")


def _solution_doc(sol: selection.EnsembleSolution, budget: selection.BudgetSpec) -> dict:
    return {
        "ids": list(sol.selection),
        "error": {"name": sol.error.name, "value": sol.error.value},
        "cost": sol.cost,
        "normalized_cost": sol.normalized_cost,
        "score": sol.score,
        "feasible": sol.feasible,
        "budget": budget.budget,
        "w_schedule": list(budget.weights_w),
    }


def _baseline_rows(lib: ModelLibrary, k_max: int) -> list[selection.SweepRow]:
    rows = []
    for k in range(1, min(k_max, len(lib.models)) + 1):
        sol = selection.forward_greedy_fixed_size(lib, k)
        rows.append(
            selection.SweepRow(
                budget=None,
                error=sol.error.value,
                cost=sol.cost,
                n_models=sol.size,
                ids=tuple(sorted(sol.selection)),
                feasible=True,
                algo="fixed-k",
            )
        )
    return rows


# ---------------------------------------------------------------- commands


def cmd_library(args) -> int:
    lib = load_library(args.manifest)
    if args.action == "validate":
        print(
            json.dumps(
                {
                    "status": "ok",
                    "models": len(lib.models),
                    "n_samples": lib.n_samples,
                    "n_classes": lib.n_classes,
                }
            )
        )
        return 0
    pruned = prune_library(lib, args.keep)
    manifest = save_library(pruned, args.out)
    print(json.dumps({"status": "ok", "models": len(pruned.models), "manifest": str(manifest)}))
    return 0


def cmd_eval(args) -> int:
    lib = load_library(args.manifest)
    ids = args.ids.split(",") if args.ids else lib.ids
    preds = [lib.get(i).predictions for i in ids]
    if args.combiner == "average":
        combined = average_combine(preds)
    elif args.combiner == "vote":
        combined = majority_vote_combine(preds)
    else:
        if not args.weights:
            raise SchemaError("--combiner weighted requires --weights")
        combined = weighted_average_combine(preds, args.weights)
    doc = {
        "combiner": args.combiner,
        "n_models": len(ids),
        "ids": ids,
        "metrics": {
            "cross_entropy": cross_entropy(combined, lib.labels),
            "error_rate": error_rate(combined, lib.labels),
            "macro_f1": macro_f1(combined, lib.labels),
        },
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def cmd_select(args) -> int:
    lib = load_library(args.manifest)
    if args.prune is not None:
        lib = prune_library(lib, args.prune)
    budget = selection.BudgetSpec(args.budget, tuple(args.w))
    sol = selection.smobf_multi_w(lib, budget)
    doc = _solution_doc(sol, budget)
    if args.baseline is not None:
        base = selection.forward_greedy_fixed_size(lib, args.baseline)
        doc["baseline"] = {
            "algo": f"fixed-k={args.baseline}",
            "ids": list(base.selection),
            "error": {"name": base.error.name, "value": base.error.value},
            "cost": base.cost,
        }
    _write_json(Path(args.out), doc)
    print(json.dumps({"status": "ok", "out": args.out, "n_models": sol.size}))
    return 0


def cmd_sweep(args) -> int:
    lib = load_library(args.manifest)
    if args.prune is not None:
        lib = prune_library(lib, args.prune)
    budgets = sorted(args.budgets)
    rows = selection.budget_sweep(lib, budgets, weights_w=tuple(args.w))
    if args.baseline is not None:
        rows = rows + _baseline_rows(lib, args.baseline)
    out = report.write_sweep_csv(rows, args.out)
    print(json.dumps({"status": "ok", "out": str(out), "rows": len(rows)}))
    return 0


def cmd_allocate(args) -> int:
    lib = load_library(args.manifest)
    sol = json.loads(Path(args.solution).read_text()) if args.solution else {"ids": lib.ids}
    if "ids" not in sol or not sol["ids"]:
        raise SchemaError("solution file must carry a non-empty 'ids' list")
    dnns = [lib.get(i) for i in sol["ids"]]
    devices = _load_devices(args.devices) if args.devices else list(DEFAULT_DEVICES)
    oracle = _make_oracle(args.oracle)
    pb = args.pb
    start = allocation.allocate_memory_fit(
        dnns, devices, min(pb), oracle, workload_images=args.workload
    )
    refined = allocation.refine_allocation(
        dnns, start, devices, pb, oracle, args.max_combi, workload_images=args.workload
    )
    bench = oracle.evaluate(dnns, refined, devices, args.workload)
    doc = allocation.state_to_json(refined)
    doc["throughput"] = bench.throughput
    doc["feasible"] = bench.feasible
    doc["per_device_memory"] = bench.per_device_memory
    if args.out:
        _write_json(Path(args.out), doc)
        print(json.dumps({"status": "ok", "out": args.out, "throughput": bench.throughput}))
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _run_hpo(args, seed: int):
    if not args.space:
        raise UsageError("--space is required")
    space = hpo.load_space(args.space)
    config = hpo.SchedulerConfig(
        eta=args.eta,
        min_resource=args.min_r,
        max_resource=args.max_r,
        max_trials=args.trials,
        seed=seed,
    )
    objective = hpo.synthetic_objective(seed)
    if args.algo == "asha":
        trials = hpo.run_asha(space, objective, config, n_workers=args.workers)
    else:
        trials = hpo.run_random_search(space, objective, config, n_workers=args.workers)
    return trials, config


def cmd_hpo(args) -> int:
    if args.action == "export":
        doc = json.loads(Path(args.trials).read_text())
        trials = hpo.trials_from_json(doc)
        out = Path(args.out)
        manifest = hpo.export_library(
            trials,
            out.parent if out.suffix else out,
            n_samples=args.samples,
            n_classes=args.classes,
            seed=_resolve_seed(args.seed),
        )
        if out.suffix and manifest != out:
            manifest.rename(out)
            manifest = out
        print(json.dumps({"status": "ok", "manifest": str(manifest), "models": len(trials)}))
        return 0
    seed = _resolve_seed(args.seed)
    trials, config = _run_hpo(args, seed)
    _write_json(Path(args.out), hpo.trials_to_json(trials, args.algo, config))
    print(
        json.dumps(
            {
                "status": "ok",
                "out": args.out,
                "trials": len(trials),
                "total_epochs": hpo.total_resource(trials),
            }
        )
    )
    return 0


def cmd_pipeline(args) -> int:
    seed = _resolve_seed(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    logger.info("pipeline stage 1/4: scheduling %d %s trials", args.trials, args.algo)
    trials, config = _run_hpo(args, seed)
    _write_json(out_dir / "trials.json", hpo.trials_to_json(trials, args.algo, config))

    logger.info("pipeline stage 2/4: exporting trials into a model library")
    manifest = hpo.export_library(
        trials, out_dir, n_samples=args.samples, n_classes=args.classes, seed=seed
    )
    lib = load_library(manifest)
    lib = prune_library(lib, args.prune)
    logger.info("pruned library to %d models (keep=%g)", len(lib.models), args.prune)

    if args.budgets:
        budgets = sorted(args.budgets)
    else:
        budgets = _auto_budgets(lib)
    logger.info("pipeline stage 3/4: selecting ensembles for %d budgets", len(budgets))
    rows = selection.budget_sweep(lib, budgets, weights_w=tuple(args.w))
    if args.baseline is not None:
        rows = rows + _baseline_rows(lib, args.baseline)
    report.write_sweep_csv(rows, out_dir / "sweep.csv")

    feasible = [r for r in rows if r.algo == "smobf" and r.feasible]
    if not feasible:
        from .errors import InfeasibleBudget

        raise InfeasibleBudget("no budget in the sweep admits a feasible ensemble")
    top = feasible[-1]
    budget = selection.BudgetSpec(top.budget, tuple(args.w))
    sol = selection.smobf_multi_w(lib, budget)
    _write_json(out_dir / "sol.json", _solution_doc(sol, budget))

    logger.info("pipeline stage 4/4: planning deployment of %d models", sol.size)
    dnns = [lib.get(i) for i in sol.selection]
    devices = _load_devices(args.devices) if args.devices else list(DEFAULT_DEVICES)
    oracle = allocation.SimulatorOracle()
    start = allocation.allocate_memory_fit(dnns, devices, min(args.pb), oracle)
    refined = allocation.refine_allocation(dnns, start, devices, args.pb, oracle, args.max_combi)
    bench = oracle.evaluate(dnns, refined, devices)
    alloc_doc = allocation.state_to_json(refined)
    alloc_doc["throughput"] = bench.throughput
    alloc_doc["feasible"] = bench.feasible
    _write_json(out_dir / "alloc.json", alloc_doc)

    print(
        json.dumps(
            {
                "status": "ok",
                "out_dir": str(out_dir),
                "trials": len(trials),
                "library": len(lib.models),
                "budgets": budgets,
                "ensemble": list(sol.selection),
                "throughput": bench.throughput,
            }
        )
    )
    return 0


def cmd_report(args) -> int:
    summary = report.build_report(args.sweep, args.out_dir)
    print(json.dumps({"status": "ok", **summary}))
    return 0


class UsageError(Exception):
    """Raised for missing-argument combinations argparse cannot express."""


# ---------------------------------------------------------------- parser


def _add_hpo_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--space", help="hyperparameter space JSON")
    p.add_argument("--algo", choices=["asha", "random"], default="asha")
    p.add_argument("--eta", type=int, default=3)
    p.add_argument("--min-r", type=int, default=1, dest="min_r")
    p.add_argument("--max-r", type=int, default=81, dest="max_r")
    p.add_argument("--trials", type=int, default=16)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forge",
        description="Post-hoc ensembling workflow: HPO scheduling, budgeted "
        "ensemble selection, and CPU/GPU inference placement.",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0,
        help="log stage progress to stderr (-vv for debug)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("library", help="validate or prune a model library")
    lib_sub = p.add_subparsers(dest="action", required=True)
    v = lib_sub.add_parser("validate", help="load and check a manifest")
    v.add_argument("manifest")
    pr = lib_sub.add_parser("prune", help="keep the top fraction by metric")
    pr.add_argument("manifest")
    pr.add_argument("--keep", type=float, required=True)
    pr.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_library)

    p = sub.add_parser("eval", help="evaluate a combination of library models")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ids", default=None, help="comma-separated model ids (default: all)")
    p.add_argument("--combiner", choices=["average", "weighted", "vote"], default="average")
    p.add_argument("--weights", type=_floats, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("select", help="budgeted ensemble selection (SMOBF)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--w", type=_floats, default=[0.1, 0.01, 0.001])
    p.add_argument("--prune", type=float, default=None)
    p.add_argument("--baseline", type=_baseline_k, default=None, metavar="fixed-k=K")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_select)

    p = sub.add_parser("sweep", help="run selection across a budget ladder")
    p.add_argument("--manifest", required=True)
    p.add_argument("--budgets", type=_floats, required=True)
    p.add_argument("--w", type=_floats, default=[0.1, 0.01, 0.001])
    p.add_argument("--prune", type=float, default=None)
    p.add_argument("--baseline", type=_baseline_k, default=None, metavar="fixed-k=K")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("allocate", help="plan device placement for a solution")
    p.add_argument("--manifest", required=True)
    p.add_argument("--solution", default=None, help="sol.json from forge select")
    p.add_argument("--devices", default=None, help="device JSON file")
    p.add_argument("--pb", type=_ints, default=list(DEFAULT_PB))
    p.add_argument("--max-combi", type=int, default=DEFAULT_MAX_COMBI, dest="max_combi")
    p.add_argument("--oracle", default="sim", help="'sim' or 'cmd:<command>'")
    p.add_argument("--workload", type=int, default=allocation.DEFAULT_WORKLOAD_IMAGES)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_allocate)

    p = sub.add_parser("hpo", help="run trial scheduling / export a library")
    hpo_sub = p.add_subparsers(dest="action", required=False)
    _add_hpo_run_flags(p)
    p.add_argument("--out", default="trials.json")
    ex = hpo_sub.add_parser("export", help="turn trials into a library manifest")
    ex.add_argument("--trials", required=True)
    ex.add_argument("--out", required=True)
    ex.add_argument("--samples", type=int, default=100)
    ex.add_argument("--classes", type=int, default=5)
    ex.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_hpo, action=None)

    p = sub.add_parser("pipeline", help="hpo -> export -> prune -> select -> allocate")
    _add_hpo_run_flags(p)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--prune", type=float, default=0.2)
    p.add_argument("--budgets", type=_floats, default=None)
    p.add_argument("--w", type=_floats, default=[0.1, 0.01, 0.001])
    p.add_argument("--devices", default=None)
    p.add_argument("--pb", type=_ints, default=list(DEFAULT_PB))
    p.add_argument("--max-combi", type=int, default=DEFAULT_MAX_COMBI, dest="max_combi")
    p.add_argument("--baseline", type=_baseline_k, default=None, metavar="fixed-k=K")
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("report", help="Pareto flags + figures from a sweep CSV")
    p.add_argument("--sweep", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits 2
        return 2  # pragma: no cover
    except ForgeError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
