"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline.
"""

import functools
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from forge.allocation import (
    SimulatorOracle,
    allocate_memory_fit,
    brute_force_allocation,
    neighbors,
    refine_allocation,
)
from forge.combiners import (
    average_combine,
    cross_entropy,
    majority_vote_combine,
    weighted_average_combine,
)
from forge.errors import OutOfMemory
from forge.hpo import SchedulerConfig, run_asha, run_random_search, synthetic_objective, total_resource
from forge.hpo import HyperparameterSpace
from forge.selection import (
    BudgetSpec,
    brute_force_best,
    penalty,
    scalarized_score,
    smobf_greedy,
    smobf_multi_w,
)
from synth import random_alloc_instance, random_budget, random_library


def criterion(number, description):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"ACCEPTANCE {number}: FAIL - {description}")
                raise
            print(f"ACCEPTANCE {number}: PASS - {description}")

        return wrapper

    return deco


@criterion(1, "oracle dominance & feasibility over 200 random libraries in < 60 s")
def test_criterion_1_oracle_dominance():
    rng = np.random.default_rng(1001)
    started = time.monotonic()
    for _ in range(200):
        lib = random_library(rng, n_samples=50, n_classes=4)  # |L| in [3, 12]
        budget = BudgetSpec(random_budget(rng, lib))
        sol = smobf_multi_w(lib, budget)
        assert sol.cost <= budget.budget + 1e-9
        oracle = brute_force_best(lib, budget)
        assert sol.error.value >= oracle.error.value
    elapsed = time.monotonic() - started
    assert elapsed < 60.0, f"took {elapsed:.1f}s"


@criterion(2, "penalty arithmetic: penalty(B)=0, penalty(B+1)=11, penalty(B+3)=19")
def test_criterion_2_penalty_arithmetic():
    budget = BudgetSpec(20.0)
    assert penalty(20.0, budget) == 0.0
    assert penalty(21.0, budget) == 11.0
    assert penalty(23.0, budget) == 19.0


@criterion(3, "greedy step scores strictly decrease; final <= best feasible singleton")
def test_criterion_3_greedy_structure():
    rng = np.random.default_rng(1003)
    for _ in range(60):
        lib = random_library(rng, n_models=int(rng.integers(3, 9)))  # |L| <= 8
        budget = BudgetSpec(random_budget(rng, lib))
        w = float(rng.choice([0.1, 0.01, 0.001]))
        sol = smobf_greedy(lib, budget, w)
        trace = sol.step_scores
        assert len(trace) >= 1
        assert all(later < earlier for earlier, later in zip(trace, trace[1:]))
        singleton_scores = [
            scalarized_score([mid], lib, w, budget)
            for mid in lib.ids
            if lib.get(mid).cost <= budget.budget + 1e-9
        ]
        assert sol.score <= min(singleton_scores)


@criterion(4, "brute-force oracle error is non-increasing across ascending budgets")
def test_criterion_4_budget_monotonicity():
    rng = np.random.default_rng(1004)
    for _ in range(50):
        lib = random_library(rng, n_models=int(rng.integers(3, 9)))
        total = sum(m.cost for m in lib.models)
        lo = min(m.cost for m in lib.models)
        budgets = sorted(float(rng.uniform(lo, total)) for _ in range(4))
        errors = [brute_force_best(lib, BudgetSpec(b)).error.value for b in budgets]
        assert all(later <= earlier for earlier, later in zip(errors, errors[1:]))


@criterion(5, "combiner identities: uniform weights, one-hot CE, uniform CE, vote tie")
def test_criterion_5_combiner_identities():
    rng = np.random.default_rng(1005)
    mats = []
    for _ in range(4):
        m = rng.random((30, 4))
        mats.append(m / m.sum(axis=1, keepdims=True))
    diff = np.abs(weighted_average_combine(mats, [0.25] * 4) - average_combine(mats))
    assert diff.max() <= 1e-12

    onehot = np.eye(4)[[0, 3, 2]]
    assert cross_entropy(onehot, [0, 3, 2]) == 0.0

    uniform = np.full((5, 4), 0.25)
    assert abs(cross_entropy(uniform, [0, 1, 2, 3, 0]) - math.log(4)) <= 1e-9

    tie = majority_vote_combine([np.array([[0.9, 0.1]]), np.array([[0.2, 0.8]])])
    assert np.array_equal(tie, [[1.0, 0.0]])


@criterion(6, "allocation contracts: refine >= start, refine <= oracle, fit feasible, neighbor count")
def test_criterion_6_allocation_contracts():
    oracle = SimulatorOracle()
    rng = np.random.default_rng(1006)
    refined_checked = 0
    brute_checked = 0
    while refined_checked < 100:
        dnns, devices, pb = random_alloc_instance(rng)
        try:
            start = allocate_memory_fit(dnns, devices, pb[0], oracle)
        except OutOfMemory:
            continue  # allowed outcome: no feasible start exists for this draw
        assert oracle.evaluate(dnns, start, devices).feasible
        refined_checked += 1
        t_start = oracle.evaluate(dnns, start, devices).throughput
        refined = refine_allocation(dnns, start, devices, pb, oracle, 120)
        t_refined = oracle.evaluate(dnns, refined, devices).throughput
        assert t_refined >= t_start
        if (len(devices) * len(pb)) ** len(dnns) <= 10_000:
            brute_checked += 1
            best = brute_force_allocation(dnns, devices, pb, oracle)
            assert t_refined <= oracle.evaluate(dnns, best, devices).throughput
    assert brute_checked > 0

    for _ in range(50):
        dnns, devices, pb = random_alloc_instance(rng)
        try:
            state = allocate_memory_fit(dnns, devices, pb[0], oracle)
        except OutOfMemory:
            continue
        n, m = len(dnns), len(devices)
        assert len(neighbors(state, pb, devices)) == n * (len(pb) - 1) + n * (m - 1)


@criterion(7, "ASHA rung counts and resource totals vs 900-epoch random search")
def test_criterion_7_asha_schedule():
    space = HyperparameterSpace(
        {
            "lr": {"type": "continuous", "low": 0.001, "high": 0.01},
            "act": {"type": "categorical", "values": ["relu", "tanh", "elu"]},
        }
    )
    objective = synthetic_objective(7, noise_scale=0.0, tau_range=(5.0, 5.0))
    config = SchedulerConfig(eta=3, min_resource=1, max_resource=9, max_trials=9, seed=7)
    trials = run_asha(space, objective, config, n_workers=1)
    beyond_rung0 = [t for t in trials if t.resource_used > 1]
    at_top = [t for t in trials if t.resource_used == 9]
    assert len(beyond_rung0) == math.ceil(9 / 3) == 3
    assert len(at_top) == 1
    best_q = max(objective.quality(t.config) for t in trials)
    assert objective.quality(at_top[0].config) == best_q
    assert total_resource(trials) < 900

    rs_config = SchedulerConfig(eta=3, min_resource=1, max_resource=100, max_trials=9, seed=7)
    rs = run_random_search(space, objective, rs_config)
    assert total_resource(rs) == 900


@criterion(8, "pipeline determinism (byte-identical sweep.csv) at desk scale in < 5 min")
def test_criterion_8_pipeline_determinism(tmp_path):
    space = tmp_path / "space.json"
    space.write_text(
        json.dumps(
            {
                "lr": {"type": "continuous", "low": 0.001, "high": 0.01},
                "blocks": {"type": "discrete", "low": 2, "high": 8},
                "act": {"type": "categorical", "values": ["relu", "tanh", "elu"]},
            }
        )
    )
    started = time.monotonic()
    for out_dir in ("run_a", "run_b"):
        proc = subprocess.run(
            [
                sys.executable, "-m", "forge", "pipeline",
                "--space", str(space), "--out-dir", str(tmp_path / out_dir),
                "--trials", "64", "--max-r", "9", "--prune", "0.1875",
                "--workers", "4", "--seed", "7",
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
    elapsed = time.monotonic() - started
    assert elapsed < 300.0, f"took {elapsed:.1f}s"

    sweep_a = (tmp_path / "run_a" / "sweep.csv").read_bytes()
    sweep_b = (tmp_path / "run_b" / "sweep.csv").read_bytes()
    assert sweep_a == sweep_b

    # desk scale: 64 trials -> 12-model pruned library, 6 budgets, n <= 6 DNNs
    trials = json.loads((tmp_path / "run_a" / "trials.json").read_text())["trials"]
    assert len(trials) == 64
    rows = [ln for ln in sweep_a.decode().splitlines()[1:] if ln]
    assert len(rows) == 6
    sol = json.loads((tmp_path / "run_a" / "sol.json").read_text())
    assert 1 <= len(sol["ids"]) <= 6
    alloc = json.loads((tmp_path / "run_a" / "alloc.json").read_text())
    assert alloc["feasible"] and alloc["throughput"] > 0
