"""Deployment planning for an ensemble across CPU/GPU devices.

Two stages mirror the serving workflow: a memory-fit pass (worst-fit
decreasing with GPU priority) produces a state that fits, then a
steepest-ascent local search refines it for throughput against a bench
oracle. The built-in simulator oracle is deterministic and normative for
tests; real hardware benching is delegated to an external command that
receives the candidate state as JSON on stdin and answers with one JSON
line ``{"throughput": <float>, "feasible": <bool>}``.

Simulator model (per DNN d at batch b on device v holding k DNNs):
    memory(d, b)   = weight_bytes(d) + activation_bytes_per_image(d) * b
    base_ips(d)    = 1e9 / weight_bytes(d) * 1000
    speed(d, v, b) = base_ips(d) * speed_factor(v)
                     * (b / (b + 16)) / (32 / (32 + 16)) / k
A device is feasible iff its resident memory fits its capacity; ensemble
throughput is the minimum member speed (averaging waits for every member),
and an infeasible state reports throughput 0.
"""

from __future__ import annotations

import itertools
import json
import shlex
import subprocess
from dataclasses import dataclass, field

from .errors import (
    InfeasibleStart,
    IoError,
    MalformedState,
    OutOfMemory,
    ParseError,
    TooLarge,
)

SATURATION_EPOCHS = 16.0
REFERENCE_BATCH = 32.0
BRUTE_FORCE_MAX_STATES = 10**6
DEFAULT_WORKLOAD_IMAGES = 1000


@dataclass(frozen=True)
class DeviceSpec:
    id: str
    kind: str  # "GPU" | "CPU"
    memory_capacity: float
    speed_factor: float = 1.0

    def __post_init__(self):
        if self.kind not in ("GPU", "CPU"):
            raise ValueError(f"device kind must be GPU or CPU, got {self.kind!r}")
        if not self.memory_capacity > 0:
            raise ValueError("memory_capacity must be > 0")


@dataclass
class AllocationState:
    """Per-DNN batch sizes plus per-GPU / per-CPU resident id lists."""

    batches: dict[str, int]
    gpu_lists: list[list[str]]
    cpu_lists: list[list[str]]

    def clone(self) -> "AllocationState":
        return AllocationState(
            batches=dict(self.batches),
            gpu_lists=[list(g) for g in self.gpu_lists],
            cpu_lists=[list(c) for c in self.cpu_lists],
        )

    def device_slots(self) -> list[list[str]]:
        """Resident lists in device order (GPUs first, then CPUs)."""
        return list(self.gpu_lists) + list(self.cpu_lists)

    def slot_of(self, dnn_id: str) -> int:
        for pos, resident in enumerate(self.device_slots()):
            if dnn_id in resident:
                return pos
        raise MalformedState(f"dnn {dnn_id!r} is on no device")

    def key(self) -> tuple:
        return (
            tuple(sorted(self.batches.items())),
            tuple(tuple(g) for g in self.gpu_lists),
            tuple(tuple(c) for c in self.cpu_lists),
        )


@dataclass(frozen=True)
class BenchResult:
    throughput: float
    feasible: bool
    per_device_memory: dict[str, float] = field(default_factory=dict)


def _ordered_devices(devices) -> tuple[list[DeviceSpec], list[DeviceSpec]]:
    gpus = [d for d in devices if d.kind == "GPU"]
    cpus = [d for d in devices if d.kind == "CPU"]
    return gpus, cpus


def check_state(dnns, state: AllocationState, devices) -> None:
    """Raise MalformedState unless every DNN sits on exactly one device and
    the list structure matches the device roster."""
    gpus, cpus = _ordered_devices(devices)
    if len(state.gpu_lists) != len(gpus) or len(state.cpu_lists) != len(cpus):
        raise MalformedState(
            f"state has {len(state.gpu_lists)} GPU / {len(state.cpu_lists)} CPU lists "
            f"for {len(gpus)} GPUs / {len(cpus)} CPUs"
        )
    ids = [d.id for d in dnns]
    if len(set(ids)) != len(ids):
        raise MalformedState("duplicate dnn ids")
    placed: list[str] = [x for resident in state.device_slots() for x in resident]
    if sorted(placed) != sorted(ids):
        raise MalformedState("each dnn must appear on exactly one device")
    if set(state.batches) != set(ids):
        raise MalformedState("batches must cover exactly the dnn ids")
    for b in state.batches.values():
        if not (isinstance(b, int) and b >= 1):
            raise MalformedState(f"batch sizes must be positive integers, got {b!r}")


def dnn_memory(dnn, batch: int) -> float:
    return dnn.weight_bytes + dnn.activation_bytes_per_image * batch


def base_ips(dnn) -> float:
    return 1e9 / dnn.weight_bytes * 1000


def simulate_bench(dnns, state: AllocationState, devices,
                   workload_images: int = DEFAULT_WORKLOAD_IMAGES) -> BenchResult:
    """Deterministic analytic bench; normative for tests.

    ``workload_images`` is part of the oracle contract (real benches need a
    calibration workload) but does not influence the analytic throughput.
    """
    if not dnns:
        raise MalformedState("cannot bench an empty ensemble")
    check_state(dnns, state, devices)
    by_id = {d.id: d for d in dnns}
    gpus, cpus = _ordered_devices(devices)
    ordered = gpus + cpus

    per_device_memory: dict[str, float] = {}
    feasible = True
    slowest = None
    for device, resident in zip(ordered, state.device_slots()):
        mem = sum(dnn_memory(by_id[i], state.batches[i]) for i in resident)
        per_device_memory[device.id] = mem
        if mem > device.memory_capacity:
            feasible = False
        k = len(resident)
        for i in resident:
            dnn = by_id[i]
            b = state.batches[i]
            saturation = (b / (b + SATURATION_EPOCHS)) / (
                REFERENCE_BATCH / (REFERENCE_BATCH + SATURATION_EPOCHS)
            )
            speed = base_ips(dnn) * device.speed_factor * saturation / k
            slowest = speed if slowest is None else min(slowest, speed)

    throughput = slowest if feasible and slowest is not None else 0.0
    return BenchResult(throughput=throughput, feasible=feasible,
                       per_device_memory=per_device_memory)


class SimulatorOracle:
    """BenchOracle backed by the analytic simulator."""

    def evaluate(self, dnns, state, devices,
                 workload_images: int = DEFAULT_WORKLOAD_IMAGES) -> BenchResult:
        return simulate_bench(dnns, state, devices, workload_images)


class CommandOracle:
    """BenchOracle that shells out to a user-provided benchmark command.

    The command receives on stdin a JSON document::

        {"workload_images": N,
         "dnns": [{"id", "weight_bytes", "activation_bytes_per_image"}, ...],
         "devices": [{"id", "kind", "memory_capacity", "speed_factor"}, ...],
         "state": {"batch": {...}, "gpu_lists": [...], "cpu_lists": [...]}}

    and must print a single JSON line ``{"throughput": x, "feasible": bool}``.
    Runs are sequential: real benchmarks interfere on shared hardware.
    """

    def __init__(self, command: str):
        self.argv = shlex.split(command)
        if not self.argv:
            raise ValueError("empty bench command")

    def evaluate(self, dnns, state, devices,
                 workload_images: int = DEFAULT_WORKLOAD_IMAGES) -> BenchResult:
        check_state(dnns, state, devices)
        payload = json.dumps(
            {
                "workload_images": workload_images,
                "dnns": [
                    {
                        "id": d.id,
                        "weight_bytes": d.weight_bytes,
                        "activation_bytes_per_image": d.activation_bytes_per_image,
                    }
                    for d in dnns
                ],
                "devices": [
                    {
                        "id": d.id,
                        "kind": d.kind,
                        "memory_capacity": d.memory_capacity,
                        "speed_factor": d.speed_factor,
                    }
                    for d in devices
                ],
                "state": state_to_json(state),
            },
            sort_keys=True,
        )
        try:
            proc = subprocess.run(
                self.argv, input=payload, capture_output=True, text=True, check=False
            )
        except OSError as exc:
            raise IoError(f"bench command failed to start: {exc}") from exc
        if proc.returncode != 0:
            raise IoError(f"bench command exited {proc.returncode}: {proc.stderr.strip()}")
        line = proc.stdout.strip().splitlines()
        if not line:
            raise ParseError("bench command produced no output")
        try:
            reply = json.loads(line[0])
            throughput = float(reply["throughput"])
            feasible = bool(reply["feasible"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad bench reply: {line[0]!r}") from exc
        return BenchResult(
            throughput=throughput,
            feasible=feasible,
            per_device_memory={
                str(k): float(v) for k, v in reply.get("per_device_memory", {}).items()
            },
        )


def state_to_json(state: AllocationState) -> dict:
    return {
        "batch": {k: int(v) for k, v in sorted(state.batches.items())},
        "gpu_lists": [list(g) for g in state.gpu_lists],
        "cpu_lists": [list(c) for c in state.cpu_lists],
    }


def state_from_json(doc: dict) -> AllocationState:
    try:
        return AllocationState(
            batches={str(k): int(v) for k, v in doc["batch"].items()},
            gpu_lists=[[str(x) for x in g] for g in doc["gpu_lists"]],
            cpu_lists=[[str(x) for x in c] for c in doc["cpu_lists"]],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedState(f"bad allocation JSON: {exc}") from exc


def allocate_memory_fit(dnns, devices, default_batch: int, oracle,
                        workload_images: int = DEFAULT_WORKLOAD_IMAGES) -> AllocationState:
    """Worst-fit-decreasing placement with GPU priority.

    DNNs are placed heaviest-first; each goes to the least-loaded GPU if the
    oracle reports the partial state feasible there, else to the least-loaded
    CPU, else the allocation fails. Completes in exactly n placement steps.
    """
    if not devices:
        raise ValueError("at least one device required")
    gpus, cpus = _ordered_devices(devices)
    order = sorted(dnns, key=lambda d: (-d.weight_bytes, d.id))
    state = AllocationState(
        batches={},
        gpu_lists=[[] for _ in gpus],
        cpu_lists=[[] for _ in cpus],
    )
    placed = []

    def used_memory(resident: list[str]) -> float:
        by_id = {d.id: d for d in placed}
        return sum(dnn_memory(by_id[i], state.batches[i]) for i in resident)

    for dnn in order:
        placed.append(dnn)
        state.batches[dnn.id] = default_batch
        fitted = False
        for lists in (state.gpu_lists, state.cpu_lists):
            if not lists:
                continue
            target = min(range(len(lists)), key=lambda j: (used_memory(lists[j]), j))
            lists[target].append(dnn.id)
            if oracle.evaluate(placed, state, devices, workload_images).feasible:
                fitted = True
                break
            lists[target].remove(dnn.id)
        if not fitted:
            raise OutOfMemory(f"no device has enough memory for dnn {dnn.id!r}")
    return state


def neighbors(state: AllocationState, pb, devices) -> list[AllocationState]:
    """All states at edit distance 1: per DNN, |PB|-1 batch changes plus
    M-1 device moves. The input state itself is excluded."""
    pb = sorted(set(int(b) for b in pb))
    if not pb:
        raise MalformedState("permitted batch set is empty")
    for dnn_id, b in state.batches.items():
        if b not in pb:
            raise MalformedState(f"batch {b} of {dnn_id!r} not in permitted set {pb}")
    gpus, cpus = _ordered_devices(devices)
    n_devices = len(gpus) + len(cpus)
    out: list[AllocationState] = []
    ids = sorted(state.batches)
    for dnn_id in ids:
        current_b = state.batches[dnn_id]
        for b in pb:
            if b == current_b:
                continue
            nxt = state.clone()
            nxt.batches[dnn_id] = b
            out.append(nxt)
    for dnn_id in ids:
        current_slot = state.slot_of(dnn_id)
        for slot in range(n_devices):
            if slot == current_slot:
                continue
            nxt = state.clone()
            slots = nxt.device_slots()
            slots[current_slot].remove(dnn_id)
            slots[slot].append(dnn_id)
            out.append(nxt)
    return out


def refine_allocation(dnns, start: AllocationState, devices, pb, oracle,
                      max_combi: int,
                      workload_images: int = DEFAULT_WORKLOAD_IMAGES) -> AllocationState:
    """Steepest-ascent local search over the edit-distance-1 neighborhood.

    Every iteration benches the neighbors of the current state and moves to
    the strictly best improver; stops when none improves or when max_combi
    bench evaluations have been spent. Never returns a state slower than the
    start.
    """
    start_bench = oracle.evaluate(dnns, start, devices, workload_images)
    if not start_bench.feasible:
        raise InfeasibleStart("refinement requires a feasible starting allocation")
    current = start
    current_score = start_bench.throughput
    evals = 0
    while evals < max_combi:
        best_state = None
        best_score = current_score
        for nxt in neighbors(current, pb, devices):
            if evals >= max_combi:
                break
            res = oracle.evaluate(dnns, nxt, devices, workload_images)
            evals += 1
            if res.throughput > best_score:
                best_score = res.throughput
                best_state = nxt
        if best_state is None:
            break
        current = best_state
        current_score = best_score
    return current


def brute_force_allocation(dnns, devices, pb, oracle,
                           workload_images: int = DEFAULT_WORKLOAD_IMAGES) -> AllocationState:
    """Enumerate every (device, batch) assignment; return the throughput
    maximizer (first in lexicographic enumeration order on ties)."""
    pb = sorted(set(int(b) for b in pb))
    gpus, cpus = _ordered_devices(devices)
    n_devices = len(gpus) + len(cpus)
    n = len(dnns)
    if n_devices == 0 or not pb:
        raise MalformedState("need at least one device and one batch size")
    n_states = (n_devices * len(pb)) ** n
    if n_states > BRUTE_FORCE_MAX_STATES:
        raise TooLarge(f"{n_states} candidate states exceed guard {BRUTE_FORCE_MAX_STATES}")
    ids = sorted(d.id for d in dnns)
    choices = [(slot, b) for slot in range(n_devices) for b in pb]
    best_state = None
    best_score = -1.0
    for assignment in itertools.product(choices, repeat=n):
        state = AllocationState(
            batches={},
            gpu_lists=[[] for _ in gpus],
            cpu_lists=[[] for _ in cpus],
        )
        slots = state.device_slots()
        for dnn_id, (slot, b) in zip(ids, assignment):
            slots[slot].append(dnn_id)
            state.batches[dnn_id] = b
        res = oracle.evaluate(dnns, state, devices, workload_images)
        if res.throughput > best_score:
            best_score = res.throughput
            best_state = state
    assert best_state is not None
    return best_state
