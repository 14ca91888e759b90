"""Post-hoc ensembling toolkit: model libraries, budgeted ensemble selection,
successive-halving trial scheduling, and CPU/GPU inference placement."""

from .allocation import (
    AllocationState,
    BenchResult,
    CommandOracle,
    DeviceSpec,
    SimulatorOracle,
    allocate_memory_fit,
    brute_force_allocation,
    neighbors,
    refine_allocation,
    simulate_bench,
)
from .combiners import (
    MetricValue,
    average_combine,
    cross_entropy,
    error_rate,
    macro_f1,
    majority_vote_combine,
    weighted_average_combine,
)
from .errors import ForgeError
from .hpo import (
    HyperparameterSpace,
    SchedulerConfig,
    TrialRecord,
    export_library,
    run_asha,
    run_random_search,
    sample,
    synthetic_objective,
)
from .library import (
    ModelLibrary,
    ModelRecord,
    libraries_equal,
    load_library,
    prune_library,
    save_library,
)
from .selection import (
    BudgetSpec,
    EnsembleSolution,
    PenaltyParams,
    brute_force_best,
    budget_sweep,
    forward_greedy_fixed_size,
    forward_greedy_with_replacement,
    normalized_cost,
    penalty,
    scalarized_score,
    smobf_greedy,
    smobf_multi_w,
)

__version__ = "0.1.0"
