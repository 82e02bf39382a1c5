"""Bayesian optimization of composite objectives.

Objectives of the form ``g(x) = h(f_1(x), ..., f_M(x))`` where the
constituents ``f_i`` are expensive black boxes and the composition ``h`` is
known and cheap.  Each constituent gets an independent Gaussian process
surrogate; composite expected-improvement and upper-confidence-bound
acquisitions drive the search, with single-GP vanilla EI/UCB baselines, a
benchmark harness and a CLI.
"""

from .acquisition import (
    CompositionFn,
    McConfig,
    UcbSchedule,
    c_ei,
    c_ucb,
    decay,
    vanilla_ei,
    vanilla_ucb,
)
from .gp import (
    FitConfig,
    GaussianProcess,
    KernelHyperparams,
    PosteriorSummary,
    build_gp,
    build_kernel_matrix,
    fit,
    kernel_eval,
    log_marginal_likelihood,
    posterior,
    posterior_batch,
)
from .loop import (
    BoRunResult,
    BoSettings,
    Domain,
    EvaluationRecord,
    OptimizerSettings,
    initial_design,
    maximize_acquisition,
    run_bo,
)
from .objectives import (
    CompositeObjective,
    DemandRegionParams,
    ackley,
    calibrate_g_star,
    ccdf_gamma,
    correlated_demand,
    dixon_price,
    get_task,
    identical_price,
    independent_demand,
    langermann,
    task_names,
)
from .benchmark import (
    AggregateCurve,
    ExperimentConfig,
    RegretTrace,
    aggregate,
    regret_trace,
    run_experiment,
)

__version__ = "0.1.0"
