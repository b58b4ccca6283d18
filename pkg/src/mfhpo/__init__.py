"""Multi-fidelity hyperparameter optimisation with early-discarding policies."""
from mfhpo.analysis import rank_matrix, rank_stability, speedup, trajectory
from mfhpo.benchmark import (
    BenchSpec,
    CurveTable,
    HpConfig,
    HpSpace,
    SyntheticBenchmark,
    default_space,
    load_curve_table,
    make_benchmark,
    sample_config,
)
from mfhpo.curve_model import (
    PartialCurve,
    fit_least_squares,
    mmf4_eval,
    posterior_sample,
    prob_worse,
)
from mfhpo.engine import Experiment, RunConfig, RunRecord, run_experiment
from mfhpo.policies import RoberConfig, RungLadder, hyperband_schedule

__version__ = "0.1.0"
