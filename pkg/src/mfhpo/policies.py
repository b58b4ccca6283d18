"""Inner-loop early-discarding policies.

Every policy looks at a trial right after it finished an epoch and answers
continue or stop. Peer information (rung tables, per-epoch populations, the
incumbent score) is passed in explicitly; only :func:`asha_decide` writes to
its ladder.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from mfhpo.curve_model import (
    N_PARAMS,
    FitError,
    PartialCurve,
    fit_least_squares,
    posterior_sample,
    prob_worse,
)
from mfhpo.trial import TrialState

__all__ = [
    "Decision",
    "CONTINUE",
    "stop",
    "RungLadder",
    "Bracket",
    "RoberConfig",
    "max_fidelity_decide",
    "one_epoch_decide",
    "asha_decide",
    "hyperband_schedule",
    "iqr_lower_fence",
    "rober_decide",
    "POLICIES",
]

POLICIES = ("max_fidelity", "one_epoch", "sha", "hyperband", "rober")
REASONS = ("budget", "rung_cut", "outlier", "extrapolation", "patience", "completed")


@dataclass(frozen=True)
class Decision:
    kind: str
    reason: str | None = None

    def __post_init__(self):
        if self.kind not in ("continue", "stop"):
            raise ValueError(f"unknown decision kind {self.kind!r}")
        if self.kind == "stop" and self.reason not in REASONS:
            raise ValueError(f"stop needs a reason in {REASONS}")

    @property
    def is_stop(self) -> bool:
        return self.kind == "stop"

    def __str__(self) -> str:
        return self.kind if self.reason is None else f"{self.kind}:{self.reason}"


CONTINUE = Decision("continue")


def stop(reason: str) -> Decision:
    return Decision("stop", reason)


def max_fidelity_decide(trial: TrialState, z_max: int) -> Decision:
    if trial.epoch >= z_max:
        return stop("completed")
    return CONTINUE


def one_epoch_decide(trial: TrialState, z_max: int | None = None) -> Decision:
    """Search-phase rule of the 1-Epoch baseline: always stop after one epoch."""
    if z_max is not None and trial.epoch >= z_max:
        return stop("completed")
    return stop("budget")


class RungLadder:
    """Rung epochs ``min_fidelity * eta**k <= z_max`` with their score tables.

    Each table keeps ``(trial_id, score)`` in arrival order, which is also
    the tie-break order.
    """

    def __init__(self, z_max: int, eta: int = 3, min_fidelity: int = 1):
        if eta < 2:
            raise ValueError("eta must be >= 2")
        if not 1 <= min_fidelity <= z_max:
            raise ValueError("min_fidelity must be in 1..z_max")
        self.eta = eta
        self.z_max = z_max
        self.rungs: list[int] = []
        r = min_fidelity
        while r <= z_max:
            self.rungs.append(r)
            r *= eta
        self.tables: dict[int, list[tuple[int, float]]] = {r: [] for r in self.rungs}
        self.promoted: dict[int, int] = {r: 0 for r in self.rungs}

    def record(self, rung: int, trial_id: int, score: float) -> tuple[int, int]:
        """Add a score; returns ``(rank, n)`` with rank 0 for the best so far."""
        table = self.tables[rung]
        rank = sum(1 for _, s in table if s >= score)
        table.append((trial_id, score))
        return rank, len(table)


def asha_decide(trial: TrialState, ladder: RungLadder) -> Decision:
    """Asynchronous successive halving.

    At a rung the trial's score is recorded and compared with every score
    recorded there so far; it continues iff it ranks in the top
    ``ceil(n / eta)`` of those ``n`` scores.
    """
    z = trial.epoch
    if z >= ladder.z_max:
        return stop("completed")
    if z not in ladder.tables:
        return CONTINUE
    rank, n = ladder.record(z, trial.trial_id, trial.last_valid)
    if rank < math.ceil(n / ladder.eta):
        ladder.promoted[z] += 1
        return CONTINUE
    return stop("rung_cut")


@dataclass(frozen=True)
class Bracket:
    s: int
    n_configs: int
    min_fidelity: float

    @property
    def start_epoch(self) -> int:
        return max(1, round(self.min_fidelity))


def hyperband_schedule(z_max: int, eta: int = 3) -> list[Bracket]:
    """Brackets ``s = s_max..0`` with ``ceil((s_max+1)/(s+1)) * eta**s`` configs each."""
    if z_max < eta:
        raise ValueError("z_max must be >= eta")
    s_max = 0
    while eta ** (s_max + 1) <= z_max:
        s_max += 1
    return [
        Bracket(s, math.ceil((s_max + 1) / (s + 1)) * eta**s, z_max / eta**s)
        for s in range(s_max, -1, -1)
    ]


@dataclass(frozen=True)
class RoberConfig:
    tau: float = 0.9
    n_patience: int = 10
    z_min: int = 4
    check_schedule: Callable[[int], bool] | None = None
    n_samples: int = 2000
    burn_in: int = 1000
    predictive_noise: bool = True

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError("tau must be in (0, 1]")
        if self.z_min < 1:
            raise ValueError("z_min must be >= 1")
        if self.n_patience < 1:
            raise ValueError("n_patience must be >= 1")

    def checks_at(self, z: int) -> bool:
        return True if self.check_schedule is None else bool(self.check_schedule(z))


def iqr_lower_fence(population: Sequence[float]) -> float:
    """``Q1 - 1.5 (Q3 - Q1)`` with linearly interpolated quartiles."""
    q1, q3 = np.percentile(np.asarray(population, dtype=float), [25, 75], method="linear")
    return float(q1 - 1.5 * (q3 - q1))


def _stagnated(scores: Sequence[float], n_patience: int) -> bool:
    best_at = int(np.argmax(scores)) + 1
    return len(scores) - best_at >= n_patience


def rober_decide(
    trial: TrialState,
    cfg: RoberConfig,
    population_scores_at_z: Sequence[float],
    y_star: float | None,
    z_max: int,
    rng: np.random.Generator | int | None = None,
) -> Decision:
    """Robust Bayesian early rejection for one trial after its latest epoch.

    Checks, in order: end of budget, stagnation, the box-plot outlier rule
    on the first ``min(z_min, 4)`` epochs, then the extrapolated probability
    that the final score ends below ``y_star``. Any numerical failure in the
    fit keeps the trial alive.
    """
    scores = trial.scores
    z = len(scores)
    if z == 0:
        raise ValueError("trial has no observations")
    if z >= z_max:
        return stop("completed")
    if _stagnated(scores, cfg.n_patience):
        return stop("patience")
    if not cfg.checks_at(z):
        return CONTINUE
    y_z = scores[-1]
    if z <= min(cfg.z_min, N_PARAMS):
        if len(population_scores_at_z) > 0 and y_z < iqr_lower_fence(population_scores_at_z):
            return stop("outlier")
    if z < N_PARAMS or y_star is None or not np.isfinite(y_star):
        return CONTINUE
    rng = np.random.default_rng(rng)
    curve = PartialCurve.from_scores(scores, z_max, y_star)
    try:
        fit = fit_least_squares(curve)
        samples = posterior_sample(curve, fit.theta, cfg.n_samples, rng, burn_in=cfg.burn_in)
    except (FitError, FloatingPointError, np.linalg.LinAlgError):
        return CONTINUE
    p = prob_worse(samples, z_max, y_star, rng, predictive_noise=cfg.predictive_noise)
    if cfg.tau <= p:
        return stop("extrapolation")
    return CONTINUE
