"""Bi-level search driver.

The outer loop asks a sampler for a configuration, the inner loop trains
that single trial epoch by epoch until its policy stops it, then the next
configuration is drawn. Every epoch consumed, in the search or the model
selection phase, is appended to the event log exactly once.

Run-config files are plain text, one ``key = value`` per line; ``#`` starts
a comment and blank lines are ignored. Keys are the field names of
:class:`RunConfig`.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from mfhpo.benchmark import BenchSpec, default_space, make_benchmark
from mfhpo.policies import (
    POLICIES,
    Decision,
    RoberConfig,
    RungLadder,
    asha_decide,
    hyperband_schedule,
    max_fidelity_decide,
    one_epoch_decide,
    rober_decide,
    stop,
)
from mfhpo.samplers import SAMPLERS, ForestBOSampler, RandomSampler, UcbSchedule
from mfhpo.trial import COMPLETED, PAUSED, RUNNING, STOPPED, TrialState

logger = logging.getLogger(__name__)

__all__ = [
    "RunConfig",
    "RunRecord",
    "Experiment",
    "ExperimentError",
    "run_experiment",
    "read_run_config",
    "read_events",
    "TrialState",
]

# child seed streams derived from the master seed, by index
STREAM_SAMPLER, STREAM_NOISE, STREAM_MCMC, STREAM_FOREST = range(4)

_HELP = {
    "policy": f"inner-loop policy, one of {', '.join(POLICIES)}",
    "sampler": f"outer-loop sampler, one of {', '.join(SAMPLERS)}",
    "iters": "outer-loop iterations (configurations drawn)",
    "top_k": "configurations retrained to z_max by one_epoch",
    "z_max": "maximum fidelity in epochs",
    "eta": "reduction factor for sha and hyperband",
    "tau": "rober rejection threshold on the probability of being worse",
    "n_patience": "rober stops after this many epochs without improvement",
    "z_min": "rober applies the outlier rule up to min(z_min, 4)",
    "mcmc_samples": "rober posterior draws per check",
    "mcmc_burn_in": "rober burn-in steps per check",
    "predictive_noise": "rober adds observation noise to extrapolated scores",
    "resume_topk": "one_epoch resumes Top-K from their checkpoint instead of retraining",
    "seed": "master seed for every random stream",
    "regime": "benchmark regime: dominant, crossing or file",
    "noise_sigma": "std of the additive Gaussian noise on benchmark scores",
    "n_seeds": "benchmark noise streams",
    "bench_seed": "benchmark master seed (defaults to seed)",
    "bench_path": "curve-table CSV for regime=file",
    "kappa_max": "UCB kappa at the start of each cycle",
    "kappa_lambda": "UCB kappa exponential decay rate",
    "kappa_period": "UCB cycle length in proposals",
    "acq_pool": "random candidates scored per BO proposal",
    "exhaustive_acq": "score the whole search space instead of a random pool",
    "n_trees": "trees in the forest surrogate",
    "n_initial": "random proposals before the surrogate is used",
}


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    policy: str = "one_epoch"
    sampler: str = "random"
    iters: int = 200
    top_k: int = 3
    z_max: int = 100
    eta: int = 3
    tau: float = 0.9
    n_patience: int = 10
    z_min: int = 4
    mcmc_samples: int = 2000
    mcmc_burn_in: int = 1000
    predictive_noise: bool = True
    resume_topk: bool = False
    seed: int = 0
    regime: str = "dominant"
    noise_sigma: float = 0.0
    n_seeds: int = 1
    bench_seed: int | None = None
    bench_path: str | None = None
    kappa_max: float = 1.96
    kappa_lambda: float = 0.1
    kappa_period: int = 25
    acq_pool: int = 1000
    exhaustive_acq: bool = False
    n_trees: int = 100
    n_initial: int = 10

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}; choose from {SAMPLERS}")
        if self.iters < 1 or self.top_k < 1 or self.z_max < 1:
            raise ValueError("iters, top_k and z_max must be >= 1")
        if self.eta < 2:
            raise ValueError("eta must be >= 2")
        if self.policy == "hyperband" and self.z_max < self.eta:
            raise ValueError("hyperband needs z_max >= eta")

    @classmethod
    def help(cls) -> dict[str, str]:
        return dict(_HELP)

    @classmethod
    def coerce(cls, key: str, value: Any) -> Any:
        """Convert a textual value to the field's type."""
        fields = {f.name: f for f in dataclasses.fields(cls)}
        if key not in fields:
            raise KeyError(f"unknown run-config key {key!r}")
        if not isinstance(value, str):
            return value
        kind = fields[key].type
        text = value.strip()
        if text.lower() in ("none", "") and "None" in kind:
            return None
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"{key}: not a boolean: {value!r}")
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
        return text

    def replace(self, **overrides) -> "RunConfig":
        return dataclasses.replace(self, **{k: self.coerce(k, v) for k, v in overrides.items()})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def bench_spec(self) -> BenchSpec:
        return BenchSpec(
            regime=self.regime,
            z_max=self.z_max,
            noise_sigma=self.noise_sigma,
            n_seeds=self.n_seeds,
            master_seed=self.seed if self.bench_seed is None else self.bench_seed,
            source_path=self.bench_path,
        )


def read_run_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    """Parse a ``key = value`` file on top of ``base`` (defaults if omitted)."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            values[key] = RunConfig.coerce(key, value)
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return dataclasses.replace(base or RunConfig(), **values)


@dataclass
class RunRecord:
    config: dict
    events: list[dict]
    cumulative_epochs: int
    selection_epochs: int
    n_trials: int
    selected: int
    best_valid_trial: int
    best_maxfid_trial: int | None
    final_valid: float
    final_test: float
    selected_epoch: int
    wall_time: float = 0.0
    trial_configs: dict[int, str] = field(default_factory=dict)

    @property
    def policy(self) -> str:
        return self.config["policy"]

    @property
    def seed(self) -> int:
        return self.config["seed"]

    def events_jsonl(self) -> str:
        return "".join(json.dumps(e, separators=(",", ":")) + "\n" for e in self.events)

    def write_events(self, path: str | Path) -> None:
        Path(path).write_text(self.events_jsonl(), encoding="utf-8")

    def summary_line(self) -> str:
        return f"policy={self.policy} total_epochs={self.cumulative_epochs} final_test={self.final_test!r}"


def read_events(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


class Experiment:
    """State of one run: trials, peer tables, event log and epoch counter.

    ``bench`` and ``sampler`` default to what ``config`` describes; a custom
    sampler only needs ``ask()`` and ``tell(config, score)``.
    """

    def __init__(self, config: RunConfig, bench=None, sampler=None):
        self.config = config
        seeds = np.random.SeedSequence(config.seed).spawn(4)
        self.bench = bench if bench is not None else make_benchmark(config.bench_spec(), default_space())
        if self.bench.z_max < config.z_max:
            raise ExperimentError(f"benchmark z_max {self.bench.z_max} < run z_max {config.z_max}")
        self.noise_seed = int(seeds[STREAM_NOISE].generate_state(1)[0]) % self.bench.n_seeds
        self.mcmc_rng = np.random.default_rng(seeds[STREAM_MCMC])
        if sampler is None:
            sampler_rng = np.random.default_rng(seeds[STREAM_SAMPLER])
            if config.sampler == "random":
                sampler = RandomSampler(self.bench.space, sampler_rng)
            else:
                sampler = ForestBOSampler(
                    self.bench.space,
                    rng=sampler_rng,
                    forest_rng=np.random.default_rng(seeds[STREAM_FOREST]),
                    schedule=UcbSchedule(config.kappa_max, config.kappa_lambda, config.kappa_period),
                    n_trees=config.n_trees,
                    acq_pool=config.acq_pool,
                    exhaustive=config.exhaustive_acq,
                    n_initial=config.n_initial,
                )
        self.sampler = sampler
        self.trials: list[TrialState] = []
        self.events: list[dict] = []
        self.cumulative_epochs = 0
        self.selection_epochs = 0
        # valid scores of every trial at each epoch, for the rober outlier rule
        self.population: dict[int, list[float]] = {}
        self.rober = RoberConfig(
            tau=config.tau,
            n_patience=config.n_patience,
            z_min=config.z_min,
            n_samples=config.mcmc_samples,
            burn_in=config.mcmc_burn_in,
            predictive_noise=config.predictive_noise,
        )

    # -- epoch accounting -------------------------------------------------

    def _train_epoch(self, trial: TrialState) -> None:
        epoch = trial.epoch + 1
        try:
            valid, test = self.bench.query(trial.config, epoch, self.noise_seed)
        except Exception as exc:
            raise ExperimentError(f"trial {trial.trial_id}: benchmark query failed at epoch {epoch}: {exc}") from exc
        trial.observe(valid, test)
        self.cumulative_epochs += 1

    def _log(self, trial: TrialState, decision: Decision | str) -> None:
        z, valid = trial.history[-1]
        self.events.append(
            {
                "trial": trial.trial_id,
                "epoch": z,
                "valid": valid,
                "test": trial.test_history[-1][1],
                "decision": str(decision),
                "cum_epochs": self.cumulative_epochs,
            }
        )

    def _apply(self, trial: TrialState, decision: Decision) -> None:
        if not decision.is_stop:
            return
        if decision.reason == "completed":
            trial.set_status(COMPLETED, "completed")
        elif decision.reason == "budget":
            trial.set_status(PAUSED, "budget")
        else:
            trial.set_status(STOPPED, decision.reason)

    def resume_trial(self, trial: TrialState, to_epoch: int) -> TrialState:
        """Train ``trial`` from its checkpoint up to ``to_epoch``; nothing is re-consumed."""
        if trial.status in (STOPPED, COMPLETED):
            raise ExperimentError(f"trial {trial.trial_id} is {trial.status} and cannot be resumed")
        if to_epoch > self.config.z_max:
            raise ExperimentError(f"to_epoch {to_epoch} exceeds z_max {self.config.z_max}")
        if trial.epoch >= to_epoch:
            return trial
        if trial.status == PAUSED:
            trial.set_status(RUNNING)
        while trial.epoch < to_epoch:
            self._train_epoch(trial)
            if trial.epoch >= self.config.z_max:
                decision = stop("completed")
                self._apply(trial, decision)
            else:
                decision = "continue"
            self._log(trial, decision)
        if trial.status == RUNNING:
            trial.set_status(PAUSED, "budget")
        return trial

    # -- search phase ------------------------------------------------------

    def _new_trial(self) -> TrialState:
        trial = TrialState(len(self.trials), self.sampler.ask())
        self.trials.append(trial)
        return trial

    def _run_trial(self, trial: TrialState, decide) -> None:
        while trial.status == RUNNING:
            self._train_epoch(trial)
            z = trial.epoch
            self.population.setdefault(z, []).append(trial.last_valid)
            decision = decide(trial)
            if not decision.is_stop and z >= self.config.z_max:
                raise ExperimentError(f"policy continued trial {trial.trial_id} past z_max")
            self._apply(trial, decision)
            self._log(trial, decision)
        self.sampler.tell(trial.config, trial.last_valid)

    def _incumbent(self) -> float | None:
        scores = [v for t in self.trials if t.status != RUNNING for _, v in t.history]
        return max(scores) if scores else None

    def search(self) -> None:
        cfg = self.config
        z_max = cfg.z_max
        if cfg.policy == "max_fidelity":
            for _ in range(cfg.iters):
                self._run_trial(self._new_trial(), lambda t: max_fidelity_decide(t, z_max))
        elif cfg.policy == "one_epoch":
            for _ in range(cfg.iters):
                self._run_trial(self._new_trial(), lambda t: one_epoch_decide(t, z_max))
        elif cfg.policy == "sha":
            ladder = RungLadder(z_max, cfg.eta)
            for _ in range(cfg.iters):
                self._run_trial(self._new_trial(), lambda t: asha_decide(t, ladder))
        elif cfg.policy == "hyperband":
            brackets = hyperband_schedule(z_max, cfg.eta)
            remaining = cfg.iters
            while remaining > 0:
                for bracket in brackets:
                    if remaining == 0:
                        break
                    ladder = RungLadder(z_max, cfg.eta, bracket.start_epoch)
                    for _ in range(min(bracket.n_configs, remaining)):
                        self._run_trial(self._new_trial(), lambda t: asha_decide(t, ladder))
                        remaining -= 1
        elif cfg.policy == "rober":
            for _ in range(cfg.iters):
                y_star = self._incumbent()
                trial = self._new_trial()
                self._run_trial(
                    trial,
                    lambda t: rober_decide(
                        t, self.rober, self.population.get(t.epoch, []), y_star, z_max, self.mcmc_rng
                    ),
                )

    # -- model selection ---------------------------------------------------

    def model_select(self) -> TrialState:
        cfg = self.config
        z_max = cfg.z_max
        if cfg.policy == "one_epoch":
            k = cfg.top_k
            if k > len(self.trials):
                logger.warning("top_k=%d > %d trials; clamping", k, len(self.trials))
                k = len(self.trials)
            ranked = sorted(self.trials, key=lambda t: (-t.history[0][1], t.trial_id))
            finalists = ranked[:k]
            for trial in finalists:
                if trial.status == COMPLETED:
                    continue
                before = self.cumulative_epochs
                if not cfg.resume_topk:
                    trial.reset()
                self.resume_trial(trial, z_max)
                self.selection_epochs += self.cumulative_epochs - before
            return max(finalists, key=lambda t: (t.last_valid, -t.trial_id))
        completed = [t for t in self.trials if t.epoch >= z_max]
        pool = completed if completed else self.trials
        return max(pool, key=lambda t: (t.last_valid, -t.trial_id))

    def run(self) -> RunRecord:
        start = time.perf_counter()
        self.search()
        selected = self.model_select()
        best_valid = max(self.trials, key=lambda t: (t.last_valid, -t.trial_id))
        completed = [t for t in self.trials if t.epoch >= self.config.z_max]
        best_maxfid = max(completed, key=lambda t: (t.last_valid, -t.trial_id)) if completed else None
        if self.cumulative_epochs != len(self.events):
            raise ExperimentError("epoch counter out of sync with the event log")
        return RunRecord(
            config=self.config.to_dict(),
            events=self.events,
            cumulative_epochs=self.cumulative_epochs,
            selection_epochs=self.selection_epochs,
            n_trials=len(self.trials),
            selected=selected.trial_id,
            best_valid_trial=best_valid.trial_id,
            best_maxfid_trial=None if best_maxfid is None else best_maxfid.trial_id,
            final_valid=selected.last_valid,
            final_test=selected.last_test,
            selected_epoch=selected.epoch,
            wall_time=time.perf_counter() - start,
            trial_configs={t.trial_id: self.bench.config_id(t.config) for t in self.trials},
        )


def run_experiment(config: RunConfig, bench=None, sampler=None) -> RunRecord:
    return Experiment(config, bench, sampler).run()
