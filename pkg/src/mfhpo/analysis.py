"""Diagnostics computed from event logs and benchmarks.

Trajectories track the best test score observed after each consumed
epoch, speedups compare epoch budgets, and rank matrices show how early the
final ordering of a set of configurations appears.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Trajectory",
    "RankMatrix",
    "trajectory",
    "running_max",
    "speedup",
    "rank_matrix",
    "rank_stability",
    "spearman",
    "mean_stderr",
    "summarize",
    "write_trajectory_csv",
    "write_rank_matrix_csv",
    "write_summary_csv",
]


@dataclass(frozen=True)
class Trajectory:
    cum_epochs: np.ndarray
    best_test: np.ndarray
    policy: str = ""
    seed: int = 0

    def __len__(self) -> int:
        return len(self.cum_epochs)

    @property
    def final(self) -> float:
        return float(self.best_test[-1])


def _events_of(record) -> list[dict]:
    return record if isinstance(record, list) else record.events


def trajectory(record, policy: str | None = None, seed: int | None = None) -> Trajectory:
    """Best test score observed so far, after every epoch event.

    ``record`` is a :class:`~mfhpo.engine.RunRecord` or a list of event dicts.
    """
    events = _events_of(record)
    if not events:
        raise ValueError("empty event log")
    cum = np.array([e["cum_epochs"] for e in events], dtype=int)
    best = running_max([e["test"] for e in events])
    if policy is None:
        policy = getattr(record, "policy", "")
    if seed is None:
        seed = getattr(record, "seed", 0)
    return Trajectory(cum, best, policy, seed)


def running_max(values: Sequence[float]) -> np.ndarray:
    return np.maximum.accumulate(np.asarray(values, dtype=float))


def _total(record) -> int:
    if isinstance(record, (int, np.integer)):
        return int(record)
    if isinstance(record, list):
        return int(record[-1]["cum_epochs"])
    return int(record.cumulative_epochs)


def speedup(record_a, record_b) -> float:
    """Epochs of ``record_b`` (the max-fidelity reference) per epoch of ``record_a``."""
    return _total(record_b) / _total(record_a)


@dataclass(frozen=True)
class RankMatrix:
    """Ranks (1 = best) with rows ordered by final rank and one column per epoch."""

    ranks: np.ndarray  # (n_configs, z_max)
    config_ids: tuple[str, ...]

    @property
    def n_configs(self) -> int:
        return self.ranks.shape[0]

    @property
    def z_max(self) -> int:
        return self.ranks.shape[1]

    def column(self, z: int) -> np.ndarray:
        return self.ranks[:, z - 1]


def _ranks(scores: np.ndarray) -> np.ndarray:
    # best score gets rank 1; ties go to the lower config index
    order = np.lexsort((np.arange(len(scores)), -scores))
    ranks = np.empty(len(scores), dtype=int)
    ranks[order] = np.arange(1, len(scores) + 1)
    return ranks


def rank_matrix(benchmark, configs, seed: int = 0) -> RankMatrix:
    """Per-epoch validation ranks of ``configs``.

    Ties are broken by config id, so every column is a permutation.
    """
    configs = list(configs)
    ids = [benchmark.config_id(c) for c in configs]
    order = sorted(range(len(configs)), key=lambda i: ids[i])
    ids = [ids[i] for i in order]
    valid = np.array([benchmark.curve(configs[i], seed).valid for i in order])
    ranks = np.column_stack([_ranks(valid[:, z]) for z in range(valid.shape[1])])
    rows = np.argsort(ranks[:, -1], kind="stable")
    return RankMatrix(ranks[rows], tuple(ids[i] for i in rows))


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Spearman correlation of two tie-free rank vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(a)
    if n < 2:
        return 1.0
    d = a - b
    return float(1.0 - 6.0 * (d @ d) / (n * (n * n - 1)))


def rank_stability(matrix: RankMatrix, z: int) -> float:
    """Spearman correlation between the ranks at epoch ``z`` and at ``z_max``."""
    if not 1 <= z <= matrix.z_max:
        raise ValueError(f"z must be in 1..{matrix.z_max}")
    return spearman(matrix.column(z), matrix.column(matrix.z_max))


def mean_stderr(values: Iterable[float]) -> tuple[float, float]:
    v = np.asarray(list(values), dtype=float)
    if len(v) < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v)))


def summarize(records) -> list[dict]:
    """Per-policy mean and standard error of final test score and total epochs.

    ``speedup`` is relative to the mean max-fidelity budget when those runs
    are part of ``records``, otherwise ``None``.
    """
    by_policy: dict[str, list] = {}
    for r in records:
        by_policy.setdefault(r.policy, []).append(r)
    ref = None
    if "max_fidelity" in by_policy:
        ref = float(np.mean([r.cumulative_epochs for r in by_policy["max_fidelity"]]))
    rows = []
    for policy, recs in by_policy.items():
        mean, se = mean_stderr(r.final_test for r in recs)
        total = float(np.mean([r.cumulative_epochs for r in recs]))
        rows.append(
            {
                "policy": policy,
                "final_test_mean": mean,
                "final_test_stderr": se,
                "total_epochs": total,
                "speedup": None if ref is None else ref / total,
            }
        )
    return rows


def write_trajectory_csv(trajectories: Iterable[Trajectory], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("cum_epochs", "best_test", "policy", "seed"))
        for t in trajectories:
            for c, b in zip(t.cum_epochs, t.best_test):
                w.writerow((int(c), repr(float(b)), t.policy, t.seed))


def write_rank_matrix_csv(matrix: RankMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("config_id", "epoch", "rank"))
        for cid, row in zip(matrix.config_ids, matrix.ranks):
            for z, r in enumerate(row, start=1):
                w.writerow((cid, z, int(r)))


def write_summary_csv(rows: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("policy", "final_test_mean", "final_test_stderr", "total_epochs", "speedup"))
        for r in rows:
            sp = "" if r["speedup"] is None else repr(float(r["speedup"]))
            w.writerow(
                (r["policy"], repr(r["final_test_mean"]), repr(r["final_test_stderr"]), repr(r["total_epochs"]), sp)
            )
