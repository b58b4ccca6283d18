from __future__ import annotations

from dataclasses import dataclass, field

from mfhpo.benchmark import HpConfig

RUNNING = "running"
PAUSED = "paused"
STOPPED = "stopped"
COMPLETED = "completed"

_ALLOWED = {
    RUNNING: {RUNNING, PAUSED, STOPPED, COMPLETED},
    PAUSED: {RUNNING, PAUSED},
    STOPPED: set(),
    COMPLETED: set(),
}


@dataclass
class TrialState:
    """Training progress of one configuration; the checkpoint is implicit in ``history``."""

    trial_id: int
    config: HpConfig
    history: list[tuple[int, float]] = field(default_factory=list)
    test_history: list[tuple[int, float]] = field(default_factory=list)
    status: str = RUNNING
    stop_reason: str | None = None

    @property
    def checkpoint_epoch(self) -> int:
        return len(self.history)

    @property
    def epoch(self) -> int:
        return len(self.history)

    @property
    def scores(self) -> list[float]:
        return [v for _, v in self.history]

    @property
    def last_valid(self) -> float:
        return self.history[-1][1]

    @property
    def last_test(self) -> float:
        return self.test_history[-1][1]

    def observe(self, valid: float, test: float) -> None:
        if self.status != RUNNING:
            raise RuntimeError(f"trial {self.trial_id} is {self.status}, cannot train")
        z = len(self.history) + 1
        self.history.append((z, valid))
        self.test_history.append((z, test))

    def set_status(self, status: str, reason: str | None = None) -> None:
        if status not in _ALLOWED[self.status]:
            raise RuntimeError(f"trial {self.trial_id}: illegal transition {self.status} -> {status}")
        self.status = status
        self.stop_reason = reason

    def reset(self) -> None:
        """Drop all progress so the configuration can be retrained from scratch."""
        if self.status not in (RUNNING, PAUSED):
            raise RuntimeError(f"trial {self.trial_id} is {self.status}, cannot retrain")
        self.history.clear()
        self.test_history.clear()
