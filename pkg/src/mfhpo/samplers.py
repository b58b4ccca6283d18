"""Outer-loop configuration samplers.

``RandomSampler`` ignores feedback. ``ForestBOSampler`` fits a random forest
with randomised ("best random") splits on log-transformed, min-max scaled
scores and maximises a UCB acquisition whose κ decays exponentially and
restarts every ``period`` proposals.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.ensemble import ExtraTreesRegressor

from mfhpo.benchmark import HpConfig, HpSpace, sample_config

__all__ = [
    "EPSILON",
    "transform_objective",
    "ForestSurrogate",
    "fit_forest",
    "predict",
    "UcbSchedule",
    "ucb",
    "propose",
    "RandomSampler",
    "ForestBOSampler",
    "SAMPLERS",
]

SAMPLERS = ("random", "forest_bo")
EPSILON = 1e-3


def transform_objective(raw_scores, eps: float = EPSILON) -> np.ndarray:
    """Min-max scale to [0, 1], then ``log(y + eps)``; constant input maps to 0.5."""
    y = np.asarray(raw_scores, dtype=float)
    if y.size == 0:
        raise ValueError("need at least one score")
    if not np.all(np.isfinite(y)):
        raise ValueError("scores must be finite")
    lo, hi = y.min(), y.max()
    scaled = np.full_like(y, 0.5) if hi == lo else (y - lo) / (hi - lo)
    return np.log(scaled + eps)


def encode(configs) -> np.ndarray:
    """Ordinal encoding: one float column per dimension holding the choice index."""
    return np.array([c.values for c in configs], dtype=float)


@dataclass
class ForestSurrogate:
    n_trees: int = 100
    model: ExtraTreesRegressor | None = None
    n_train: int = 0

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        """Per-tree predictions, shape ``(n_trees, len(X))``."""
        if self.model is None:
            raise RuntimeError("surrogate is not fitted")
        return np.stack([t.predict(X) for t in self.model.estimators_])

    def predict(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.model is None:
            return np.zeros(len(X)), np.ones(len(X))
        preds = self.tree_predictions(X)
        return preds.mean(axis=0), preds.std(axis=0)


def fit_forest(
    configs,
    targets,
    rng: np.random.Generator | int | None = None,
    n_trees: int = 100,
) -> ForestSurrogate:
    """Bootstrap forest whose nodes pick the best of one random split per feature.

    With fewer than two points the returned surrogate predicts the prior
    ``(0, 1)`` everywhere.
    """
    targets = np.asarray(targets, dtype=float)
    if len(targets) < 2:
        return ForestSurrogate(n_trees, None, len(targets))
    rng = np.random.default_rng(rng)
    model = ExtraTreesRegressor(
        n_estimators=n_trees,
        max_features=None,
        min_samples_leaf=1,
        max_depth=None,
        bootstrap=True,
        random_state=int(rng.integers(2**31 - 1)),
    )
    model.fit(encode(configs), targets)
    return ForestSurrogate(n_trees, model, len(targets))


def predict(surrogate: ForestSurrogate, config: HpConfig) -> tuple[float, float]:
    mu, sigma = surrogate.predict(encode([config]))
    return float(mu[0]), float(sigma[0])


@dataclass(frozen=True)
class UcbSchedule:
    kappa_max: float = 1.96
    decay_rate: float = 0.1
    period: int = 25

    def __post_init__(self):
        if self.kappa_max <= 0 or self.decay_rate <= 0 or self.period < 1:
            raise ValueError("kappa_max, decay_rate must be > 0 and period >= 1")

    def kappa(self, i: int) -> float:
        return self.kappa_max * float(np.exp(-self.decay_rate * (i % self.period)))


def ucb(mu, sigma, kappa: float) -> np.ndarray:
    return np.asarray(mu) + kappa * np.asarray(sigma)


def propose(surrogate: ForestSurrogate, schedule: UcbSchedule, iteration: int, pool) -> HpConfig:
    """Pool member maximising ``mu + kappa(iteration) * sigma``; first one wins ties."""
    pool = list(pool)
    if not pool:
        raise ValueError("empty candidate pool")
    mu, sigma = surrogate.predict(encode(pool))
    return pool[int(np.argmax(ucb(mu, sigma, schedule.kappa(iteration))))]


class RandomSampler:
    def __init__(self, space: HpSpace, rng: np.random.Generator | int | None = None):
        self.space = space
        self.rng = np.random.default_rng(rng)

    def ask(self) -> HpConfig:
        return sample_config(self.space, self.rng)

    def tell(self, config: HpConfig, score: float) -> None:
        pass


@dataclass
class ForestBOSampler:
    space: HpSpace
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    forest_rng: np.random.Generator = field(default_factory=np.random.default_rng)
    schedule: UcbSchedule = field(default_factory=UcbSchedule)
    n_trees: int = 100
    acq_pool: int = 1000
    exhaustive: bool = False
    n_initial: int = 10
    history: list[tuple[HpConfig, float]] = field(default_factory=list)
    n_proposals: int = 0

    def ask(self) -> HpConfig:
        if len(self.history) < max(self.n_initial, 2):
            return sample_config(self.space, self.rng)
        configs = [c for c, _ in self.history]
        y = transform_objective([s for _, s in self.history])
        surrogate = fit_forest(configs, y, self.forest_rng, self.n_trees)
        if self.exhaustive:
            pool = list(self.space.all_configs())
        else:
            pool = [sample_config(self.space, self.rng) for _ in range(self.acq_pool)]
        config = propose(surrogate, self.schedule, self.n_proposals, pool)
        self.n_proposals += 1
        return config

    def tell(self, config: HpConfig, score: float) -> None:
        self.history.append((config, float(score)))
