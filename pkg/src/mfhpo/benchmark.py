"""Search spaces and deterministic learning-curve benchmarks.

Two kinds of benchmark handles share one query surface:

* :class:`SyntheticBenchmark` draws ground-truth mmf4 parameters for each
  configuration from a stable hash, so a configuration always produces the
  same curve for a given ``master_seed``.
* :class:`CurveTable` serves curves stored in a CSV file with header
  ``config_id,seed,epoch,valid,test``.

All scores are "larger is better".
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from mfhpo.curve_model import mmf4_eval

__all__ = [
    "HpSpace",
    "HpConfig",
    "LearningCurve",
    "BenchSpec",
    "SyntheticBenchmark",
    "CurveTable",
    "CurveTableError",
    "default_space",
    "sample_config",
    "fnv1a_64",
    "make_benchmark",
    "load_curve_table",
    "export_curve_table",
    "CSV_HEADER",
]

CSV_HEADER = ("config_id", "seed", "epoch", "valid", "test")

# ground-truth parameter ranges of the synthetic curves
THETA0_RANGE = (0.1, 0.5)
THETA1_RANGE = (1.0, 50.0)
THETA2_RANGE = (0.5, 1.0)
THETA3_RANGE = (0.5, 3.0)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(ints: Iterable[int]) -> int:
    """64-bit FNV-1a over the little-endian 8-byte encoding of each integer."""
    h = _FNV_OFFSET
    for v in ints:
        for byte in (int(v) & _MASK64).to_bytes(8, "little"):
            h ^= byte
            h = (h * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class HpSpace:
    """Ordered categorical dimensions ``(name, choices)``."""

    dimensions: tuple[tuple[str, tuple], ...]

    def __post_init__(self):
        dims = tuple((str(name), tuple(choices)) for name, choices in self.dimensions)
        names = [name for name, _ in dims]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dimension names in {names}")
        for name, choices in dims:
            if len(choices) < 2:
                raise ValueError(f"dimension {name!r} needs at least 2 choices")
        object.__setattr__(self, "dimensions", dims)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.dimensions]

    @property
    def arities(self) -> list[int]:
        return [len(choices) for _, choices in self.dimensions]

    @property
    def size(self) -> int:
        return math.prod(self.arities)

    def __len__(self) -> int:
        return len(self.dimensions)

    def validate(self, config: "HpConfig") -> None:
        if len(config.values) != len(self.dimensions):
            raise ValueError(
                f"config has {len(config.values)} indices, space has {len(self.dimensions)} dimensions"
            )
        for idx, (name, choices) in zip(config.values, self.dimensions):
            if not 0 <= idx < len(choices):
                raise ValueError(f"index {idx} out of range for dimension {name!r}")

    def decode(self, config: "HpConfig") -> dict:
        """Map a config to ``{name: choice}``."""
        self.validate(config)
        return {name: choices[i] for i, (name, choices) in zip(config.values, self.dimensions)}

    def all_configs(self) -> Iterable["HpConfig"]:
        for values in itertools.product(*(range(a) for a in self.arities)):
            yield HpConfig(values)


@dataclass(frozen=True, order=True)
class HpConfig:
    """One choice index per dimension of an :class:`HpSpace`."""

    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))

    @property
    def key(self) -> str:
        return "-".join(str(v) for v in self.values)


def default_space() -> HpSpace:
    """The 9-dimensional tabular search space of the HPOBench MLP benchmarks."""
    return HpSpace(
        (
            ("initial_lr", (0.0005, 0.001, 0.005, 0.01, 0.05, 0.1)),
            ("batch_size", (8, 16, 32, 64)),
            ("lr_schedule", ("cosine", "fix")),
            ("activation_fn_1", ("relu", "tanh")),
            ("activation_fn_2", ("relu", "tanh")),
            ("n_units_1", (16, 32, 64, 128, 256, 512)),
            ("n_units_2", (16, 32, 64, 128, 256, 512)),
            ("dropout_1", (0.0, 0.3, 0.6)),
            ("dropout_2", (0.0, 0.3, 0.6)),
        )
    )


def sample_config(space: HpSpace, rng: np.random.Generator) -> HpConfig:
    """Uniform draw from the Cartesian product of ``space``."""
    return HpConfig(tuple(int(rng.integers(a)) for a in space.arities))


@dataclass(frozen=True)
class LearningCurve:
    config_id: str
    seed: int
    valid: np.ndarray
    test: np.ndarray

    @property
    def z_max(self) -> int:
        return len(self.valid)

    @property
    def epochs(self) -> np.ndarray:
        return np.arange(1, self.z_max + 1)


@dataclass(frozen=True)
class BenchSpec:
    regime: str = "dominant"
    z_max: int = 100
    noise_sigma: float = 0.0
    n_seeds: int = 1
    master_seed: int = 0
    source_path: str | None = None

    def __post_init__(self):
        if self.regime not in ("dominant", "crossing", "file"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.z_max < 1:
            raise ValueError("z_max must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if self.regime == "file" and not self.source_path:
            raise ValueError("regime 'file' needs source_path")


class _Benchmark:
    space: HpSpace
    z_max: int
    n_seeds: int

    def config_id(self, config: HpConfig) -> str:
        raise NotImplementedError

    def curve(self, config: HpConfig, seed: int = 0) -> LearningCurve:
        raise NotImplementedError

    def query(self, config: HpConfig, epoch: int, seed: int = 0) -> tuple[float, float]:
        """``(valid, test)`` objective of ``config`` after ``epoch`` epochs."""
        if not 1 <= epoch <= self.z_max:
            raise ValueError(f"epoch {epoch} outside 1..{self.z_max}")
        c = self.curve(config, seed)
        return float(c.valid[epoch - 1]), float(c.test[epoch - 1])


class SyntheticBenchmark(_Benchmark):
    """mmf4 ground-truth curves with additive Gaussian noise.

    In the ``dominant`` regime all configurations share Θ1 and Θ3 while Θ0
    and Θ2 both increase with a single latent quality ``u``; since f is a
    convex combination of Θ0 and Θ2 with weights that do not depend on the
    configuration, noiseless curves never cross. In the ``crossing`` regime
    every parameter is drawn independently.
    """

    def __init__(self, spec: BenchSpec, space: HpSpace | None = None):
        if spec.regime == "file":
            raise ValueError("use load_curve_table for regime 'file'")
        self.spec = spec
        self.space = space if space is not None else default_space()
        self.z_max = spec.z_max
        self.n_seeds = spec.n_seeds
        shared = np.random.default_rng(fnv1a_64((spec.master_seed, 0x5EED)))
        self._shared_theta1 = float(shared.uniform(*THETA1_RANGE))
        self._shared_theta3 = float(shared.uniform(*THETA3_RANGE))

    def config_id(self, config: HpConfig) -> str:
        return config.key

    def _hash(self, config: HpConfig) -> int:
        self.space.validate(config)
        return fnv1a_64((self.spec.master_seed, *config.values))

    def theta(self, config: HpConfig) -> np.ndarray:
        """Ground-truth Θ of ``config``."""
        rng = np.random.default_rng(self._hash(config))
        if self.spec.regime == "dominant":
            # density 2(1 - u): good configurations are rare
            u = 1.0 - math.sqrt(rng.random())
            return np.array(
                [
                    THETA0_RANGE[0] + u * (THETA0_RANGE[1] - THETA0_RANGE[0]),
                    self._shared_theta1,
                    THETA2_RANGE[0] + u * (THETA2_RANGE[1] - THETA2_RANGE[0]),
                    self._shared_theta3,
                ]
            )
        return np.array(
            [
                rng.uniform(*THETA0_RANGE),
                rng.uniform(*THETA1_RANGE),
                rng.uniform(*THETA2_RANGE),
                rng.uniform(*THETA3_RANGE),
            ]
        )

    def curve(self, config: HpConfig, seed: int = 0) -> LearningCurve:
        if not 0 <= seed < self.n_seeds:
            raise ValueError(f"seed {seed} outside 0..{self.n_seeds - 1}")
        h = self._hash(config)
        zs = np.arange(1, self.z_max + 1, dtype=float)
        mean = mmf4_eval(self.theta(config), zs)
        valid, test = mean.copy(), mean.copy()
        if self.spec.noise_sigma > 0:
            rng = np.random.default_rng([h, seed])
            valid += rng.normal(0.0, self.spec.noise_sigma, self.z_max)
            test += rng.normal(0.0, self.spec.noise_sigma, self.z_max)
        valid.flags.writeable = False
        test.flags.writeable = False
        return LearningCurve(config.key, seed, valid, test)


class CurveTableError(ValueError):
    pass


@dataclass
class CurveTable(_Benchmark):
    """Curves loaded from a CSV file.

    The search space is a single categorical dimension over the stored
    ``config_id`` values, in first-appearance order.
    """

    ids: list[str]
    seeds: list[int]
    z_max: int
    _curves: dict = field(repr=False)

    def __post_init__(self):
        self.space = HpSpace((("config_id", tuple(self.ids)),)) if len(self.ids) > 1 else None
        self.n_seeds = len(self.seeds)

    def config_id(self, config: HpConfig) -> str:
        if len(config.values) != 1:
            raise ValueError("curve-table configs have exactly one dimension")
        return self.ids[config.values[0]]

    def config_for(self, config_id: str) -> HpConfig:
        return HpConfig((self.ids.index(config_id),))

    def curve_by_id(self, config_id: str, seed: int = 0) -> LearningCurve:
        try:
            valid, test = self._curves[config_id, seed]
        except KeyError:
            raise KeyError(f"no curve for config {config_id!r} seed {seed}") from None
        return LearningCurve(config_id, seed, valid, test)

    def curve(self, config: HpConfig, seed: int = 0) -> LearningCurve:
        return self.curve_by_id(self.config_id(config), seed)

    def query_id(self, config_id: str, epoch: int, seed: int = 0) -> tuple[float, float]:
        if not 1 <= epoch <= self.z_max:
            raise ValueError(f"epoch {epoch} outside 1..{self.z_max}")
        c = self.curve_by_id(config_id, seed)
        return float(c.valid[epoch - 1]), float(c.test[epoch - 1])


def load_curve_table(path: str | Path) -> CurveTable:
    """Parse a curve-table CSV; every malformed row raises with its line number."""
    rows: dict[tuple[str, int], dict[int, tuple[float, float]]] = {}
    ids: list[str] = []
    seeds: set[int] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise CurveTableError(f"line 1: expected header {','.join(CSV_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise CurveTableError(f"line {lineno}: expected 5 fields, got {len(row)}")
            cid = row[0]
            try:
                seed, epoch = int(row[1]), int(row[2])
                valid, test = float(row[3]), float(row[4])
            except ValueError as exc:
                raise CurveTableError(f"line {lineno}: {exc}") from None
            if not (math.isfinite(valid) and math.isfinite(test)):
                raise CurveTableError(f"line {lineno}: non-finite score")
            if epoch < 1 or seed < 0:
                raise CurveTableError(f"line {lineno}: epoch must be >= 1 and seed >= 0")
            per_curve = rows.setdefault((cid, seed), {})
            if epoch in per_curve:
                raise CurveTableError(
                    f"line {lineno}: duplicate row for config {cid!r} seed {seed} epoch {epoch}"
                )
            per_curve[epoch] = (valid, test)
            if cid not in ids:
                ids.append(cid)
            seeds.add(seed)
    if not rows:
        raise CurveTableError("table has no data rows")

    z_max = None
    curves = {}
    for (cid, seed), per_curve in rows.items():
        n = len(per_curve)
        if sorted(per_curve) != list(range(1, n + 1)):
            raise CurveTableError(f"config {cid!r} seed {seed}: epochs not contiguous from 1")
        if z_max is None:
            z_max = n
        elif n != z_max:
            raise CurveTableError(f"config {cid!r} seed {seed}: z_max {n} differs from {z_max}")
        arr = np.array([per_curve[e] for e in range(1, n + 1)])
        valid, test = arr[:, 0].copy(), arr[:, 1].copy()
        valid.flags.writeable = False
        test.flags.writeable = False
        curves[cid, seed] = (valid, test)
    seed_list = sorted(seeds)
    if seed_list != list(range(len(seed_list))):
        raise CurveTableError(f"seeds must be 0..n-1, got {seed_list}")
    for cid in ids:
        for s in seed_list:
            if (cid, s) not in curves:
                raise CurveTableError(f"config {cid!r} missing seed {s}")
    return CurveTable(ids, seed_list, z_max, curves)


def export_curve_table(
    bench: _Benchmark,
    configs: Sequence[HpConfig],
    path: str | Path,
    seeds: Sequence[int] | None = None,
) -> int:
    """Write the curves of ``configs`` as CSV; returns the number of data rows."""
    seeds = range(bench.n_seeds) if seeds is None else seeds
    n_rows = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for seed in seeds:
            for config in configs:
                c = bench.curve(config, seed)
                cid = bench.config_id(config)
                for z in range(c.z_max):
                    writer.writerow((cid, seed, z + 1, repr(float(c.valid[z])), repr(float(c.test[z]))))
                    n_rows += 1
    return n_rows


def make_benchmark(spec: BenchSpec, space: HpSpace | None = None):
    if spec.regime == "file":
        table = load_curve_table(spec.source_path)
        if table.z_max != spec.z_max:
            raise ValueError(f"table z_max {table.z_max} != requested {spec.z_max}")
        return table
    return SyntheticBenchmark(spec, space)
