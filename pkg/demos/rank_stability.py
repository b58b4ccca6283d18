"""
How early do learning curves reveal the winner?
===============================================

Three synthetic benchmarks built from the same hyperparameter space. In the
"dominant" regime curves never cross, so the ranking after one epoch is
already the final ranking. Adding observation noise blurs that a little; the
"crossing" regime lets slow starters overtake, which is where cheap
low-fidelity selection starts to hurt.
"""

import numpy as np

from mfhpo.analysis import rank_matrix, rank_stability
from mfhpo.benchmark import BenchSpec, SyntheticBenchmark, sample_config

# 300 distinct configurations drawn uniformly from the space
rng = np.random.default_rng(0)
bench = SyntheticBenchmark(BenchSpec("dominant", master_seed=0))
configs = set()
while len(configs) < 300:
    configs.add(sample_config(bench.space, rng))
configs = sorted(configs)

for regime, noise in [("dominant", 0.0), ("dominant", 0.02), ("crossing", 0.0)]:
    b = SyntheticBenchmark(BenchSpec(regime, noise_sigma=noise, master_seed=0))
    m = rank_matrix(b, configs)
    row = "  ".join(f"z={z:<3d}{rank_stability(m, z):6.3f}" for z in (1, 5, 10, 30))
    print(f"{regime:9s} noise={noise:<5}  {row}")

# Spearman correlation with the epoch-100 ranking climbs towards 1 as z
# grows; only the crossing regime starts well below it.
