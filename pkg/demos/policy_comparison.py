"""
Early-discarding policies under a fixed number of trials
========================================================

Each policy gets the same 200 randomly sampled configurations. The table
shows the final test score of the chosen configuration and the total number
of training epochs spent, averaged over a few seeds. Speedup is measured
against training every trial to the maximum fidelity.
"""

from mfhpo.analysis import summarize, trajectory
from mfhpo.engine import RunConfig, run_experiment

seeds = range(3)
records = []
for policy in ("max_fidelity", "one_epoch", "sha", "hyperband"):
    for seed in seeds:
        records.append(run_experiment(RunConfig(policy=policy, seed=seed, regime="crossing")))

print(f"{'policy':13s} {'test':>7s} {'±se':>7s} {'epochs':>8s} {'speedup':>8s}")
for row in summarize(records):
    print(
        f"{row['policy']:13s} {row['final_test_mean']:7.4f} {row['final_test_stderr']:7.4f} "
        f"{row['total_epochs']:8.0f} {row['speedup']:8.1f}"
    )

# The anytime view: best test score reached after a given epoch budget.
one = trajectory(records[3])
for budget in (100, 200, 300, 500):
    i = min(budget, len(one)) - 1
    print(f"one_epoch after {one.cum_epochs[i]:4d} epochs: best test {one.best_test[i]:.4f}")
