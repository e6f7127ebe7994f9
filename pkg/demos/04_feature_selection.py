"""
Genetic feature selection
=========================

A fixed-cardinality GA searches 42-bit masks.  Fitness is the 3-fold
accuracy of a shallow decision tree on the selected columns.
"""

import numpy as np

from coaplab import ga, traffic, windows
from coaplab.features import DEFAULT_SCHEMA
from coaplab.pipeline import packet_table

# a planted problem first: the label is the majority of columns 5, 17 and 30
rng = np.random.default_rng(7)
X = rng.integers(0, 2, size=(240, 42)).astype(float)
y = (X[:, [5, 17, 30]].sum(axis=1) >= 2).astype(int)
res = ga.run_ga(X, y, ga.GaConfig(k=3, fitness_max_depth=3))
print("planted:", np.flatnonzero(res.best_mask), "fitness", res.best_fitness)
print("best per generation:", np.round(res.history[:10], 3))

# then the real per-packet table, reduced to 16 columns
cfg = traffic.desk_scale_config(duration=1210.0)
packets, _ = traffic.run_scenario(cfg)
labeled = windows.label_dataset(packets, cfg.malicious_ips)
Xp, yp = packet_table(labeled, max_rows=1500)
res = ga.run_ga(Xp, yp, ga.GaConfig(k=16, generations=10))
chosen = [n for n, keep in zip(DEFAULT_SCHEMA.names, res.best_mask) if keep]
print(f"\n16 columns (fitness {res.best_fitness:.4f}, {res.evaluations} evaluations):")
print(chosen)
