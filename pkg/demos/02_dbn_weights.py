"""
Letting a learned network weight the neighbours.

A sparse linear-Gaussian DBN is fitted to the recording. Its conditional
density of the target says how typical each sample is given the past, and
the cross-map prediction leans on the more typical neighbours.

The system here is a noise-driven linear VAR, which the lasso recovers
almost exactly. Cross mapping itself gains little on such data: stochastic
forcing leaves little deterministic structure for a shadow manifold to share.
"""

import numpy as np

from dbnccm import EmbeddingParams, cross_map, learn, preset, generate

rec = generate(preset("var3", n_samples=2000, seed=4))
model = learn(rec, max_lag=2, lam=0.01)

np.set_printoptions(precision=2, suppress=True)
print("learned lag weights, weights[to, from, lag-1]:")
for lag in range(model.max_lag):
    print(f"lag {lag + 1}\n{model.weights[:, :, lag]}")
print("noise variances:", model.noise_vars)

a, b, c = rec.channels
params = EmbeddingParams(3, 1)
for src, tgt in ((c, b), (b, a)):
    plain = cross_map(src, tgt, params).rho
    weighted = cross_map(src, tgt, params, model=model, recording=rec).rho
    print(f"{src.label} manifold -> {tgt.label}: standard {plain:.3f}, dbn-weighted {weighted:.3f}")
