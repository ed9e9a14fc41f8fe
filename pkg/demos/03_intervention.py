"""
Switching the coupling off halfway.

The x -> y coupling is removed at sample 500. Before the switch y's manifold
recovers x; afterwards that skill falls away. The drop in skill across the
event is the signature of a broken causal link.
"""

from dbnccm import EmbeddingParams, Recording, coupled_logistic, generate, segmented_intervention
from dbnccm.intervention import DbnSettings, simulated_intervention

params = EmbeddingParams(2, 1)
rec = generate(coupled_logistic(0.32, 0.0, 1000, seed=3, switch_at=500))
rec = Recording(rec.channels, event_onset=500.0)

for dbn in (None, DbnSettings(max_lag=2, lam=0.01)):
    res = segmented_intervention(rec, "y", "x", params, dbn=dbn)
    print(f"{res.mode:>13}: pre {res.rho_pre:.3f}  post {res.rho_post:.3f}  "
          f"delta {res.delta_rho:+.3f}")

# The same question asked of a simulated do-operation: clamp x at 0.5.
spec = coupled_logistic(0.32, 0.0, 1000, seed=3)
res = simulated_intervention(spec, {"channel": "x", "mode": "clamp", "value": 0.5}, 0.5,
                             "y", "x", params)
print(f"clamped source: delta {res.delta_rho:+.3f}")
