"""
Which way does the influence run?

Two logistic maps where x pushes y and y leaves x alone. Cross mapping reads
causality backwards from intuition: the *effect* y carries an imprint of x in
its own dynamics, so y's shadow manifold predicts x well, while x's manifold
knows nothing about y.
"""

from dbnccm import EmbeddingParams, convergence, cross_map, generate, coupled_logistic

rec = generate(coupled_logistic(beta_yx=0.32, beta_xy=0.0, n_samples=1000, seed=0))
x, y = rec.channels
params = EmbeddingParams(2, 1)

print("skill of y's manifold predicting x:", round(cross_map(y, x, params).rho, 3))
print("skill of x's manifold predicting y:", round(cross_map(x, y, params).rho, 3))

# Genuine coupling shows up as skill that keeps improving with more data.
sizes = [50, 100, 200, 400, 800]
for label, src, tgt in (("y predicts x", y, x), ("x predicts y", x, y)):
    curve = convergence(src, tgt, params, sizes=sizes, n_draws=5, seed=1)
    print(f"{label:>13}:", " ".join(f"{r:+.3f}" for r in curve.rhos))
