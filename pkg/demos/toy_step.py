"""Fit SVGP and DLVKL-NSDE to the discontinuous step toy and compare.

Run with ``python demos/toy_step.py [iterations]``. Writes nothing; prints
held-out RMSE and a coarse text plot of both predictive means.
"""

import sys

import numpy as np

from dlvkl import ModelConfig, ModelState, TrainSchedule, evaluate, fit, standardize, toy_step
from dlvkl.data import apply_stats, step_function

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 2000

train, stats = standardize(toy_step(50, seed=0))
test = apply_stats(toy_step(200, seed=1), stats)
sched = TrainSchedule(iterations=iterations, batch_size=50, eval_every=500)

models = {}
for variant in ("svgp", "dlvkl-nsde"):
    cfg = ModelConfig(variant=variant, m=20, lengthscale_init=1.0, beta=1e-2)
    fitted, trace = fit(ModelState.create(cfg, train.X), train.X, train.Y, sched)
    models[variant] = fitted
    print(f"{variant:>11}: RMSE {evaluate(fitted, test).rmse:.3f}  final ELBO {trace.elbos[-1]:.1f}")

# the NSDE latent codes should bunch up on either side of the jump at x = 0
grid = np.linspace(-1.5, 1.5, 13)[:, None]
xs = (grid - stats.x_mean) / stats.x_std
truth = (step_function(grid[:, 0]) - stats.y_mean[0]) / stats.y_std[0]
print(f"\n{'x':>6} {'truth':>7} {'svgp':>7} {'nsde':>7} {'z (nsde)':>9}")
for x, t, a, b, z in zip(
    grid[:, 0],
    truth,
    models["svgp"].predict(xs).mean[:, 0],
    models["dlvkl-nsde"].predict(xs).mean[:, 0],
    models["dlvkl-nsde"].latent_mean(xs)[:, 0],
):
    print(f"{x:6.2f} {t:7.3f} {a:7.3f} {b:7.3f} {z:9.3f}")
