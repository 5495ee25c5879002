"""Effect of the KL weight on the learned latent space of a 2-D classifier.

Smaller ``beta`` loosens the pull towards the SDE prior, and the latent
codes of the two moons spread apart along one direction; the ratio of the
largest to smallest eigenvalue of their covariance grows.

Run with ``python demos/moons_beta.py [iterations]``.
"""

import sys

from dlvkl import ModelConfig, ModelState, TrainSchedule, evaluate, fit, standardize, toy_classify2d
from dlvkl.data import apply_stats
from dlvkl.reproduce import latent_eigen_ratio

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 1500

train, stats = standardize(toy_classify2d(200, seed=0))
test = apply_stats(toy_classify2d(200, seed=1), stats)

for beta in (1.0, 1e-2, 1e-4):
    cfg = ModelConfig(variant="dlvkl-nsde", task="binary", d_x=2, m=20, beta=beta)
    ms, _ = fit(ModelState.create(cfg, train.X), train.X, train.Y, TrainSchedule(iterations=iterations, batch_size=64))
    met = evaluate(ms, test)
    ratio = latent_eigen_ratio(ms.latent_mean(train.X))
    print(f"beta={beta:<7g} accuracy {met.accuracy:.3f}  NLL {met.nll:.3f}  eigen ratio {ratio:.1f}")
