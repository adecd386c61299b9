"""Variance-regularized learning rates for first-order stochastic optimizers.

The package has three faces: optimizer step engines that modulate their
per-parameter rate by the within-batch gradient variance (vr_sgd, vr_adam,
plus plain sgd/momentum/adam baselines), a theory lab that numerically
verifies the convergence bounds and closed forms the method rests on, and a
seeded CLI harness for reproducible benchmark runs.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend  # noqa: F401
