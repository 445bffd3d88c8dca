# Apache License, Version 2.0, refer to LICENSE.txt
"""Clustering of multivariate hourly functions with a partitioned Dirichlet process."""

import sys

from ._core import (
    ValidationError,
    __version__,
    adjusted_rand_index,
    ar1_step,
    canonical_labels,
    config_violations,
    cross_covariance,
    read_dataset,
    run,
    sequential_log_density,
    woodbury_marginal_loglik,
)

__all__ = [
    "ValidationError",
    "__version__",
    "adjusted_rand_index",
    "ar1_step",
    "canonical_labels",
    "config_violations",
    "cross_covariance",
    "main",
    "read_dataset",
    "run",
    "sequential_log_density",
    "woodbury_marginal_loglik",
]


def main() -> int:
    code, out, err = run(sys.argv[1:])
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
