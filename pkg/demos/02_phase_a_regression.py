"""Estimating a rank-1 system tensor from noisy random measurements.

The estimation error shrinks roughly like ``1/sqrt(T1)`` for both the
Gaussian and the one-hot measurement rules.
"""

import numpy as np

from tensor_bandits.environments import gen_system_tensor
from tensor_bandits.regression import (
    MeasurementDataset,
    eta_formula,
    fit_als,
    sample_gaussian_arms,
    sample_one_hot_arms,
)

rng = np.random.default_rng(1)
x = gen_system_tensor(4, 3, 1, 1.0, 0.5, rng)

print(f"{'T1':>6} {'gaussian':>10} {'one-hot':>10} {'formula c=0.05':>15}")
for T1 in (250, 500, 1000, 2000, 4000):
    row = []
    for arms in (sample_gaussian_arms(T1, 4, 3, rng)[0], sample_one_hot_arms(T1, 4, 3, rng)):
        y = arms.reshape(T1, -1) @ x.ravel() + 0.1 * rng.standard_normal(T1)
        row.append(fit_als(MeasurementDataset(arms, y), 1, truth=x).eta_observed)
    print(f"{T1:6d} {row[0]:10.4f} {row[1]:10.4f} {eta_formula(4, 1, 3, T1, c=0.05):15.4f}")
