"""The hard instance: random signs of size Delta in the leading corner."""

import numpy as np

from tensor_bandits.environments import gen_lower_bound_instance, lower_bound_delta
from tensor_bandits.tucker import multilinear_rank

rng = np.random.default_rng(5)
for T in (1536, 6144, 24576):
    x = gen_lower_bound_instance(4, 3, 2, T, rng)
    print(f"T={T:6d} Delta={lower_bound_delta(2, 3, T):.6f} "
          f"||X||^2={np.sum(x ** 2):.3e} (r^2N/(192T)={2 ** 6 / (192 * T):.3e}) rank={multilinear_rank(x)}")
