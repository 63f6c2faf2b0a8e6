"""Mode products, unfoldings and the Tucker form of a low-rank tensor.

Run with ``python demos/01_tensor_algebra.py``.
"""

import numpy as np

from tensor_bandits.tensor_core import kron_all, matricize, multi_mode_product
from tensor_bandits.tucker import hosvd, mode_omegas, multilinear_rank, random_orthonormal

rng = np.random.default_rng(0)

# A (4, 4, 4) tensor built from a (2, 2, 2) core and orthonormal factors.
core = rng.standard_normal((2, 2, 2))
factors = [random_orthonormal(4, 2, rng) for _ in range(3)]
x = multi_mode_product(core, factors)
print("shape", x.shape, "multilinear rank", multilinear_rank(x))

# Every unfolding factors through the core, with the other factors Kronecker-ed
# in ascending mode order.
for n in range(3):
    others = kron_all([f for k, f in enumerate(factors) if k != n])
    gap = np.abs(matricize(x, n) - factors[n] @ matricize(core, n) @ others.T).max()
    print(f"mode {n}: unfolding identity gap {gap:.1e}")

# HOSVD recovers the tensor exactly at the true ranks.
t = hosvd(x, (2, 2, 2))
print("HOSVD reconstruction error", np.linalg.norm(t.full() - x))
print("smallest positive unfolding singular values", np.round(mode_omegas(x), 4))
