"""Rotating into estimated subspaces concentrates the system in few coordinates.

With estimated factors, projected coordinates are grouped by how many modes
fall in the complement.  Blocks with more such modes carry geometrically
less energy.
"""

import numpy as np

from tensor_bandits.environments import gen_system_tensor
from tensor_bandits.projection import block_norm, build_projection, q_of
from tensor_bandits.tucker import hosvd, mode_omegas

rng = np.random.default_rng(2)
d, order, r = 5, 3, 2
x = gen_system_tensor(d, order, r, 1.0, 0.3, rng)
noise = rng.standard_normal(x.shape)
xh = hosvd(x + 0.1 * noise / np.linalg.norm(noise), (r,) * order).full()
eta, omega = np.linalg.norm(xh - x), mode_omegas(x).min()

pmap = build_projection(hosvd(xh, (r,) * order).factors, rho=3)
print(f"eta={eta:.4f} omega={omega:.4f} ratio={eta / omega:.4f}")
for k in range(order + 1):
    print(f"tails={k}: coordinates={q_of(k + 1, d, r, order) - q_of(k, d, r, order):3d} "
          f"block norm={block_norm(pmap, x, k):.2e}")
print("low-penalty block size q(3) =", pmap.q_rho, "of", pmap.dim)
