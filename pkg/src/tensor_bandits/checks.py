"""Randomized invariant suites run by ``selftest``.

Each suite returns a :class:`GroupResult` counting passed checks; a suite
never raises on a failed check, it records a short message instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bandit import theorem1_params
from .environments import gen_lower_bound_instance, gen_system_tensor, lower_bound_delta
from .projection import block_norm, build_projection, project_action, project_system, q_of, tail_counts
from .tensor_core import fold, inner, kron_all, matricize, mode_n_product, multi_mode_product
from .tucker import complement_basis, hosvd, mode_omegas, multilinear_rank, random_orthonormal

__all__ = ["GroupResult", "SUITES", "run_suites"]

_MAX_MESSAGES = 5


@dataclass
class GroupResult:
    name: str
    passed: int = 0
    total: int = 0
    messages: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.total > 0 and self.passed == self.total

    def check(self, cond: bool, msg: str = "") -> None:
        self.total += 1
        if cond:
            self.passed += 1
        elif len(self.messages) < _MAX_MESSAGES:
            self.messages.append(msg)

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name} ({self.passed}/{self.total})"


def tensor_identities(rng: np.random.Generator, trials: int = 50) -> GroupResult:
    g = GroupResult("tensor identities")
    for _ in range(trials):
        order = int(rng.integers(3, 5))
        shape = tuple(int(s) for s in rng.integers(2, 5, size=order))
        y = rng.standard_normal(shape)
        n = int(rng.integers(order))
        g.check(np.array_equal(fold(matricize(y, n), n, shape), y), "fold(matricize) round trip")
        b = rng.standard_normal((3, shape[n]))
        lhs = matricize(mode_n_product(y, b, n), n)
        g.check(np.allclose(lhs, b @ matricize(y, n), atol=1e-10), "M_n(y x_n B) == B M_n(y)")
        mats = [rng.standard_normal((2, s)) for s in shape]
        full = multi_mode_product(y, mats)
        kron_left = kron_all([m for k, m in enumerate(mats) if k != n])
        g.check(np.allclose(matricize(full, n), mats[n] @ matricize(y, n) @ kron_left.T, atol=1e-9),
                "unfolding Kronecker identity")
        g.check(np.allclose(full.ravel(), kron_all(mats) @ y.ravel(), atol=1e-9),
                "vec of all-mode product")
    return g


def q_census(rng=None) -> GroupResult:
    g = GroupResult("q(k) census")
    g.check(q_of(3, 5, 2, 3) == 98 == 5 ** 3 - 3 ** 3, "q(3) for d=5, r=2, N=3 is 98")
    for order in (3, 4):
        for d in range(3, 7):
            for r in range(1, d + 1):
                tails = tail_counts(d, r, order)
                for k in range(order + 2):
                    g.check(q_of(k, d, r, order) == int(np.sum(tails < k)),
                            f"census d={d} r={r} N={order} k={k}")
    return g


def _random_maps(rng, d, order):
    r = int(rng.integers(1, d + 1))
    return build_projection([random_orthonormal(d, r, rng) for _ in range(order)], int(rng.integers(1, order + 1)))


def inner_product_equivalence(rng: np.random.Generator, trials: int = 500) -> GroupResult:
    g = GroupResult("projected inner-product equivalence")
    for _ in range(trials):
        order = int(rng.choice([3, 4]))
        d = int(rng.integers(2, 6))
        pmap = _random_maps(rng, d, order)
        a = rng.standard_normal((d,) * order)
        x = rng.standard_normal((d,) * order)
        lhs = inner(a, x)
        rhs = float(project_action(pmap, a) @ project_system(pmap, x))
        g.check(abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs)), f"|{lhs} - {rhs}| too large (d={d}, N={order})")
    return g


def _perturbed_pair(rng, d, order, r, exact: bool):
    x = gen_system_tensor(d, order, r, 1.0, 0.15, rng)
    if exact:
        return x, x.copy()
    e = rng.standard_normal(x.shape)
    e *= rng.uniform(0.0, 0.6) / np.linalg.norm(e)
    return x, hosvd(x + e, (r,) * order).full()


def subspace_bound(rng: np.random.Generator, trials: int = 1000, d: int = 5, order: int = 3, r: int = 2,
           exact: bool = False) -> GroupResult:
    """Subspace error ``||U_hat_perp^T U_n||_F <= ||x_hat - x||_F / omega_n``."""
    g = GroupResult("subspace perturbation bound" + (" (exact fixture)" if exact else ""))
    for _ in range(trials):
        x, xh = _perturbed_pair(rng, d, order, r, exact)
        eta = float(np.linalg.norm(xh - x))
        u = hosvd(x, (r,) * order).factors
        uh = hosvd(xh, (r,) * order).factors
        omegas = mode_omegas(x)
        for n in range(order):
            lhs = float(np.linalg.norm(complement_basis(uh[n]).T @ u[n]))
            g.check(lhs <= eta / omegas[n] + 1e-9, f"mode {n}: {lhs:.3g} > {eta / omegas[n]:.3g}")
            if exact:
                g.check(lhs <= 1e-9, f"exact fixture left side {lhs:.3g} not 0")
    return g


def tail_block_bound(rng: np.random.Generator, trials: int = 1000, d: int = 5, order: int = 3, r: int = 2,
           exact: bool = False) -> GroupResult:
    """Tail blocks ``||y_k|| <= sqrt(C(N,k)) C (eta/omega)^k`` summed over each tail count."""
    g = GroupResult("tail-block bound" + (" (exact fixture)" if exact else ""))
    for _ in range(trials):
        x, xh = _perturbed_pair(rng, d, order, r, exact)
        eta = float(np.linalg.norm(xh - x))
        omega = float(mode_omegas(x).min())
        c = float(np.linalg.norm(x))
        pmap = build_projection(hosvd(xh, (r,) * order).factors, order)
        for k in range(1, order + 1):
            lhs = block_norm(pmap, x, k)
            bound = math.sqrt(math.comb(order, k)) * c * (eta / omega) ** k
            g.check(lhs <= bound + 1e-9, f"k={k}: {lhs:.3g} > {bound:.3g}")
    return g


def hosvd_exactness(rng: np.random.Generator, trials: int = 100, d: int = 5, order: int = 3,
                    r: int = 2) -> GroupResult:
    g = GroupResult("HOSVD exactness")
    for _ in range(trials):
        core = rng.standard_normal((r,) * order)
        x = multi_mode_product(core, [random_orthonormal(d, r, rng) for _ in range(order)])
        err = float(np.linalg.norm(hosvd(x, (r,) * order).full() - x))
        g.check(err <= 1e-8, f"exact-rank reconstruction error {err:.3g}")
        y = rng.standard_normal((d,) * order)
        err = float(np.linalg.norm(hosvd(y, (d,) * order).full() - y))
        g.check(err <= 1e-10, f"full-rank reconstruction error {err:.3g}")
    return g


def phase_b_parameters(rng=None) -> GroupResult:
    g = GroupResult("Phase B parameters")

    def rel(a, b):
        return abs(a - b) <= 1e-12 * abs(b)

    lam, _, _ = theorem1_params(1.0, 0.5, 0.1, 3, 1000, 98, 3)
    g.check(lam == 1.0, f"lambda {lam} != 1")
    _, lam_perp, _ = theorem1_params(1.0, 0.5, 0.1, 3, 1000, 98, 3)
    g.check(rel(lam_perp, 1000 / (98 * math.log(1001))), f"lambda_perp {lam_perp}")
    _, _, c_perp = theorem1_params(1.0, 0.5, 0.1, 3, 1000, 98, 3)
    g.check(rel(c_perp, 2 ** 1.5 * 0.2 ** 3), f"C_perp {c_perp}")
    try:
        theorem1_params(1.0, 0.5, 0.6, 3, 1000, 98, 3)
        g.check(False, "eta > omega was accepted")
    except ValueError:
        g.check(True)
    return g


def lower_bound_checks(rng: np.random.Generator, trials: int = 20) -> GroupResult:
    g = GroupResult("lower-bound instance")
    d, r, order, T = 4, 2, 3, 1536
    delta = lower_bound_delta(r, order, T)
    g.check(abs(delta - 1 / 192) <= 1e-12 / 192, f"Delta {delta} != 1/192")
    for _ in range(trials):
        x = gen_lower_bound_instance(d, order, r, T, rng)
        sq = float(np.sum(x ** 2))
        target = r ** (2 * order) / (192 * T)
        g.check(abs(sq - target) <= 1e-12 * target, f"||X||^2 {sq} != {target}")
        g.check(all(k <= r for k in multilinear_rank(x)), "multilinear rank exceeds r")
        mask = np.ones(x.shape, dtype=bool)
        mask[(slice(0, r),) * order] = False
        g.check(not np.any(x[mask]), "non-zero outside the leading corner")
    try:
        gen_lower_bound_instance(4, 3, 4, 31, rng)
        g.check(False, "r^N > 2T was accepted")
    except ValueError:
        g.check(True)
    return g


SUITES = {
    "tensor": tensor_identities,
    "q": q_census,
    "equivalence": inner_product_equivalence,
    "subspace": subspace_bound,
    "tails": tail_block_bound,
    "hosvd": hosvd_exactness,
    "parameters": phase_b_parameters,
    "lowerbound": lower_bound_checks,
}


def run_suites(seed: int = 0, exact_fixture: bool = False) -> list[GroupResult]:
    """Run every suite with its own child generator of ``seed``."""
    children = np.random.SeedSequence(seed).spawn(len(SUITES))
    out = []
    for (key, fn), ss in zip(SUITES.items(), children):
        rng = np.random.default_rng(ss)
        if key in ("subspace", "tails") and exact_fixture:
            out.append(fn(rng, trials=20, exact=True))
        else:
            out.append(fn(rng))
    return out

