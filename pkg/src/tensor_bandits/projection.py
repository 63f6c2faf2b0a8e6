"""Rotate arms and the system tensor into estimated subspaces, grouped by tail count.

Every mode basis is the orthogonal matrix ``[U_n, U_n_perp]``.  After the
rotation, coordinate ``(i_0, ..., i_{N-1})`` has *tail count* equal to the
number of modes with ``i_n >= r`` (0-based), i.e. the modes that landed in
the complement.  Coordinates are vectorized in ascending tail count, with ties
kept in row-major order, so the ``q(rho)`` coordinates with fewer than
``rho`` tails form a prefix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import Sequence

import numpy as np

from .tensor_core import as_tensor, kron_all
from .tucker import complement_basis

__all__ = [
    "tail_count",
    "tail_counts",
    "q_of",
    "ProjectionMap",
    "build_projection",
    "project_action",
    "project_system",
    "block_norm",
]

# above this many coordinates the dense rotation matrix is not cached
_DENSE_LIMIT = 1024


def tail_count(index: Sequence[int], r: int) -> int:
    """Number of modes whose (0-based) index falls in the tail ``[r, d)``."""
    return int(sum(1 for i in index if i >= r))


def tail_counts(d: int, r: int, order: int) -> np.ndarray:
    """Tail count of every flat (row-major) index of a ``(d,) * order`` tensor."""
    grid = np.indices((d,) * order).reshape(order, -1)
    return (grid >= r).sum(axis=0)


def q_of(k: int, d: int, r: int, order: int) -> int:
    """Number of elements lying in blocks with fewer than ``k`` tails."""
    if not 0 <= k <= order + 1:
        raise ValueError(f"k={k} must lie in [0, {order + 1}]")
    return sum(comb(order, i) * r ** (order - i) * (d - r) ** i for i in range(min(k, order + 1)))


@dataclass(frozen=True)
class ProjectionMap:
    factors: tuple
    complements: tuple
    rho: int
    perm: np.ndarray
    q_rho: int

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def d(self) -> int:
        return self.factors[0].shape[0]

    @property
    def r(self) -> int:
        return self.factors[0].shape[1]

    @property
    def dim(self) -> int:
        return self.d ** self.order

    @cached_property
    def bases(self) -> tuple:
        """Orthogonal ``[U_n, U_n_perp]`` for each mode."""
        return tuple(np.hstack([u, c]) for u, c in zip(self.factors, self.complements))

    @cached_property
    def tails(self) -> np.ndarray:
        """Tail count of each projected coordinate, in vectorized order."""
        return tail_counts(self.d, self.r, self.order)[self.perm]

    @cached_property
    def inverse_perm(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return inv

    @cached_property
    def matrix(self) -> np.ndarray | None:
        """Dense ``(dim, dim)`` rotation ``b = M @ vec(a)``; ``None`` when too large."""
        if self.dim > _DENSE_LIMIT:
            return None
        return kron_all([b.T for b in self.bases])[self.perm]


def build_projection(factors: Sequence, rho: int) -> ProjectionMap:
    """Complete each estimated factor to an orthogonal basis and fix the ordering."""
    factors = tuple(np.asarray(f, dtype=np.float64) for f in factors)
    if not factors:
        raise ValueError("need at least one factor")
    d, r = factors[0].shape
    if any(f.shape != (d, r) for f in factors):
        raise ValueError("all factors must share the same (d, r) shape")
    order = len(factors)
    if not 1 <= rho <= order:
        raise ValueError(f"rho={rho} must lie in [1, {order}]")
    complements = tuple(complement_basis(f) for f in factors)
    perm = np.argsort(tail_counts(d, r, order), kind="stable")
    return ProjectionMap(factors, complements, int(rho), perm, q_of(rho, d, r, order))


def _rotate(pmap: ProjectionMap, arr: np.ndarray) -> np.ndarray:
    # arr: (batch, d, ..., d) -> (batch, dim) in projected, permuted order
    batch = arr.shape[0]
    dense = pmap.matrix
    if dense is not None:
        return arr.reshape(batch, -1) @ dense.T
    out = arr
    for n, b in enumerate(pmap.bases):
        out = np.moveaxis(np.tensordot(out, b.T, axes=([n + 1], [1])), -1, n + 1)
    return out.reshape(batch, -1)[:, pmap.perm]


def project_action(pmap: ProjectionMap, a) -> np.ndarray:
    """Rotate an arm (or a stack of arms along axis 0) into projected coordinates.

    A single ``(d, ..., d)`` tensor gives a ``(dim,)`` vector; a stack of
    shape ``(m, d, ..., d)`` gives an ``(m, dim)`` matrix.
    """
    a = as_tensor(a)
    cube = (pmap.d,) * pmap.order
    if a.shape == cube:
        return _rotate(pmap, a[None])[0]
    if a.shape[1:] == cube:
        return _rotate(pmap, a)
    raise ValueError(f"arm shape {a.shape} does not match {cube}")


def project_system(pmap: ProjectionMap, x) -> np.ndarray:
    """Projected system vector; diagnostic only since the learner never sees ``x``."""
    x = as_tensor(x)
    if x.shape != (pmap.d,) * pmap.order:
        raise ValueError(f"system shape {x.shape} does not match {(pmap.d,) * pmap.order}")
    return _rotate(pmap, x[None])[0]


def block_norm(pmap: ProjectionMap, x, k: int) -> float:
    """Norm of the projected coordinates with exactly ``k`` tails (all such blocks)."""
    if not 0 <= k <= pmap.order:
        raise ValueError(f"k={k} must lie in [0, {pmap.order}]")
    y = project_system(pmap, x)
    return float(np.linalg.norm(y[pmap.tails == k]))
