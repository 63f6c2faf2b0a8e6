"""Tucker decomposition (HOSVD), multilinear rank and complement subspaces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor_core import as_tensor, matricize, multi_mode_product

__all__ = [
    "DEFAULT_RANK_TOL",
    "TuckerDecomp",
    "svd_thin",
    "hosvd",
    "reconstruct",
    "multilinear_rank",
    "complement_basis",
    "mode_singular_values",
    "mode_omegas",
    "min_mode_singular_value",
    "random_orthonormal",
]

DEFAULT_RANK_TOL = 1e-10
_ORTHO_TOL = 1e-10


def _fix_signs(u: np.ndarray, *others: np.ndarray):
    # make the largest-magnitude entry of every column of u positive
    if u.shape[1] == 0:
        return (u,) + others
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return (u * signs,) + tuple(o * signs for o in others)


def svd_thin(m) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``m = U @ diag(s) @ V.T`` with a deterministic sign choice.

    Singular values come back in non-increasing order.  Each left singular
    vector is flipped so that its largest-magnitude entry is positive (the
    matching right vector is flipped with it).

    Returns
    -------
    U : ndarray (p, k)
    s : ndarray (k,)
    V : ndarray (q, k)
        ``k = min(p, q)``.  Note that ``V`` is returned untransposed.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("svd_thin expects a matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    u, v = _fix_signs(u, vt.T)
    return u, s, v


@dataclass(frozen=True)
class TuckerDecomp:
    """Core tensor plus one orthonormal factor matrix per mode."""

    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        core = as_tensor(self.core)
        factors = tuple(np.asarray(f, dtype=np.float64) for f in self.factors)
        if len(factors) != core.ndim:
            raise ValueError(f"{len(factors)} factors for an order-{core.ndim} core")
        for n, f in enumerate(factors):
            if f.ndim != 2 or f.shape[1] != core.shape[n]:
                raise ValueError(f"factor {n} has shape {f.shape}, core mode length {core.shape[n]}")
            gram = f.T @ f
            if not np.allclose(gram, np.eye(f.shape[1]), rtol=0, atol=_ORTHO_TOL * max(1, f.shape[1])):
                raise ValueError(f"factor {n} does not have orthonormal columns")
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)

    @property
    def ranks(self) -> tuple[int, ...]:
        return self.core.shape

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    def full(self) -> np.ndarray:
        return reconstruct(self)


def reconstruct(t: TuckerDecomp) -> np.ndarray:
    """``core x_0 U_0 x_1 U_1 ... x_{N-1} U_{N-1}``."""
    return multi_mode_product(t.core, t.factors)


def hosvd(y, ranks: Sequence[int]) -> TuckerDecomp:
    """Truncated higher-order SVD.

    Each factor holds the top ``ranks[n]`` left singular vectors of the mode-n
    unfolding and the core is ``y x_n U_n^T`` over all modes.  If ``y`` has
    multilinear rank at most ``ranks`` then ``reconstruct`` recovers it.
    """
    y = as_tensor(y)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != y.ndim:
        raise ValueError(f"need {y.ndim} ranks, got {len(ranks)}")
    for n, (r, d) in enumerate(zip(ranks, y.shape)):
        if not 1 <= r <= d:
            raise ValueError(f"rank {r} for mode {n} must lie in [1, {d}]")
    factors = []
    for n, r in enumerate(ranks):
        u, _, _ = svd_thin(matricize(y, n))
        factors.append(u[:, :r])
    core = multi_mode_product(y, factors, transpose=True)
    return TuckerDecomp(core, tuple(factors))


def mode_singular_values(y) -> list[np.ndarray]:
    """Singular values of every mode-n unfolding, each sorted descending."""
    y = as_tensor(y)
    return [np.linalg.svd(matricize(y, n), compute_uv=False) for n in range(y.ndim)]


def multilinear_rank(y, tol: float = DEFAULT_RANK_TOL) -> tuple[int, ...]:
    """Count, per mode, the singular values above ``tol * s_max``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    ranks = []
    for s in mode_singular_values(y):
        smax = s[0] if s.size else 0.0
        ranks.append(int(np.sum(s > tol * smax)) if smax > 0 else 0)
    return tuple(ranks)


def mode_omegas(y, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Smallest positive singular value of each mode-n unfolding."""
    out = []
    for n, s in enumerate(mode_singular_values(y)):
        if s.size == 0 or s[0] <= 0:
            raise ValueError("tensor is zero; no positive singular values")
        out.append(s[s > tol * s[0]][-1])
    return np.array(out)


def min_mode_singular_value(y, tol: float = DEFAULT_RANK_TOL) -> float:
    """The minimum over modes of the smallest positive unfolding singular value."""
    return float(mode_omegas(y, tol).min())


def complement_basis(u) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``span(u)``.

    ``u`` must have orthonormal columns.  The result ``u_perp`` has shape
    ``(d, d - r)`` and ``[u, u_perp]`` is an orthogonal matrix.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[1] > u.shape[0]:
        raise ValueError(f"expected a tall (d, r) matrix, got shape {u.shape}")
    d, r = u.shape
    if not np.allclose(u.T @ u, np.eye(r), rtol=0, atol=_ORTHO_TOL * max(1, r)):
        raise ValueError("input columns are not orthonormal")
    if r == d:
        return np.zeros((d, 0))
    if r == 0:
        return np.eye(d)
    q, _, _ = np.linalg.svd(u, full_matrices=True)
    perp = q[:, r:]
    # one re-projection pass keeps orthogonality to u at machine precision
    perp = perp - u @ (u.T @ perp)
    perp, _ = np.linalg.qr(perp)
    (perp,) = _fix_signs(perp)
    return perp


def random_orthonormal(d: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """A Haar-distributed ``(d, r)`` matrix with orthonormal columns."""
    q, rr = np.linalg.qr(rng.standard_normal((d, r)))
    return q * np.sign(np.where(np.diag(rr) == 0, 1.0, np.diag(rr)))
