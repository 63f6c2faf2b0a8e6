"""Low-rank tensor regression from noisy linear measurements.

Two estimators are provided.  :func:`fit_ridge_hosvd` solves ridge least
squares over all ``d^N`` coordinates and truncates with HOSVD; it is exact
for complete noiseless data but needs more samples than there are
coordinates to be accurate.  :func:`fit_als` fits the Tucker model directly
by alternating least squares over the factors and the core, which only has
``N d r + r^N`` unknowns.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .tensor_core import as_tensor, matricize, read_tnsr, write_tnsr
from .tucker import TuckerDecomp, hosvd, random_orthonormal, reconstruct

__all__ = [
    "MeasurementDataset",
    "RegressionReport",
    "sample_gaussian_arm",
    "sample_gaussian_arms",
    "sample_one_hot_arm",
    "sample_one_hot_arms",
    "fit_ridge_hosvd",
    "fit_als",
    "eta_formula",
    "save_dataset",
    "load_dataset",
    "RIDGE_DIM_CAP",
]

RIDGE_DIM_CAP = 20000
_NORM_SLACK = 1e-12


@dataclass(frozen=True)
class MeasurementDataset:
    """Arms stacked along axis 0, shape ``(T1, d, ..., d)``, with their rewards."""

    arms: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        arms = np.ascontiguousarray(self.arms, dtype=np.float64)
        rewards = np.ascontiguousarray(self.rewards, dtype=np.float64).ravel()
        if arms.ndim < 2 or arms.shape[0] < 1:
            raise ValueError("need at least one arm, stacked along axis 0")
        if rewards.shape[0] != arms.shape[0]:
            raise ValueError(f"{arms.shape[0]} arms but {rewards.shape[0]} rewards")
        if not (np.all(np.isfinite(arms)) and np.all(np.isfinite(rewards))):
            raise ValueError("dataset contains non-finite values")
        norms = np.linalg.norm(arms.reshape(arms.shape[0], -1), axis=1)
        if np.any(norms > 1 + _NORM_SLACK):
            raise ValueError(f"arm {int(np.argmax(norms))} has norm {norms.max():.6g} > 1")
        object.__setattr__(self, "arms", arms)
        object.__setattr__(self, "rewards", rewards)

    def __len__(self) -> int:
        return self.arms.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.arms.shape[1:]

    @property
    def design(self) -> np.ndarray:
        return self.arms.reshape(len(self), -1)


@dataclass
class RegressionReport:
    estimate: TuckerDecomp
    iterations: int
    residual: float
    eta_observed: float | None = None
    objective_history: list = field(default_factory=list)

    def full(self) -> np.ndarray:
        return reconstruct(self.estimate)


# -- measurement arms -------------------------------------------------------

def sample_gaussian_arms(k: int, d: int, order: int, rng: np.random.Generator,
                         clip: bool = True):
    """``k`` arms with i.i.d. ``N(0, 1/d^N)`` entries.

    The squared norm has mean 1, so roughly half of all draws land outside
    the unit ball.  With ``clip=True`` those are rescaled onto the sphere,
    which keeps every arm playable but shrinks the second moments.

    Returns
    -------
    arms : ndarray (k, d, ..., d)
    n_clipped : int
        How many draws had norm above 1 and were rescaled onto the sphere.
    """
    if d < 1 or order < 1:
        raise ValueError("d and N must be positive")
    dim = d ** order
    z = rng.standard_normal((k, dim)) / math.sqrt(dim)
    norms = np.linalg.norm(z, axis=1)
    over = norms > 1.0
    if clip:
        z[over] /= norms[over, None]
    return z.reshape((k,) + (d,) * order), int(over.sum())


def sample_gaussian_arm(d: int, order: int, rng: np.random.Generator, clip: bool = True) -> np.ndarray:
    arms, _ = sample_gaussian_arms(1, d, order, rng, clip)
    return arms[0]


def sample_one_hot_arms(k: int, d: int, order: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` one-hot arms with the hot cell uniform over all ``d^N`` positions."""
    dim = d ** order
    arms = np.zeros((k, dim))
    arms[np.arange(k), rng.integers(0, dim, size=k)] = 1.0
    return arms.reshape((k,) + (d,) * order)


def sample_one_hot_arm(d: int, order: int, rng: np.random.Generator) -> np.ndarray:
    return sample_one_hot_arms(1, d, order, rng)[0]


def eta_formula(d: int, r: int, order: int, T1: int, c: float = 1.0) -> float:
    """Error level ``sqrt(c d^N (d r + r^N) / T1)`` for random measurement arms."""
    return math.sqrt(c * d ** order * (d * r + r ** order) / T1)


# -- estimators ---------------------------------------------------------------

def _ranks_tuple(ranks, order: int) -> tuple[int, ...]:
    if isinstance(ranks, (int, np.integer)):
        return (int(ranks),) * order
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != order:
        raise ValueError(f"need {order} ranks, got {len(ranks)}")
    return ranks


def _rms(residuals: np.ndarray) -> float:
    return float(np.sqrt(np.mean(residuals ** 2)))


def _eta(est: TuckerDecomp, truth) -> float | None:
    if truth is None:
        return None
    return float(np.linalg.norm(reconstruct(est) - as_tensor(truth)))


def _ridge_solve(a: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    # primal (D x D) or dual (T x T) system, whichever is smaller
    t, dim = a.shape
    if dim <= t:
        g = a.T @ a
        g[np.diag_indices_from(g)] += ridge
        return scipy.linalg.solve(g, a.T @ y, assume_a="pos")
    k = a @ a.T
    k[np.diag_indices_from(k)] += ridge
    return a.T @ scipy.linalg.solve(k, y, assume_a="pos")


def fit_ridge_hosvd(data: MeasurementDataset, ranks, ridge: float = 1e-6,
                    cap: int = RIDGE_DIM_CAP, truth=None) -> RegressionReport:
    """Ridge regression on the vectorized tensor followed by HOSVD truncation.

    Parameters
    ----------
    data : MeasurementDataset
    ranks : int or sequence of int
        Target multilinear rank (an int means the same rank for every mode).
    ridge : float
        Positive ridge penalty.
    cap : int
        Largest ``d^N`` handled; above it use :func:`fit_als`.
    truth : ndarray, optional
        True tensor, used only to fill ``eta_observed``.
    """
    if ridge <= 0:
        raise ValueError("ridge must be positive")
    shape = data.shape
    dim = int(np.prod(shape))
    if dim > cap:
        raise ValueError(f"d^N = {dim} exceeds the ridge cap {cap}; use fit_als instead")
    ranks = _ranks_tuple(ranks, len(shape))
    a = data.design
    x = _ridge_solve(a, data.rewards, ridge).reshape(shape)
    est = hosvd(x, ranks)
    resid = data.rewards - a @ reconstruct(est).ravel()
    return RegressionReport(est, 0, _rms(resid), _eta(est, truth))


def _batched_products(arms: np.ndarray, mats: Sequence, skip: int | None = None) -> np.ndarray:
    # arms (T, d, ..., d); apply x_n mats[n]^T on every mode except `skip`
    out = arms
    for n, u in enumerate(mats):
        if n == skip:
            continue
        out = np.moveaxis(np.tensordot(out, u, axes=([n + 1], [0])), -1, n + 1)
    return out


def _solve_ls(feats: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    g = feats.T @ feats
    rhs = feats.T @ y
    try:
        c = scipy.linalg.cho_factor(g, check_finite=False)
        sol = scipy.linalg.cho_solve(c, rhs, check_finite=False)
        # reject numerically singular systems
        if np.all(np.isfinite(sol)) and np.linalg.cond(g) < 1e12:
            return sol
    except np.linalg.LinAlgError:
        pass
    g[np.diag_indices_from(g)] += ridge
    return scipy.linalg.solve(g, rhs, assume_a="pos")


def _core_features(arms: np.ndarray, factors: Sequence) -> np.ndarray:
    return _batched_products(arms, factors).reshape(arms.shape[0], -1)


def _objective(data: MeasurementDataset, core: np.ndarray, factors: Sequence) -> float:
    pred = _core_features(data.arms, factors) @ core.ravel()
    return float(np.sum((data.rewards - pred) ** 2))


def fit_als(data: MeasurementDataset, ranks, max_iters: int = 200, tol: float = 1e-9,
            init_ridge: float = 1e-6, cap: int = RIDGE_DIM_CAP, rng=None,
            truth=None) -> RegressionReport:
    """Alternating least squares for the Tucker measurement model.

    Each sweep solves, in turn, the least-squares problem for every factor with
    the others held fixed, re-orthonormalizes it by QR (absorbing the
    triangular part into the core), then solves for the core.  The recorded
    objective (sum of squared residuals) never increases: a sweep that would
    raise it is discarded and the fit stops.

    The starting point is :func:`fit_ridge_hosvd` when ``d^N <= cap``,
    otherwise random orthonormal factors drawn from ``rng`` with a fitted core.
    ``max_iters=0`` returns that starting point unchanged.
    """
    shape = data.shape
    order = len(shape)
    ranks = _ranks_tuple(ranks, order)
    if max_iters < 0 or tol < 0 or init_ridge <= 0:
        raise ValueError("need max_iters >= 0, tol >= 0 and init_ridge > 0")
    floor = max(r * d for r, d in zip(ranks, shape))
    if len(data) < floor:
        raise ValueError(f"ALS needs at least r*d = {floor} measurements, got {len(data)}")

    if int(np.prod(shape)) <= cap:
        init = fit_ridge_hosvd(data, ranks, ridge=init_ridge, cap=cap).estimate
        core = init.core.copy()
        factors = [f.copy() for f in init.factors]
    else:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        factors = [random_orthonormal(d, r, rng) for d, r in zip(shape, ranks)]
        core = _solve_ls(_core_features(data.arms, factors), data.rewards, init_ridge).reshape(ranks)

    arms, y = data.arms, data.rewards
    obj = _objective(data, core, factors)
    history = [obj]
    it = 0
    while it < max_iters:
        new_core = core.copy()
        new_factors = [f.copy() for f in factors]
        for n in range(order):
            partial = _batched_products(arms, new_factors, skip=n)
            gmat = matricize(new_core, n)                                  # (r_n, prod r)
            rest = np.moveaxis(partial, n + 1, 1).reshape(len(data), shape[n], -1)
            feats = (rest @ gmat.T).reshape(len(data), -1)                 # vec of (d_n, r_n)
            u = _solve_ls(feats, y, init_ridge).reshape(shape[n], ranks[n])
            q, rr = np.linalg.qr(u)
            new_factors[n] = q
            new_core = np.moveaxis(np.tensordot(rr, new_core, axes=([1], [n])), 0, n)
        new_core = _solve_ls(_core_features(arms, new_factors), y, init_ridge).reshape(ranks)
        new_obj = _objective(data, new_core, new_factors)
        if new_obj > obj:
            break
        it += 1
        core, factors = new_core, new_factors
        decrease = (obj - new_obj) / max(obj, np.finfo(float).tiny)
        obj = new_obj
        history.append(obj)
        if decrease < tol:
            break

    est = TuckerDecomp(core, tuple(factors))
    resid = y - _core_features(arms, factors) @ core.ravel()
    return RegressionReport(est, it, _rms(resid), _eta(est, truth), history)


# -- serialization ------------------------------------------------------------

def save_dataset(data: MeasurementDataset, arms_path, rewards_path) -> None:
    """Arms as one order-(N+1) TNSR tensor; rewards as a ``t,reward`` CSV."""
    write_tnsr(arms_path, data.arms)
    with open(rewards_path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "reward"])
        for t, v in enumerate(data.rewards):
            w.writerow([t, repr(float(v))])


def load_dataset(arms_path, rewards_path) -> MeasurementDataset:
    arms = read_tnsr(arms_path)
    with open(rewards_path, newline="", encoding="ascii") as fh:
        rows = list(csv.DictReader(fh))
    rewards = np.array([float(row["reward"]) for row in rows])
    return MeasurementDataset(arms, rewards)
