"""Synthetic low-rank tensor bandit instances and the reward channel."""

from __future__ import annotations

import math

import numpy as np

from .tensor_core import as_tensor, matricize, multi_mode_product, fold
from .tucker import min_mode_singular_value, random_orthonormal

__all__ = [
    "ARM_NORM_SLACK",
    "BanditEnv",
    "OpenActionSet",
    "gen_system_tensor",
    "lower_bound_delta",
    "gen_lower_bound_instance",
    "sample_sphere",
]

ARM_NORM_SLACK = 1e-9


def sample_sphere(m: int, shape, rng: np.random.Generator) -> np.ndarray:
    """``m`` tensors drawn uniformly from the unit Frobenius sphere."""
    shape = tuple(shape)
    z = rng.standard_normal((m, int(np.prod(shape))))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z.reshape((m,) + shape)


def _flatten_spectra(core: np.ndarray, sweeps: int = 8) -> np.ndarray:
    # Alternate per-mode scalings P diag(s^-1/2) P^T to pull every unfolding
    # spectrum towards flat, which keeps the smallest singular value away from 0.
    g = core
    for _ in range(sweeps):
        for n in range(g.ndim):
            p, s, _ = np.linalg.svd(matricize(g, n), full_matrices=False)
            scale = (p / np.sqrt(s)) @ p.T
            g = fold(scale @ matricize(g, n), n, g.shape)
    return g


def gen_system_tensor(d: int, order: int, r: int, C: float, omega_min: float,
                      rng: np.random.Generator, max_tries: int = 50) -> np.ndarray:
    """Random tensor of multilinear rank ``(r,) * order`` with ``||x||_F == C``.

    The factors are Haar-random orthonormal matrices.  The core's unfolding
    spectra are flattened and the result rescaled to norm ``C``. Draws are
    repeated until every unfolding's smallest positive singular value is at
    least ``omega_min``.  With equal-rank modes that value can never exceed
    ``C / sqrt(r)``, so larger requests are rejected up front.
    """
    if not 1 <= r <= d:
        raise ValueError(f"rank r={r} must lie in [1, d={d}]")
    if C <= 0 or omega_min <= 0:
        raise ValueError("C and omega_min must be positive")
    ceiling = C / math.sqrt(r)
    if omega_min > ceiling * (1 + 1e-12):
        raise ValueError(
            f"omega_min={omega_min} infeasible: unfolding spectra of a norm-{C} rank-{r} "
            f"tensor have min singular value at most C/sqrt(r)={ceiling:.6g}"
        )
    for _ in range(max_tries):
        core = rng.standard_normal((r,) * order)
        if r > 1:
            core = _flatten_spectra(core)
        core *= C / np.linalg.norm(core)
        factors = [random_orthonormal(d, r, rng) for _ in range(order)]
        x = multi_mode_product(core, factors)
        x *= C / np.linalg.norm(x)
        if min_mode_singular_value(x) >= omega_min:
            return x
    raise ValueError(
        f"could not reach omega_min={omega_min} with C={C}, r={r}, N={order} "
        f"after {max_tries} draws"
    )


def lower_bound_delta(r: int, order: int, T: int) -> float:
    """Core magnitude of the hard instance: ``sqrt(r^N / T) / (8 sqrt 3)``."""
    return math.sqrt(r ** order / T) / (8.0 * math.sqrt(3.0))


def gen_lower_bound_instance(d: int, order: int, r: int, T: int,
                             rng: np.random.Generator) -> np.ndarray:
    """Hard instance: a random-sign ``+-Delta`` core in the leading ``r^N`` corner.

    The factors are ``[I_r; 0]`` on every mode, so all elements outside the
    leading corner are exactly zero and ``||x||_F^2 == r^N Delta^2``.
    """
    if not 1 <= r <= d:
        raise ValueError(f"rank r={r} must lie in [1, d={d}]")
    if r ** order > 2 * T:
        raise ValueError(f"the hard instance requires r^N <= 2T, got r^N={r ** order}, T={T}")
    delta = lower_bound_delta(r, order, T)
    signs = rng.choice(np.array([-1.0, 1.0]), size=(r,) * order)
    x = np.zeros((d,) * order)
    x[(slice(0, r),) * order] = delta * signs
    return x


class OpenActionSet:
    """Every tensor in the closed unit Frobenius ball is playable.

    ``candidates`` supplies a finite sphere sample for learners that must
    rank arms; regret is still measured against the ball optimum.
    """

    def __init__(self, shape, m: int, rng: np.random.Generator):
        self.shape = tuple(shape)
        self._m = m
        self._rng = rng

    def contains(self, a) -> bool:
        a = np.asarray(a)
        return a.shape == self.shape and float(np.linalg.norm(a)) <= 1 + ARM_NORM_SLACK

    def candidates(self) -> np.ndarray:
        return sample_sphere(self._m, self.shape, self._rng)


class BanditEnv:
    """Stochastic tensor bandit with reward ``<a, truth> + noise_std * N(0, 1)``.

    Parameters
    ----------
    truth : ndarray
        System tensor.
    noise_std : float
        Gaussian noise level.
    action_mode : {"finite", "open"}
        ``"finite"`` offers ``m`` unit-sphere arms, fresh every step when
        ``resample`` is true, otherwise drawn once and reused.  ``"open"`` makes
        the whole unit ball playable.
    m : int
        Number of arms per offer (also the candidate count in open mode).
    C : float, optional
        Declared bound on ``||truth||_F``; checked when given.
    rng : numpy Generator or int seed
    """

    def __init__(self, truth, noise_std: float = 0.1, action_mode: str = "finite",
                 m: int = 32, resample: bool = True, C: float | None = None, rng=None):
        self.truth = as_tensor(truth, copy=True)
        self.truth.setflags(write=False)
        if noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if action_mode not in ("finite", "open"):
            raise ValueError(f"unknown action_mode {action_mode!r}")
        if m < 1:
            raise ValueError("m must be at least 1")
        self.norm = float(np.linalg.norm(self.truth))
        if C is not None and self.norm > C * (1 + 1e-12):
            raise ValueError(f"||truth||_F = {self.norm:.6g} exceeds C = {C}")
        self.noise_std = float(noise_std)
        self.action_mode = action_mode
        self.m = int(m)
        self.resample = bool(resample)
        self.C = C
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self._flat = self.truth.ravel()
        self._offer = None
        self._offer_flat = None
        self._offer_means = None
        self._fixed = None
        self._open = OpenActionSet(self.shape, self.m, self.rng) if action_mode == "open" else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.truth.shape

    @property
    def dim(self) -> int:
        return self.truth.size

    def offer(self, t: int):
        """Action set for step ``t``: an ``(m, *shape)`` array, or an OpenActionSet."""
        if self.action_mode == "open":
            self._offer = self._open
            return self._open
        if self.resample or self._fixed is None:
            arms = sample_sphere(self.m, self.shape, self.rng)
            if not self.resample:
                self._fixed = arms
        else:
            arms = self._fixed
        self._offer = arms
        self._offer_flat = arms.reshape(self.m, -1)
        self._offer_means = self._offer_flat @ self._flat
        return arms

    def mean(self, a) -> float:
        return float(np.dot(np.asarray(a, dtype=np.float64).ravel(), self._flat))

    def best_mean(self) -> float:
        """Largest mean reward available in the current offer."""
        if self._offer is None:
            raise RuntimeError("call offer() before querying the current action set")
        if self.action_mode == "open":
            return self.norm
        return float(self._offer_means.max())

    def pull(self, i: int) -> tuple[float, float]:
        """Play arm ``i`` of the current finite offer; returns (reward, regret)."""
        if self.action_mode != "finite" or self._offer is None:
            raise RuntimeError("pull() needs a current finite offer")
        mu = float(self._offer_means[i])
        reward = mu + self.noise_std * float(self.rng.standard_normal())
        return reward, float(self._offer_means.max() - mu)

    def step(self, a) -> tuple[float, float]:
        """Play tensor ``a``; returns (reward, instantaneous regret)."""
        a = as_tensor(a)
        if a.shape != self.shape:
            raise ValueError(f"arm shape {a.shape} does not match {self.shape}")
        if float(np.linalg.norm(a)) > 1 + ARM_NORM_SLACK:
            raise ValueError("arm norm exceeds 1")
        if self._offer is None:
            raise RuntimeError("call offer() before step()")
        if self.action_mode == "finite":
            hits = np.flatnonzero(np.all(self._offer_flat == a.ravel(), axis=1))
            if hits.size == 0:
                raise ValueError("arm is not in the current offer")
            return self.pull(int(hits[0]))
        mu = self.mean(a)
        reward = mu + self.noise_std * float(self.rng.standard_normal())
        return reward, max(0.0, self.norm - mu)
