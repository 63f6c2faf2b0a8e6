"""Norm-constrained OFU learning (LowOFUL) and the two-phase tensor bandit loop.

Phase A spends ``T1`` steps on forced exploration and fits a low-rank
estimate of the system tensor.  Its factors define a rotation after which
the projected system vector has most of its energy in the first ``q(rho)``
coordinates.  Phase B then runs LowOFUL, whose ridge penalty is ``lam`` on
those coordinates and the much larger ``lam_perp`` on the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .environments import BanditEnv
from .projection import build_projection, project_action, q_of
from .regression import (
    MeasurementDataset,
    eta_formula,
    fit_als,
    fit_ridge_hosvd,
    sample_gaussian_arms,
    sample_one_hot_arms,
)
from .tucker import hosvd, min_mode_singular_value

__all__ = [
    "RegretTrace",
    "LowOfulConfig",
    "LowOFUL",
    "theorem1_params",
    "corollary1_T1",
    "TofuConfig",
    "run_tofu",
    "run_oful_vectorized",
    "run_random",
    "RESOLVE_EVERY",
]

RESOLVE_EVERY = 500
_B_NORM_SLACK = 1e-9
_TIE_RTOL = 1e-12


@dataclass
class RegretTrace:
    """Per-step regret of one run; ``phase`` holds ``"A"`` or ``"B"`` per step."""

    algo: str
    seed: int
    instant: np.ndarray
    phase: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.instant = np.asarray(self.instant, dtype=np.float64)
        self.phase = np.asarray(self.phase, dtype="<U1")
        if self.instant.shape != self.phase.shape:
            raise ValueError("instant and phase must have equal length")

    def __len__(self) -> int:
        return self.instant.size

    @property
    def cum(self) -> np.ndarray:
        return np.cumsum(self.instant)

    @property
    def final(self) -> float:
        return float(self.instant.sum())


# -- parameter formulas -------------------------------------------------------

def theorem1_params(C: float, omega: float, eta: float, rho: int, T: int, q: int,
                    order: int) -> tuple[float, float, float]:
    """Regularization and tail-norm settings for Phase B.

    Returns ``(lam, lam_perp, C_perp)`` with ``lam = C^-2``,
    ``lam_perp = T / (q log(1 + T / lam))`` and
    ``C_perp = 2^(N/2) C eta^rho omega^-rho``.

    Raises
    ------
    ValueError
        If ``eta > omega``: the tail bound is only valid when the Phase A error
        does not exceed the smallest unfolding singular value.
    """
    if C <= 0 or omega <= 0 or T < 1 or q < 1 or eta < 0:
        raise ValueError("need C > 0, omega > 0, eta >= 0, T >= 1 and q >= 1")
    if eta > omega:
        raise ValueError(
            f"estimation error eta={eta:.6g} exceeds omega={omega:.6g}; the tail-norm bound "
            "needs eta <= omega (lengthen Phase A or supply a smaller eta)"
        )
    lam = C ** -2
    lam_perp = T / (q * math.log(1 + T / lam))
    c_perp = 2 ** (order / 2) * C * eta ** rho * omega ** -rho
    return lam, lam_perp, c_perp


def corollary1_T1(iota: float, c: float, d: int, r: int, order: int, omega: float,
                  T: int) -> int:
    """Phase A length balancing exploration cost against the residual tail term."""
    k = d * r + r ** order
    terms = (
        iota,
        c * d ** order * k / omega ** 2,
        c ** 0.6 * d ** (0.6 * order) * k ** 0.6 * omega ** -1.2 * T ** 0.4,
    )
    return int(math.ceil(max(terms)))


# -- LowOFUL ---------------------------------------------------------------------

@dataclass(frozen=True)
class LowOfulConfig:
    dim: int
    q: int
    lam: float
    lam_perp: float
    C: float
    C_perp: float
    delta: float

    def __post_init__(self):
        if not 0 <= self.q <= self.dim or self.dim < 1:
            raise ValueError(f"need 0 <= q <= dim, got q={self.q}, dim={self.dim}")
        if self.lam <= 0 or self.lam_perp <= 0 or self.C <= 0 or self.C_perp < 0:
            raise ValueError("lam, lam_perp and C must be positive and C_perp non-negative")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def lam_diag(self) -> np.ndarray:
        return np.concatenate([np.full(self.q, self.lam), np.full(self.dim - self.q, self.lam_perp)])


class LowOFUL:
    """Weighted-ridge confidence ellipsoid with optimistic arm selection.

    State after ``t`` updates: ``V = Lambda + sum b b^T``, ``u = sum r b``,
    ``ybar = V^-1 u`` and the radius

        sqrt_beta = sqrt(log(det V / (det Lambda * delta^2))) + sqrt(lam) C + sqrt(lam_perp) C_perp.

    ``V^-1`` is kept current with Sherman-Morrison updates and rebuilt from
    ``V`` every ``RESOLVE_EVERY`` updates.
    """

    def __init__(self, cfg: LowOfulConfig):
        self.cfg = cfg
        diag = cfg.lam_diag
        self.V = np.diag(diag)
        self.V_inv = np.diag(1.0 / diag)
        self.u = np.zeros(cfg.dim)
        self.ybar = np.zeros(cfg.dim)
        self.t_count = 0
        self._logdet0 = float(np.sum(np.log(diag)))
        self._logdet = self._logdet0
        self._offset = math.sqrt(cfg.lam) * cfg.C + math.sqrt(cfg.lam_perp) * cfg.C_perp
        self.sqrt_beta = self._radius()

    def _radius(self) -> float:
        log_ratio = self._logdet - self._logdet0 - 2.0 * math.log(self.cfg.delta)
        return math.sqrt(max(log_ratio, 0.0)) + self._offset

    def _resolve(self):
        c = scipy.linalg.cho_factor(self.V)
        self.V_inv = scipy.linalg.cho_solve(c, np.eye(self.cfg.dim))
        self.V_inv = 0.5 * (self.V_inv + self.V_inv.T)
        self._logdet = float(2.0 * np.sum(np.log(np.diag(c[0]))))

    def update(self, b, reward: float) -> None:
        b = np.asarray(b, dtype=np.float64).ravel()
        if b.shape != (self.cfg.dim,):
            raise ValueError(f"action vector must have length {self.cfg.dim}")
        if not (np.all(np.isfinite(b)) and math.isfinite(reward)):
            raise ValueError("non-finite action or reward")
        if float(np.linalg.norm(b)) > 1 + _B_NORM_SLACK:
            raise ValueError("action vector norm exceeds 1")
        vb = self.V_inv @ b
        den = 1.0 + float(b @ vb)
        self.V_inv -= np.outer(vb, vb) / den
        self.V += np.outer(b, b)
        self.u += reward * b
        self._logdet += math.log(den)
        self.t_count += 1
        if self.t_count % RESOLVE_EVERY == 0:
            self._resolve()
        self.ybar = self.V_inv @ self.u
        self.sqrt_beta = self._radius()

    def ucb(self, candidates) -> np.ndarray:
        """``<b, ybar> + sqrt_beta ||b||_{V^-1}`` for each candidate row."""
        b = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
        width = np.sqrt(np.maximum(np.einsum("ij,ij->i", b @ self.V_inv, b), 0.0))
        return b @ self.ybar + self.sqrt_beta * width

    def select(self, candidates) -> int:
        """Index of the most optimistic candidate; ties go to the lowest index.

        Values within a relative ``1e-12`` of the maximum are treated as tied.
        """
        b = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
        if b.shape[0] == 0 or b.size == 0:
            raise ValueError("no candidates to select from")
        vals = self.ucb(b)
        top = float(vals.max())
        # values equal up to roundoff count as ties
        return int(np.flatnonzero(vals >= top - _TIE_RTOL * max(1.0, abs(top)))[0])

    def in_ellipsoid(self, y) -> bool:
        diff = np.asarray(y, dtype=np.float64) - self.ybar
        return float(np.sqrt(diff @ self.V @ diff)) <= self.sqrt_beta


# -- runners ---------------------------------------------------------------------

@dataclass
class TofuConfig:
    """Settings for :func:`run_tofu`.

    ``T1=None`` picks the Phase A length with :func:`corollary1_T1` using
    ``iota`` and ``c``.  ``omega=None`` reads the smallest unfolding singular
    value from the environment's true tensor.  ``eta=None`` uses
    :func:`eta_formula` with the same ``c``.  ``phase_a_arms="auto"`` draws
    uniformly from the offer in finite mode and uses ``"gaussian"`` arms in
    open mode.  ``oracle=True`` skips Phase A and projects with the true
    factors (``eta = 0``).
    """

    T: int
    r: int
    T1: int | None = None
    rho: int = 3
    delta: float = 0.1
    regressor: str = "als"
    phase_a_arms: str = "auto"
    C: float = 1.0
    omega: float | None = None
    eta: float | None = None
    iota: float = 0.0
    c: float = 1.0
    oracle: bool = False
    ridge: float = 1e-6


def _finite_candidates(env: BanditEnv, t: int):
    offer = env.offer(t)
    arms = offer.candidates() if env.action_mode == "open" else offer
    return arms


def _play(env: BanditEnv, arms: np.ndarray, i: int):
    if env.action_mode == "finite":
        return env.pull(i)
    return env.step(arms[i])


def _phase_a(env: BanditEnv, cfg: TofuConfig, T1: int, rng: np.random.Generator):
    d, order = env.shape[0], len(env.shape)
    rule = cfg.phase_a_arms
    if rule == "auto":
        rule = "offer" if env.action_mode == "finite" else "gaussian"
    if rule != "offer" and env.action_mode == "finite":
        raise ValueError(f"phase_a_arms={rule!r} needs an open action set")
    if rule == "gaussian":
        planned, _ = sample_gaussian_arms(T1, d, order, rng)
    elif rule == "one_hot":
        planned = sample_one_hot_arms(T1, d, order, rng)
    elif rule != "offer":
        raise ValueError(f"unknown phase_a_arms rule {rule!r}")
    arms = np.empty((T1,) + env.shape)
    rewards = np.empty(T1)
    regret = np.empty(T1)
    for t in range(T1):
        offer = env.offer(t)
        if rule == "offer":
            i = int(rng.integers(env.m))
            arms[t] = offer[i]
            rewards[t], regret[t] = env.pull(i)
        else:
            arms[t] = planned[t]
            rewards[t], regret[t] = env.step(planned[t])
    return MeasurementDataset(arms, rewards), regret


def run_tofu(env: BanditEnv, cfg: TofuConfig, rng=None, seed: int = 0) -> RegretTrace:
    """Run the two-phase algorithm for ``cfg.T`` steps and return its regret trace."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    d, order = env.shape[0], len(env.shape)
    if any(s != d for s in env.shape):
        raise ValueError("run_tofu expects a cubical (d, ..., d) environment")
    if not 1 <= cfg.r <= d or not 1 <= cfg.rho <= order:
        raise ValueError("need 1 <= r <= d and 1 <= rho <= N")
    omega = cfg.omega if cfg.omega is not None else min_mode_singular_value(env.truth)
    info = {"omega": omega}

    if cfg.oracle:
        T1 = 0
        factors = hosvd(env.truth, (cfg.r,) * order).factors
        eta = 0.0
        regret_a = np.empty(0)
    else:
        T1 = cfg.T1 if cfg.T1 is not None else corollary1_T1(cfg.iota, cfg.c, d, cfg.r, order, omega, cfg.T)
        if not 1 <= T1 < cfg.T:
            raise ValueError(f"Phase A length T1={T1} must satisfy 1 <= T1 < T={cfg.T}")
        data, regret_a = _phase_a(env, cfg, T1, rng)
        if cfg.regressor == "als":
            report = fit_als(data, cfg.r, init_ridge=cfg.ridge, rng=rng, truth=env.truth)
        elif cfg.regressor == "ridge_hosvd":
            report = fit_ridge_hosvd(data, cfg.r, ridge=cfg.ridge, truth=env.truth)
        else:
            raise ValueError(f"unknown regressor {cfg.regressor!r}")
        factors = report.estimate.factors
        eta = cfg.eta if cfg.eta is not None else eta_formula(d, cfg.r, order, T1, cfg.c)
        info["eta_observed"] = report.eta_observed

    pmap = build_projection(factors, cfg.rho)
    try:
        lam, lam_perp, c_perp = theorem1_params(cfg.C, omega, eta, cfg.rho, cfg.T, pmap.q_rho, order)
    except ValueError as exc:
        raise ValueError(f"{exc} [T1={T1}]") from None
    info.update(T1=T1, eta=eta, q=pmap.q_rho, lam=lam, lam_perp=lam_perp, C_perp=c_perp)
    learner = LowOFUL(LowOfulConfig(pmap.dim, pmap.q_rho, lam, lam_perp, cfg.C, c_perp, cfg.delta))

    regret_b = np.empty(cfg.T - T1)
    for k, t in enumerate(range(T1, cfg.T)):
        arms = _finite_candidates(env, t)
        b = project_action(pmap, arms)
        i = learner.select(b)
        reward, regret_b[k] = _play(env, arms, i)
        learner.update(b[i], reward)

    phase = np.array(["A"] * T1 + ["B"] * (cfg.T - T1))
    algo = "tofu_oracle" if cfg.oracle else "tofu"
    return RegretTrace(algo, seed, np.concatenate([regret_a, regret_b]), phase, info)


def run_oful_vectorized(env: BanditEnv, T: int, lam: float = 1.0, delta: float = 0.1,
                        C: float = 1.0, seed: int = 0) -> RegretTrace:
    """OFUL on the flattened arms: LowOFUL with ``q = dim`` and a uniform penalty."""
    learner = LowOFUL(LowOfulConfig(env.dim, env.dim, lam, lam, C, 0.0, delta))
    regret = np.empty(T)
    for t in range(T):
        arms = _finite_candidates(env, t)
        flat = arms.reshape(arms.shape[0], -1)
        i = learner.select(flat)
        reward, regret[t] = _play(env, arms, i)
        learner.update(flat[i], reward)
    return RegretTrace("oful_vec", seed, regret, np.full(T, "B"), {"lam": lam})


def run_random(env: BanditEnv, T: int, rng=None, seed: int = 0) -> RegretTrace:
    """Uniformly random arm from every offer."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    regret = np.empty(T)
    for t in range(T):
        arms = _finite_candidates(env, t)
        i = int(rng.integers(arms.shape[0]))
        _, regret[t] = _play(env, arms, i)
    return RegretTrace("random", seed, regret, np.full(T, "B"))
