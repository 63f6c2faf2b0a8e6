"""Experiment configuration, orchestration, CSV/SVG output and the selftest.

Configuration files are flat ``key=value`` text.  Blank lines and lines
starting with ``#`` are ignored; keys use dotted prefixes::

    d=4
    N=3
    r=1
    T=8000
    tofu.rho=1
    env.noise_std=0.1
    seeds=1-20
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .bandit import RegretTrace, TofuConfig, run_oful_vectorized, run_random, run_tofu
from .checks import GroupResult, run_suites
from .environments import BanditEnv, gen_system_tensor

__all__ = [
    "ALGORITHMS",
    "CSV_HEADER",
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "parse_config_text",
    "serialize_config",
    "make_env",
    "run_one",
    "run_experiment",
    "worker_count",
    "write_csv",
    "read_csv",
    "plot_svg",
    "SelftestReport",
    "selftest",
    "reference_config_path",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("tofu", "tofu_oracle", "oful_vec", "random")
CSV_HEADER = ("algo", "seed", "t", "phase", "instant_regret", "cum_regret")


class ConfigError(ValueError):
    """Bad configuration; ``lineno`` is the 1-based offending line (0 if unknown)."""

    def __init__(self, msg: str, lineno: int = 0):
        super().__init__(f"line {lineno}: {msg}" if lineno else msg)
        self.lineno = lineno


# -- value codecs -------------------------------------------------------------------

def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _optional(conv: Callable) -> Callable:
    def parse(s: str):
        return None if s.lower() in ("auto", "none", "") else conv(s)
    return parse


def _parse_seeds(s: str) -> tuple[int, ...]:
    """Comma-separated non-negative seeds; ``a-b`` is an inclusive range."""
    out: list[int] = []
    for part in (p.strip() for p in s.split(",")):
        if not part:
            continue
        lo, _, hi = part.partition("-")
        lo_i, hi_i = int(lo), int(hi) if hi else int(lo)
        if lo_i < 0 or hi_i < lo_i:
            raise ValueError(f"bad seed entry {part!r}")
        out.extend(range(lo_i, hi_i + 1))
    return tuple(out)


def _parse_algos(s: str) -> tuple[str, ...]:
    return tuple(a.strip() for a in s.split(",") if a.strip())


def _fmt(v: Any) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def _key(name: str, conv: Callable, default: Any, doc: str = ""):
    return field(default=default, metadata={"key": name, "conv": conv, "doc": doc})


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a shape, a horizon, algorithms, seeds and their settings."""

    d: int = _key("d", int, 4)
    N: int = _key("N", int, 3)
    r: int = _key("r", int, 1)
    T: int = _key("T", int, 8000)
    algorithms: tuple = _key("algorithms", _parse_algos, ALGORITHMS)
    seeds: tuple = _key("seeds", _parse_seeds, tuple(range(1, 21)))
    output: str = _key("output", str, "regret.csv")

    tofu_T1: int | None = _key("tofu.T1", _optional(int), None, "auto: Phase A length from iota and c")
    tofu_iota: float = _key("tofu.iota", float, 0.0)
    tofu_c: float = _key("tofu.c", float, 1.0)
    tofu_rho: int = _key("tofu.rho", int, 3)
    tofu_delta: float = _key("tofu.delta", float, 0.1)
    tofu_regressor: str = _key("tofu.regressor", str, "als")
    tofu_phase_a_arms: str = _key("tofu.phase_a_arms", str, "auto")
    tofu_omega_source: str = _key("tofu.omega_source", str, "true")
    tofu_omega: float | None = _key("tofu.omega", _optional(float), None)
    tofu_eta: float | None = _key("tofu.eta", _optional(float), None)

    oful_lambda: float = _key("oful.lambda", float, 1.0)
    oful_delta: float = _key("oful.delta", float, 0.1)

    env_C: float = _key("env.C", float, 1.0)
    env_omega_min: float | None = _key("env.omega_min", _optional(float), None, "auto: C / (2 sqrt r)")
    env_noise_std: float = _key("env.noise_std", float, 0.1)
    env_action_mode: str = _key("env.action_mode", str, "finite")
    env_m: int = _key("env.m", int, 32)
    env_resample: bool = _key("env.resample", _parse_bool, True)

    def __post_init__(self):
        problems = self.problems()
        if problems:
            key, msg = problems[0]
            raise ConfigError(f"{key}: {msg}")

    def problems(self) -> list[tuple[str, str]]:
        """List of ``(key, message)`` invariant violations."""
        p = []
        if self.N < 3:
            p.append(("N", "order N must be at least 3"))
        if self.d < 1:
            p.append(("d", "d must be positive"))
        if not 1 <= self.r <= self.d:
            p.append(("r", f"need 1 <= r <= d, got r={self.r}"))
        if self.T < 1:
            p.append(("T", "T must be at least 1"))
        if not self.seeds:
            p.append(("seeds", "seed list is empty"))
        if not self.algorithms:
            p.append(("algorithms", "no algorithms listed"))
        for a in self.algorithms:
            if a not in ALGORITHMS:
                p.append(("algorithms", f"unknown algorithm {a!r}; choose from {', '.join(ALGORITHMS)}"))
        if not 1 <= self.tofu_rho <= self.N:
            p.append(("tofu.rho", f"rho must lie in [1, N={self.N}], got {self.tofu_rho}"))
        if self.tofu_T1 is not None and not 1 <= self.tofu_T1 < self.T:
            p.append(("tofu.T1", "need 1 <= T1 < T"))
        if self.tofu_c <= 0:
            p.append(("tofu.c", "c must be positive"))
        for key, v in (("tofu.delta", self.tofu_delta), ("oful.delta", self.oful_delta)):
            if not 0 < v < 1:
                p.append((key, "delta must lie in (0, 1)"))
        if self.tofu_regressor not in ("als", "ridge_hosvd"):
            p.append(("tofu.regressor", "choose als or ridge_hosvd"))
        if self.tofu_phase_a_arms not in ("auto", "offer", "gaussian", "one_hot"):
            p.append(("tofu.phase_a_arms", "choose auto, offer, gaussian or one_hot"))
        if self.tofu_omega_source not in ("true", "supplied"):
            p.append(("tofu.omega_source", "choose true or supplied"))
        elif self.tofu_omega_source == "supplied" and (self.tofu_omega is None or self.tofu_omega <= 0):
            p.append(("tofu.omega", "omega_source=supplied needs a positive tofu.omega"))
        if self.tofu_eta is not None and self.tofu_eta < 0:
            p.append(("tofu.eta", "eta must be non-negative"))
        if self.oful_lambda <= 0:
            p.append(("oful.lambda", "lambda must be positive"))
        if self.env_C <= 0:
            p.append(("env.C", "C must be positive"))
        if self.env_omega_min is not None and self.env_omega_min <= 0:
            p.append(("env.omega_min", "omega_min must be positive"))
        if self.env_noise_std < 0:
            p.append(("env.noise_std", "noise_std must be non-negative"))
        if self.env_action_mode not in ("finite", "open"):
            p.append(("env.action_mode", "choose finite or open"))
        if self.env_m < 1:
            p.append(("env.m", "m must be at least 1"))
        return p

    @property
    def omega_min(self) -> float:
        return self.env_omega_min if self.env_omega_min is not None else self.env_C / (2 * math.sqrt(self.r))

    def tofu_config(self, oracle: bool = False) -> TofuConfig:
        return TofuConfig(
            T=self.T, r=self.r, T1=self.tofu_T1, rho=self.tofu_rho, delta=self.tofu_delta,
            regressor=self.tofu_regressor, phase_a_arms=self.tofu_phase_a_arms, C=self.env_C,
            omega=self.tofu_omega if self.tofu_omega_source == "supplied" else None,
            eta=self.tofu_eta, iota=self.tofu_iota, c=self.tofu_c, oracle=oracle,
        )


_FIELDS = {f.metadata["key"]: f for f in dataclasses.fields(ExperimentConfig)}


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse configuration text; errors carry the offending line number."""
    values: dict[str, Any] = {}
    where: dict[str, int] = {}
    lines = text.splitlines()
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in where:
            raise ConfigError(f"duplicate key {key!r} (first set on line {where[key]})", lineno)
        f = _FIELDS[key]
        try:
            values[f.name] = f.metadata["conv"](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno) from None
        where[key] = lineno
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        key = str(exc).split(":", 1)[0]
        raise ConfigError(str(exc), where.get(key, len(lines))) from None


def parse_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


def serialize_config(cfg: ExperimentConfig) -> str:
    """Every key in declaration order; ``parse_config_text`` inverts it."""
    out = []
    for key, f in _FIELDS.items():
        out.append(f"{key}={_fmt(getattr(cfg, f.name))}")
    return "\n".join(out) + "\n"


def reference_config_path() -> Path:
    """Bundled reference experiment (d=4, N=3, r=1, T=8000, 20 seeds)."""
    return Path(__file__).with_name("data") / "reference.cfg"


# -- orchestration -------------------------------------------------------------------

def make_env(cfg: ExperimentConfig, seed: int):
    inst, env_ss, algo_ss = np.random.SeedSequence(seed).spawn(3)
    truth = gen_system_tensor(cfg.d, cfg.N, cfg.r, cfg.env_C, cfg.omega_min, np.random.default_rng(inst))
    env = BanditEnv(truth, cfg.env_noise_std, cfg.env_action_mode, cfg.env_m, cfg.env_resample,
                    cfg.env_C, np.random.default_rng(env_ss))
    return env, np.random.default_rng(algo_ss)


def run_one(cfg: ExperimentConfig, algo: str, seed: int) -> RegretTrace:
    """One replication.  Every algorithm sees the same instance and offers for a seed."""
    env, rng = make_env(cfg, seed)
    if algo == "tofu":
        return run_tofu(env, cfg.tofu_config(), rng, seed)
    if algo == "tofu_oracle":
        return run_tofu(env, cfg.tofu_config(oracle=True), rng, seed)
    if algo == "oful_vec":
        return run_oful_vectorized(env, cfg.T, cfg.oful_lambda, cfg.oful_delta, cfg.env_C, seed)
    if algo == "random":
        return run_random(env, cfg.T, rng, seed)
    raise ValueError(f"unknown algorithm {algo!r}")


def _job(args):
    cfg, algo, seed = args
    try:
        return run_one(cfg, algo, seed), None
    except Exception as exc:  # reported per run; remaining runs continue
        return None, f"{algo} seed {seed}: {type(exc).__name__}: {exc}"


def worker_count(requested: int | None = None) -> int:
    """Worker pool size, capped by the ``TBL_THREADS`` environment variable."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get("TBL_THREADS")
    if cap is not None and cap.strip():
        try:
            cap_n = int(cap)
        except ValueError:
            raise ValueError(f"TBL_THREADS must be a positive integer, got {cap!r}") from None
        if cap_n < 1:
            raise ValueError(f"TBL_THREADS must be a positive integer, got {cap!r}")
        n = min(n, cap_n)
    return max(1, n)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None,
                   failures: list | None = None) -> list[RegretTrace]:
    """Run every (algorithm, seed) pair and return traces ordered by that pair.

    Failed runs are skipped; their messages are appended to ``failures`` when
    a list is given and logged either way.
    """
    jobs = [(cfg, a, s) for a in cfg.algorithms for s in cfg.seeds]
    n = min(worker_count(workers), len(jobs))
    if n <= 1:
        results = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_job, jobs))
    traces = []
    for trace, err in results:
        if err is None:
            traces.append(trace)
        else:
            log.error("run failed: %s", err)
            if failures is not None:
                failures.append(err)
    return traces


# -- output ---------------------------------------------------------------------

def write_csv(traces, path) -> None:
    """One row per step of each trace; ``t`` is 1-based."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for tr in traces:
            cum = tr.cum
            for t in range(len(tr)):
                w.writerow((tr.algo, tr.seed, t + 1, tr.phase[t], repr(float(tr.instant[t])), repr(float(cum[t]))))


def read_csv(path) -> dict[str, dict[int, np.ndarray]]:
    """``{algo: {seed: cum_regret array}}`` in first-appearance order."""
    out: dict[str, dict[int, list]] = {}
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: header must be {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(rows, 2):
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields")
            out.setdefault(row[0], {}).setdefault(int(row[1]), []).append(float(row[5]))
    return {a: {s: np.asarray(v) for s, v in runs.items()} for a, runs in out.items()}


def plot_svg(csv_path, out_path) -> None:
    """Median cumulative regret per algorithm with the interquartile band."""
    import matplotlib
    from matplotlib.figure import Figure

    data = read_csv(csv_path)
    with matplotlib.rc_context({"svg.hashsalt": "tensor-bandits", "svg.fonttype": "none"}):
        fig = Figure(figsize=(7.0, 4.5))
        ax = fig.subplots()
        for algo, runs in data.items():
            length = min(len(v) for v in runs.values())
            mat = np.vstack([v[:length] for v in runs.values()])
            lo, med, hi = np.percentile(mat, [25, 50, 75], axis=0)
            t = np.arange(1, length + 1)
            (line,) = ax.plot(t, med, label=f"{algo} (n={mat.shape[0]})", lw=1.5)
            ax.fill_between(t, lo, hi, color=line.get_color(), alpha=0.2, lw=0)
        ax.set_xlabel("step t")
        ax.set_ylabel("cumulative regret")
        if data:
            ax.legend(loc="upper left", frameon=False)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(out_path, format="svg", metadata={"Date": None})


# -- selftest ---------------------------------------------------------------------

@dataclass
class SelftestReport:
    groups: list[GroupResult]

    @property
    def ok(self) -> bool:
        return all(g.ok for g in self.groups)

    def lines(self) -> list[str]:
        out = []
        for g in self.groups:
            out.append(g.line())
            out.extend(f"    {m}" for m in g.messages)
        out.append(f"{sum(g.ok for g in self.groups)}/{len(self.groups)} groups passed")
        return out


def selftest(seed: int = 0, exact_fixture: bool = False) -> SelftestReport:
    """Run the invariant suites; ``exact_fixture`` uses a zero perturbation."""
    return SelftestReport(run_suites(seed, exact_fixture))
