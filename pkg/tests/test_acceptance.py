"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line to the
terminal (outside pytest's capture) before asserting.
"""

import itertools
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from tensor_bandits.bandit import LowOFUL, LowOfulConfig, theorem1_params
from tensor_bandits.environments import (
    BanditEnv,
    gen_lower_bound_instance,
    gen_system_tensor,
    lower_bound_delta,
)
from tensor_bandits.harness import parse_config, reference_config_path, run_experiment
from tensor_bandits.projection import block_norm, build_projection, project_action, project_system, q_of
from tensor_bandits.regression import (
    MeasurementDataset,
    fit_als,
    sample_gaussian_arms,
    sample_one_hot_arms,
)
from tensor_bandits.tensor_core import inner, multi_mode_product
from tensor_bandits.tucker import complement_basis, hosvd, mode_omegas, multilinear_rank, random_orthonormal


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, f"criterion {n}: {detail}"
    return emit


def _brute_q(d, r, order, k):
    return sum(1 for idx in itertools.product(range(d), repeat=order) if sum(i >= r for i in idx) < k)


def test_criterion_01_q_formula(report):
    t0 = time.perf_counter()
    ok = q_of(3, 5, 2, 3) == 98 == 5 ** 3 - 3 ** 3
    bad = [(d, r, n, k) for n in (3, 4) for d in range(3, 7) for r in range(1, d + 1)
           for k in range(n + 2) if q_of(k, d, r, n) != _brute_q(d, r, n, k)]
    elapsed = time.perf_counter() - t0
    report(1, ok and not bad and elapsed < 1.0,
           f"q(3; d=5, r=2, N=3)={q_of(3, 5, 2, 3)}, census mismatches={len(bad)}, {elapsed:.2f}s")


def test_criterion_02_inner_product_equivalence(report):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        order = int(rng.choice([3, 4]))
        d = int(rng.integers(2, 6))
        r = int(rng.integers(1, d + 1))
        pmap = build_projection([random_orthonormal(d, r, rng) for _ in range(order)], int(rng.integers(1, order + 1)))
        a, x = rng.standard_normal((2,) + (d,) * order)
        lhs = inner(a, x)
        worst = max(worst, abs(lhs - project_action(pmap, a) @ project_system(pmap, x)) / (1 + abs(lhs)))
    elapsed = time.perf_counter() - t0
    report(2, worst <= 1e-10 and elapsed < 10, f"max scaled gap {worst:.2e} over 500 pairs, {elapsed:.2f}s")


def _perturbed(rng, d=5, order=3, r=2):
    x = gen_system_tensor(d, order, r, 1.0, 0.15, rng)
    e = rng.standard_normal(x.shape)
    xh = hosvd(x + rng.uniform(0, 0.6) * e / np.linalg.norm(e), (r,) * order).full()
    return x, xh


def test_criterion_03_perturbation_bounds(report):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    v1 = v2 = 0
    for _ in range(1000):
        x, xh = _perturbed(rng)
        eta = np.linalg.norm(xh - x)
        om = mode_omegas(x)
        u, uh = hosvd(x, (2, 2, 2)).factors, hosvd(xh, (2, 2, 2)).factors
        v1 += sum(np.linalg.norm(complement_basis(uh[n]).T @ u[n]) > eta / om[n] + 1e-9 for n in range(3))
    for _ in range(1000):
        x, xh = _perturbed(rng)
        eta, omega, c = np.linalg.norm(xh - x), mode_omegas(x).min(), np.linalg.norm(x)
        pmap = build_projection(hosvd(xh, (2, 2, 2)).factors, 3)
        v2 += sum(block_norm(pmap, x, k) > math.sqrt(math.comb(3, k)) * c * (eta / omega) ** k + 1e-9
                  for k in range(1, 4))
    elapsed = time.perf_counter() - t0
    report(3, v1 == 0 and v2 == 0 and elapsed < 60,
           f"subspace-bound violations={v1}, tail-bound violations={v2}, 2x1000 trials, {elapsed:.1f}s")


def test_criterion_04_hosvd_exactness(report):
    rng = np.random.default_rng(4)
    worst_exact = worst_full = 0.0
    for _ in range(100):
        core = rng.standard_normal((2, 2, 2))
        x = multi_mode_product(core, [random_orthonormal(5, 2, rng) for _ in range(3)])
        worst_exact = max(worst_exact, np.linalg.norm(hosvd(x, (2, 2, 2)).full() - x))
        y = rng.standard_normal((5, 5, 5))
        worst_full = max(worst_full, np.linalg.norm(hosvd(y, (5, 5, 5)).full() - y))
    report(4, worst_exact <= 1e-8 and worst_full <= 1e-10,
           f"exact-rank error {worst_exact:.2e}, full-rank error {worst_full:.2e}")


def test_criterion_05_parameter_formulas(report):
    lam, _, _ = theorem1_params(1.0, 0.5, 0.1, 3, 1000, 98, 3)
    _, lam_perp, _ = theorem1_params(1.0, 0.5, 0.1, 3, 1000, 98, 3)
    _, _, c_perp = theorem1_params(1.0, 0.5, 0.1, 3, 1000, 98, 3)
    e1 = abs(lam_perp - 1000 / (98 * math.log(1001))) / (1000 / (98 * math.log(1001)))
    e2 = abs(c_perp - 2 ** 1.5 * 0.2 ** 3) / (2 ** 1.5 * 0.2 ** 3)
    report(5, lam == 1.0 and e1 <= 1e-12 and e2 <= 1e-12,
           f"lambda={lam}, lambda_perp={lam_perp:.12g} (rel {e1:.1e}), C_perp={c_perp:.12g} (rel {e2:.1e})")


def test_criterion_06_lower_bound_instance(report):
    rng = np.random.default_rng(6)
    delta = lower_bound_delta(2, 3, 1536)
    x = gen_lower_bound_instance(4, 3, 2, 1536, rng)
    sq = float(np.sum(x ** 2))
    target = 2 ** 6 / (192 * 1536)
    try:
        gen_lower_bound_instance(4, 3, 2, 3, rng)
        rejects = False
    except ValueError:
        rejects = True
    ok = (abs(delta - 1 / 192) <= 1e-12 / 192 and abs(sq - target) <= 1e-12 * target
          and all(k <= 2 for k in multilinear_rank(x)) and rejects)
    report(6, ok, f"Delta={delta!r}, ||X||^2={sq!r} (target {target!r}), rank={multilinear_rank(x)}, rejects r^N>2T={rejects}")


@pytest.fixture(scope="module")
def reference_runs():
    cfg = parse_config(reference_config_path())
    t0 = time.perf_counter()
    traces = run_experiment(cfg)
    return cfg, traces, time.perf_counter() - t0


def _by_algo(traces):
    out = {}
    for t in traces:
        out.setdefault(t.algo, []).append(t)
    return out


def test_criterion_07_regret_ordering(report, reference_runs):
    cfg, traces, elapsed = reference_runs
    runs = _by_algo(traces)
    med = {a: float(np.median([t.final for t in runs.get(a, [])])) if runs.get(a) else math.nan
           for a in ("tofu_oracle", "tofu", "oful_vec", "random")}
    complete = all(len(runs.get(a, [])) == len(cfg.seeds) for a in med)
    ordered = med["tofu_oracle"] < med["tofu"] < med["oful_vec"] < med["random"]
    margin = med["tofu"] <= 0.85 * med["oful_vec"]
    detail = ", ".join(f"{a}={v:.2f}" for a, v in med.items())
    report(7, complete and ordered and margin and elapsed < 600,
           f"medians {detail}; tofu/oful={med['tofu'] / med['oful_vec']:.3f}; {elapsed:.0f}s")


def test_criterion_08_sublinearity(report, reference_runs):
    cfg, traces, _ = reference_runs
    runs = _by_algo(traces)
    half = cfg.T // 2
    ratios = {a: float(np.median([t.cum[-1] / t.cum[half - 1] for t in runs[a]])) for a in ("tofu", "oful_vec")}
    first, last = [], []
    for t in runs["tofu"]:
        b = t.instant[t.phase == "B"]
        k = max(1, len(b) // 10)
        first.append(b[:k].mean())
        last.append(b[-k:].mean())
    drop = 1 - np.median(last) / np.median(first)
    ok = ratios["tofu"] < 2 and ratios["oful_vec"] < 2 and drop >= 0.5
    report(8, ok, f"R(T)/R(T/2): tofu={ratios['tofu']:.3f}, oful_vec={ratios['oful_vec']:.3f}; "
                  f"Phase B per-step regret drop {100 * drop:.1f}%")


def test_criterion_09_ellipsoid_coverage(report):
    # unit-variance noise is the tightest case the radius is built for
    d, order, r, T1, T, delta = 3, 3, 1, 60, 400, 0.1
    inside = 0
    for seed in range(200):
        a, b, c = np.random.SeedSequence(seed).spawn(3)
        x = gen_system_tensor(d, order, r, 1.0, 0.5, np.random.default_rng(a))
        env = BanditEnv(x, 1.0, "finite", 16, True, 1.0, np.random.default_rng(b))
        rng = np.random.default_rng(c)
        arms, rewards = [], []
        for t in range(T1):
            offer = env.offer(t)
            i = int(rng.integers(16))
            arms.append(offer[i])
            rewards.append(env.pull(i)[0])
        est = fit_als(MeasurementDataset(np.array(arms), np.array(rewards)), r)
        pmap = build_projection(est.estimate.factors, 1)
        y = project_system(pmap, x)
        c_perp = float(np.linalg.norm(y[pmap.q_rho:]))
        lam = 1.0
        lam_perp = T / (pmap.q_rho * math.log(1 + T / lam))
        s = LowOFUL(LowOfulConfig(pmap.dim, pmap.q_rho, lam, lam_perp, 1.0, c_perp, delta))
        for t in range(T1, T):
            bs = project_action(pmap, env.offer(t))
            i = s.select(bs)
            s.update(bs[i], env.pull(i)[0])
        inside += s.in_ellipsoid(y)
    frac = inside / 200
    report(9, frac >= 0.85, f"true projected system inside the ellipsoid in {inside}/200 runs ({100 * frac:.1f}%)")


def test_criterion_10_eta_decay(report):
    t0 = time.perf_counter()
    grid = (500, 1000, 2000, 4000)
    med = {}
    for regime in ("gaussian", "one_hot"):
        etas = {T1: [] for T1 in grid}
        for seed in range(20):
            rng = np.random.default_rng([10, seed])
            x = gen_system_tensor(4, 3, 1, 1.0, 0.5, rng)
            for T1 in grid:
                if regime == "gaussian":
                    arms, _ = sample_gaussian_arms(T1, 4, 3, rng)
                else:
                    arms = sample_one_hot_arms(T1, 4, 3, rng)
                y = arms.reshape(T1, -1) @ x.ravel() + 0.1 * rng.standard_normal(T1)
                etas[T1].append(fit_als(MeasurementDataset(arms, y), 1, truth=x).eta_observed)
        med[regime] = [float(np.median(etas[T1])) for T1 in grid]
    elapsed = time.perf_counter() - t0
    mono = all(all(b <= a for a, b in zip(m, m[1:])) for m in med.values())
    detail = "; ".join(f"{k}: " + ", ".join(f"{v:.4f}" for v in m) for k, m in med.items())
    report(10, mono and elapsed < 300, f"median eta over T1={grid}: {detail}; {elapsed:.1f}s")


def test_criterion_11_selftest_exit_code(report):
    proc = subprocess.run([sys.executable, "-m", "tensor_bandits", "selftest"], capture_output=True, text=True)
    lines = proc.stdout.strip().splitlines()
    report(11, proc.returncode == 0, f"exit code {proc.returncode}; {lines[-1] if lines else 'no output'}")
