import math

import numpy as np
import pytest

from tensor_bandits.bandit import (
    RESOLVE_EVERY,
    LowOFUL,
    LowOfulConfig,
    RegretTrace,
    TofuConfig,
    corollary1_T1,
    run_oful_vectorized,
    run_random,
    run_tofu,
    theorem1_params,
)
from tensor_bandits.environments import BanditEnv, gen_system_tensor
from tensor_bandits.projection import build_projection, project_action, project_system, q_of
from tensor_bandits.tucker import hosvd


def cfg(dim=6, q=2, lam=1.0, lam_perp=10.0, C=1.0, C_perp=0.1, delta=0.1):
    return LowOfulConfig(dim, q, lam, lam_perp, C, C_perp, delta)


def unit(rng, n, dim):
    b = rng.standard_normal((n, dim))
    return b / np.linalg.norm(b, axis=1, keepdims=True)


def make_env(seed, d=4, order=3, r=1, sigma=0.1, m=32):
    a, b, c = np.random.SeedSequence(seed).spawn(3)
    x = gen_system_tensor(d, order, r, 1.0, 0.5, np.random.default_rng(a))
    return BanditEnv(x, sigma, "finite", m, True, 1.0, np.random.default_rng(b)), np.random.default_rng(c)


# -- parameter formulas

def test_theorem1_examples():
    lam, lam_perp, c_perp = theorem1_params(1.0, 0.5, 0.1, 3, 1000, 98, 3)
    assert lam == 1.0
    assert lam_perp == pytest.approx(1000 / (98 * math.log(1001)), rel=1e-12)
    assert lam_perp == pytest.approx(1.4770, abs=5e-5)
    assert c_perp == pytest.approx(2 ** 1.5 * 0.2 ** 3, rel=1e-12)
    assert c_perp == pytest.approx(0.022627, abs=5e-7)
    assert theorem1_params(2.0, 0.5, 0.1, 3, 1000, 98, 3)[0] == 0.25


def test_theorem1_refuses_large_eta():
    with pytest.raises(ValueError, match="eta <= omega"):
        theorem1_params(1.0, 0.5, 0.6, 3, 1000, 98, 3)


def test_corollary1_examples():
    oracle = math.ceil(max(0.0, 64 * 5, 64 ** 0.6 * 5 ** 0.6 * 10 ** 1.6))
    assert corollary1_T1(0.0, 1.0, 4, 1, 3, 1.0, 10_000) == oracle
    assert corollary1_T1(1e9, 1.0, 4, 1, 3, 1.0, 10_000) == 1e9
    base = corollary1_T1(0.0, 1.0, 4, 1, 3, 1.0, 10 ** 6)
    scaled = corollary1_T1(0.0, 1.0, 4, 1, 3, 1.0, 10 ** 6 * 2 ** 2.5)
    assert abs(scaled - 2 * base) <= 1


# -- LowOFUL state

def test_config_validation():
    with pytest.raises(ValueError):
        cfg(q=7)
    with pytest.raises(ValueError):
        cfg(delta=1.0)
    with pytest.raises(ValueError):
        cfg(lam=0.0)


def test_fresh_state():
    c = cfg()
    s = LowOFUL(c)
    np.testing.assert_array_equal(s.ybar, 0.0)
    expect = math.sqrt(math.log(1 / c.delta ** 2)) + math.sqrt(c.lam) * c.C + math.sqrt(c.lam_perp) * c.C_perp
    assert s.sqrt_beta == pytest.approx(expect, rel=1e-14)
    np.testing.assert_array_equal(np.diag(s.V), [1, 1, 10, 10, 10, 10])
    full = LowOFUL(cfg(q=6))
    np.testing.assert_array_equal(full.V, np.eye(6))


def test_single_update_ridge():
    s = LowOFUL(cfg())
    s.update(np.eye(6)[0], 1.0)
    np.testing.assert_allclose(s.ybar, [0.5, 0, 0, 0, 0, 0], atol=1e-15)
    z = LowOFUL(cfg())
    z.update(np.full(6, 1 / math.sqrt(6)), 0.0)
    np.testing.assert_array_equal(z.ybar, 0.0)


def test_ridge_gradient_and_spd(rng):
    c = cfg(dim=8, q=3)
    s = LowOFUL(c)
    bs = unit(rng, 700, 8)
    rs = rng.standard_normal(700)
    for b, r in zip(bs, rs):
        s.update(b, r)
    lam = np.diag(c.lam_diag)
    V = lam + bs.T @ bs
    np.testing.assert_allclose(s.V, V, atol=1e-9)
    assert np.linalg.norm(2 * (V @ s.ybar - bs.T @ rs)) <= 1e-8
    assert np.linalg.eigvalsh(s.V - lam).min() >= -1e-9
    assert np.linalg.eigvalsh(s.V).min() >= min(c.lam, c.lam_perp) - 1e-9
    np.testing.assert_allclose(s.V_inv @ V, np.eye(8), atol=1e-9)
    sign, logdet = np.linalg.slogdet(V)
    radius = math.sqrt(logdet - np.sum(np.log(c.lam_diag)) - 2 * math.log(c.delta)) + 1 + math.sqrt(10) * 0.1
    assert s.sqrt_beta == pytest.approx(radius, rel=1e-10)


def test_periodic_resolve(rng):
    s = LowOFUL(cfg())
    for b in unit(rng, RESOLVE_EVERY, 6):
        s.update(b, 0.3)
    np.testing.assert_allclose(s.V_inv, np.linalg.inv(s.V), atol=1e-12)


def test_update_rejections():
    s = LowOFUL(cfg())
    with pytest.raises(ValueError):
        s.update(np.full(6, np.nan), 1.0)
    with pytest.raises(ValueError):
        s.update(np.eye(6)[0], math.inf)
    with pytest.raises(ValueError, match="norm"):
        s.update(np.ones(6), 1.0)
    with pytest.raises(ValueError):
        s.update(np.ones(5) / 5, 1.0)


def test_select_rules(rng):
    s = LowOFUL(cfg())
    assert s.select(unit(rng, 1, 6)) == 0
    b = unit(rng, 4, 6)
    assert s.select(np.vstack([b[2], b[2], b[0]])) in (0, 2)
    dup = np.vstack([b[1], b[1]])
    assert s.select(dup) == 0
    with pytest.raises(ValueError):
        s.select(np.zeros((0, 6)))


def test_select_fresh_prefers_low_penalty_direction():
    c = cfg()
    s = LowOFUL(c)
    head, tail = np.eye(6)[0], np.eye(6)[4]
    ucb = [s.sqrt_beta * math.sqrt(v @ np.diag(1 / c.lam_diag) @ v) for v in (tail, head)]
    assert ucb[1] > ucb[0]
    np.testing.assert_allclose(s.ucb(np.vstack([tail, head])), ucb, rtol=1e-14)
    assert s.select(np.vstack([tail, head])) == 1


# -- runners

def direct_oful(env, T, lam=1.0, delta=0.1, C=1.0):
    # textbook OFUL with explicit solves, used as the oracle
    dim = env.dim
    V, u, picks = lam * np.eye(dim), np.zeros(dim), []
    logdet0 = dim * math.log(lam)
    for t in range(T):
        flat = env.offer(t).reshape(env.m, -1)
        ybar = np.linalg.solve(V, u)
        beta = math.sqrt(np.linalg.slogdet(V)[1] - logdet0 - 2 * math.log(delta)) + math.sqrt(lam) * C
        width = np.sqrt(np.einsum("ij,ji->i", flat, np.linalg.solve(V, flat.T)))
        vals = flat @ ybar + beta * width
        i = int(np.flatnonzero(vals >= vals.max() - 1e-12 * max(1.0, abs(vals.max())))[0])
        reward, _ = env.pull(i)
        V += np.outer(flat[i], flat[i])
        u += reward * flat[i]
        picks.append(i)
    return picks


def test_oful_matches_direct_implementation():
    T = 300
    env_a, _ = make_env(3, d=3, m=8)
    env_b, _ = make_env(3, d=3, m=8)
    expect = direct_oful(env_a, T)
    picks = []
    orig = env_b.pull

    def spy(i):
        picks.append(i)
        return orig(i)

    env_b.pull = spy
    run_oful_vectorized(env_b, T)
    assert picks == expect


def test_oful_single_arm_noiseless_zero_regret():
    env, _ = make_env(0, d=3, sigma=0.0, m=1)
    tr = run_oful_vectorized(env, 100)
    np.testing.assert_array_equal(tr.instant, 0.0)


def test_oful_is_lowoful_with_uniform_penalty():
    env_a, _ = make_env(4, d=3, m=8)
    env_b, _ = make_env(4, d=3, m=8)
    a = run_oful_vectorized(env_a, 200)
    s = LowOFUL(LowOfulConfig(27, 27, 1.0, 1.0, 1.0, 0.0, 0.1))
    regret = []
    for t in range(200):
        flat = env_b.offer(t).reshape(8, -1)
        i = s.select(flat)
        reward, reg = env_b.pull(i)
        s.update(flat[i], reward)
        regret.append(reg)
    np.testing.assert_array_equal(a.instant, regret)


def test_trace_accounting():
    env, rng = make_env(1, d=3)
    tr = run_tofu(env, TofuConfig(T=400, r=1, rho=1, T1=60, c=0.05), rng)
    assert len(tr) == 400
    assert np.all(tr.instant >= 0)
    np.testing.assert_allclose(tr.cum, np.cumsum(tr.instant), atol=1e-9)
    assert np.all(np.diff(tr.cum) >= 0)
    assert list(tr.phase[:60]) == ["A"] * 60 and set(tr.phase[60:]) == {"B"}
    with pytest.raises(ValueError):
        RegretTrace("x", 0, np.zeros(3), np.array(["A"]))


def test_tofu_boundary_T1():
    env, rng = make_env(2, d=3)
    tr = run_tofu(env, TofuConfig(T=200, r=1, rho=1, T1=199, eta=0.1), rng)
    assert len(tr) == 200 and (tr.phase == "B").sum() == 1
    with pytest.raises(ValueError):
        run_tofu(env, TofuConfig(T=200, r=1, T1=200))


def test_tofu_refusal_carries_hint():
    env, rng = make_env(2, d=3)
    with pytest.raises(ValueError, match="lengthen Phase A or supply a smaller eta"):
        run_tofu(env, TofuConfig(T=200, r=1, T1=50, eta=5.0), rng)


def test_tofu_open_mode_phase_a_rules():
    a, b, c = np.random.SeedSequence(7).spawn(3)
    x = gen_system_tensor(3, 3, 1, 1.0, 0.5, np.random.default_rng(a))
    for rule in ("gaussian", "one_hot"):
        env = BanditEnv(x, 0.1, "open", 16, True, 1.0, np.random.default_rng(b))
        tr = run_tofu(env, TofuConfig(T=300, r=1, rho=1, T1=100, c=0.05, phase_a_arms=rule), np.random.default_rng(c))
        assert len(tr) == 300 and np.all(tr.instant >= 0)
    env, _ = make_env(0, d=3)
    with pytest.raises(ValueError, match="open action set"):
        run_tofu(env, TofuConfig(T=300, r=1, T1=100, phase_a_arms="gaussian"))


def test_ridge_regressor_option():
    env, rng = make_env(5, d=3)
    tr = run_tofu(env, TofuConfig(T=300, r=1, rho=1, T1=100, c=0.05, regressor="ridge_hosvd"), rng)
    assert tr.info["eta_observed"] is not None


def test_oracle_beats_vectorized_at_4000():
    oracle, vec = [], []
    for seed in range(20):
        env, rng = make_env(seed)
        oracle.append(run_tofu(env, TofuConfig(T=4000, r=1, rho=1, oracle=True), rng).final)
        env, _ = make_env(seed)
        vec.append(run_oful_vectorized(env, 4000).final)
    assert np.median(oracle) < np.median(vec)


def test_noiseless_tofu_settles_on_optimal_arm():
    hits = []
    for seed in range(20):
        env, rng = make_env(seed, sigma=0.0)
        tr = run_tofu(env, TofuConfig(T=2000, r=1, rho=1, c=0.05), rng)
        hits.extend(tr.instant[-100:] <= 1e-12)
    assert np.mean(hits) >= 0.95


def test_random_baseline_is_linear_on_fixed_arms():
    ratios = []
    for seed in range(20):
        a, b, c = np.random.SeedSequence(seed).spawn(3)
        x = gen_system_tensor(4, 3, 1, 1.0, 0.5, np.random.default_rng(a))
        env = BanditEnv(x, 0.0, "finite", 32, False, 1.0, np.random.default_rng(b))
        tr = run_random(env, 2000, np.random.default_rng(c))
        ratios.append(tr.cum[-1] / tr.cum[999])
    assert 1.8 <= np.median(ratios) <= 2.2


def test_ellipsoid_coverage_small():
    inside = 0
    runs = 40
    for seed in range(runs):
        rng = np.random.default_rng(seed)
        x = gen_system_tensor(3, 3, 1, 1.0, 0.5, rng)
        xh = x + 0.05 * rng.standard_normal(x.shape)
        pmap = build_projection(hosvd(xh, (1, 1, 1)).factors, 1)
        y = project_system(pmap, x)
        c_perp = float(np.linalg.norm(y[pmap.q_rho:]))
        lam, lam_perp, _ = theorem1_params(1.0, 1.0, 0.0, 1, 300, pmap.q_rho, 3)
        s = LowOFUL(LowOfulConfig(27, pmap.q_rho, lam, lam_perp, 1.0, c_perp, 0.1))
        for t in range(300):
            b = project_action(pmap, unit(rng, 1, 27).reshape(1, 3, 3, 3))[0]
            s.update(b, float(b @ y) + rng.standard_normal())
        inside += s.in_ellipsoid(y)
    assert inside / runs >= 0.85
