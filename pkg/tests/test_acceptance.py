"""Acceptance criteria, one test each.  Every test prints a single
``CRITERION <k>: PASS|FAIL <detail>`` line (visible in ``pytest -v`` output)
before asserting."""

import time

import numpy as np
import pytest
from scipy.linalg import null_space

from conftest import random_scenario_dataset
from mmreg import (Bisquare, Dataset, MMConfig, SConfig, Scenario, asymptotic_covariance,
                   breakdown_lower_bound, fit, hyperplane_max_count, influence_value,
                   m_scale, mm_fit, run_simulation, s_estimate, solve_c0, solve_c1)
from mmreg.calibration import TABLE_ARE, TABLE_Q
from mmreg.linalg import det_normalize
from mmreg.mm import estimating_equation_residual

C0_REFERENCE = {1: 1.56, 2: 2.66, 3: 3.45, 4: 4.10, 5: 4.65, 10: 6.77}
C1_REFERENCE = {
    0.80: {1: 3.14, 2: 3.51, 3: 3.82, 4: 4.10, 5: 4.34, 10: 5.39},
    0.90: {1: 3.88, 2: 4.28, 3: 4.62, 4: 4.91, 5: 5.18, 10: 6.38},
    0.95: {1: 4.68, 2: 5.12, 3: 5.48, 4: 5.76, 5: 6.10, 10: 7.67},
}
REPS = 500


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def clean_q2():
    return run_simulation(Scenario(p=2, q=2, n=100, reps=REPS, seed=2024))


def test_criterion_01_c0_reference(report):
    solve_c0.cache_clear()
    t = time.perf_counter()
    got = {q: solve_c0(q, 0.5) for q in TABLE_Q}
    elapsed = time.perf_counter() - t
    worst = max(abs(got[q] - C0_REFERENCE[q]) for q in TABLE_Q)
    ok = worst <= 0.02 and elapsed < 5.0
    report(1, ok, f"max |c0 - reference| = {worst:.4f} (tol 0.02), {elapsed:.2f}s; "
                  + ", ".join(f"q={q}:{got[q]:.4f}" for q in TABLE_Q))


def test_criterion_02_c1_reference(report):
    solve_c1.cache_clear()
    t = time.perf_counter()
    misses = []
    for a in TABLE_ARE:
        for q in TABLE_Q:
            c1 = solve_c1(q, a)
            if abs(c1 - C1_REFERENCE[a][q]) > 0.05:
                misses.append(f"ARE={a} q={q}: {c1:.4f} vs {C1_REFERENCE[a][q]}")
    elapsed = time.perf_counter() - t
    ok = not misses and elapsed < 30.0
    report(2, ok, f"{18 - len(misses)}/18 within 0.05, {elapsed:.2f}s"
                  + (f"; misses: {'; '.join(misses)}" if misses else ""))


def test_criterion_03_clean_efficiency_q2(report, clean_q2):
    mle = clean_q2.get("MLE").mse
    reff = clean_q2.get("MM").reff
    ok = 0.035 <= mle <= 0.047 and 0.84 <= reff <= 0.96
    report(3, ok, f"MLE MSE {mle:.4f} in [0.035, 0.047], MM REFF {reff:.3f} in "
                  f"[0.84, 0.96] ({REPS} reps; S REFF {clean_q2.get('S').reff:.3f})")


def test_criterion_04_clean_efficiency_q5(report):
    rep = run_simulation(Scenario(p=2, q=5, n=100, reps=REPS, seed=2025))
    reff = rep.get("MM").reff
    ok = 0.85 <= reff <= 0.95
    report(4, ok, f"MM REFF {reff:.3f} in [0.85, 0.95] (MLE MSE {rep.get('MLE').mse:.4f}, "
                  f"S REFF {rep.get('S').reff:.3f}, {REPS} reps)")


def test_criterion_05_contamination(report, clean_q2):
    tail = (4.8, 5.2, 5.6)
    rep = run_simulation(Scenario(p=2, q=2, n=100, reps=200, contamination=0.10,
                                  x0=10.0, m_grid=tail, seed=2024))
    mle = [rep.get("MLE", m).mse for m in tail]
    mm_last = rep.get("MM", tail[-1]).mse
    mle_clean, mm_clean = clean_q2.get("MLE").mse, clean_q2.get("MM").mse
    ok = (mle[-1] > 5 * mle_clean and mm_last < 3 * mm_clean
          and all(b > a for a, b in zip(mle, mle[1:])))
    report(5, ok, f"m={tail[-1]}: MLE MSE {mle[-1]:.3f} vs 5x clean {5 * mle_clean:.3f}; "
                  f"MM MSE {mm_last:.4f} vs 3x clean {3 * mm_clean:.4f}; "
                  f"MLE tail {[round(v, 3) for v in mle]}")


@pytest.fixture(scope="module")
def random_fits():
    out = []
    for i in range(200):
        data = random_scenario_dataset(i)
        cfg = MMConfig.for_dimension(data.q)
        init = s_estimate(data, SConfig(n_subsamples=500, seed=i), cfg.scale_kernel)
        out.append((data, cfg, mm_fit(data, cfg, init)))
    return out


def test_criterion_06_descent(report, random_fits):
    worst, bad = -np.inf, 0
    for _, _, mm in random_fits:
        steps = np.diff(mm.objective_trace) if len(mm.objective_trace) > 1 else [0.0]
        worst = max(worst, float(np.max(steps)))
        bad += int(np.max(steps) > 1e-10) + int(mm.fallback)
    report(6, bad == 0, f"{len(random_fits) - bad}/{len(random_fits)} traces nonincreasing; "
                        f"largest step {worst:.3g} (slack 1e-10)")


def test_criterion_07_estimating_equations(report, random_fits):
    vals = [estimating_equation_residual(d, mm) for d, _, mm in random_fits]
    conv = sum(mm.converged for _, _, mm in random_fits)
    delta = random_fits[0][1].delta
    ok = max(vals) <= 10 * delta and conv == len(random_fits)
    report(7, ok, f"max normalized score {max(vals):.3g} <= {10 * delta:g}; "
                  f"{conv}/{len(random_fits)} converged")


def test_criterion_08_equivariance(report):
    rng = np.random.default_rng(88)
    errs = []
    for trial in range(5):
        n, p, q = 80, 2, 2 + trial % 2
        X = rng.standard_normal((n, p))
        Y = X @ rng.standard_normal((p, q)) + rng.standard_normal((n, q))
        Y[:8] += 20.0
        d0 = Dataset(X, Y)
        # converge to the fixed point; the stopping rule itself is not equivariant
        cfg = MMConfig.for_dimension(q, delta=1e-11, max_iters=10_000)
        s_cfg = SConfig(n_subsamples=300, seed=trial)
        base, _ = fit(d0, cfg, s_cfg)
        C = rng.standard_normal((p, q))
        A = rng.standard_normal((q, q)) + 3 * np.eye(q)
        T = rng.standard_normal((p, p)) + 3 * np.eye(p)
        c = 0.01 + 5 * rng.random()
        cases = {
            "regression": (Dataset(X, Y + X @ C), base.B + C, base.Sigma),
            "affine": (Dataset(X, Y @ A), base.B @ A, A.T @ base.Sigma @ A),
            "design": (Dataset(X @ T, Y), np.linalg.solve(T, base.B), base.Sigma),
            "scale": (Dataset(X, c * Y), c * base.B, c * c * base.Sigma),
        }
        for name, (d, B_exp, S_exp) in cases.items():
            r, _ = fit(d, cfg, s_cfg)
            errs.append((name, float(max(np.abs(r.B - B_exp).max(),
                                         np.abs(r.Sigma - S_exp).max()))))
    worst = max(errs, key=lambda e: e[1])
    report(8, worst[1] <= 1e-6, f"{len(errs)} transformed fits, worst {worst[0]} "
                                f"deviation {worst[1]:.3g} (tol 1e-6)")


def test_criterion_09_m_scale(report):
    rng = np.random.default_rng(99)
    k0 = Bisquare(solve_c0(2))
    worst_res, worst_eq, zero_ok = 0.0, 0.0, True
    for i in range(1000):
        n = int(rng.integers(1, 200))
        v = rng.exponential(size=n) * 10.0 ** rng.uniform(-6, 6)
        v[rng.random(n) < rng.uniform(0, 0.45)] = 0.0
        b = rng.uniform(0.1, 0.9)
        s = m_scale(v, k0, b)
        if s.sigma > 0:
            worst_res = max(worst_res, abs(np.mean(k0.rho(v / s.sigma)) - b))
        else:
            zero_ok &= bool(np.count_nonzero(v == 0) >= n * (1 - b))
        c = 10.0 ** rng.uniform(-3, 3)
        sc = m_scale(c * v, k0, b).sigma
        if s.sigma > 0:
            worst_eq = max(worst_eq, abs(sc / (c * s.sigma) - 1))
        else:
            zero_ok &= sc == 0.0
        # zero rule boundary: exactly n(1-b) zeros forces s = 0
        z = np.concatenate([np.zeros(5), np.ones(5)])
        zero_ok &= m_scale(z, k0, 0.5).sigma == 0.0
    ok = worst_res <= 1e-9 and worst_eq <= 1e-12 and zero_ok
    report(9, ok, f"max residual {worst_res:.2g} (1e-9), max equivariance error "
                  f"{worst_eq:.2g} (1e-12), zero rule {'exact' if zero_ok else 'violated'}")


def test_criterion_10_breakdown(report):
    rng = np.random.default_rng(10)
    X, Y = rng.standard_normal((100, 2)), rng.standard_normal((100, 2))
    cfg = MMConfig.for_dimension(2)
    clean, _ = fit(Dataset(X, Y), cfg)
    Xc, Yc = X.copy(), Y.copy()
    Xc[:40] = 1e6 * rng.uniform(0.5, 1.0, (40, 2))
    Yc[:40] = 1e6 * rng.uniform(-1.0, 1.0, (40, 2))
    dirty_data = Dataset(Xc, Yc)
    dirty, _ = fit(dirty_data, cfg)
    nb, nc = np.linalg.norm(dirty.B, 2), np.linalg.norm(clean.B, 2)
    ev_ratio = np.linalg.eigvalsh(dirty.Sigma) / np.linalg.eigvalsh(clean.Sigma)
    k_n = hyperplane_max_count(dirty_data, limit=100)
    bound = breakdown_lower_bound(100, k_n, 0.5)
    ok = nb <= 10 * nc and np.all((ev_ratio >= 1e-6) & (ev_ratio <= 1e6)) and bound > 0.4
    report(10, ok, f"||B||2 {nb:.3g} vs 10x clean {10 * nc:.3g}; Sigma eigen ratios "
                   f"{np.round(ev_ratio, 3).tolist()}; k_n={k_n}, bound {bound:.2f}")


def test_criterion_11_influence_zeros(report):
    rng = np.random.default_rng(11)
    k1 = Bisquare(solve_c1(2, 0.9))
    bad = 0
    for _ in range(500):
        B0 = rng.standard_normal((3, 2))
        S0 = det_normalize(np.cov(rng.standard_normal((2, 10))))
        sigma0 = rng.uniform(0.2, 5.0)
        x0 = rng.standard_normal(3)
        xx_inv = np.linalg.inv(np.cov(rng.standard_normal((3, 20))))
        # saturation: residual with Mahalanobis norm at least c1 * sigma0
        L = np.linalg.cholesky(S0)
        dirn = rng.standard_normal(2)
        u = L @ dirn / np.linalg.norm(dirn) * k1.c * sigma0 * rng.uniform(1.0, 100.0)
        out = influence_value(B0.T @ x0 + u, x0, B0, S0, sigma0, xx_inv, k1)
        bad += int(np.any(out != 0.0))
        out = influence_value(B0.T @ x0, x0, B0, S0, sigma0, xx_inv, k1)
        bad += int(np.any(out != 0.0))
    report(11, bad == 0, f"{1000 - bad}/1000 evaluations exactly zero "
                         f"(saturated residuals and zero residuals)")


def _direction_oracle(Z, rng, tries=300, tol=1e-9):
    """Lower bound on k_n from random (p+q-1)-subsets and scipy null spaces."""
    n, dim = Z.shape
    scale = max(1.0, np.linalg.norm(Z, axis=1).max())
    best = 0
    for _ in range(tries):
        idx = rng.choice(n, dim - 1, replace=False)
        ns = null_space(Z[idx])
        if ns.shape[1] != 1:
            continue
        best = max(best, int((np.abs(Z @ ns[:, 0]) <= tol * scale).sum()))
    return best


def test_criterion_12_hyperplane_count(report):
    rng = np.random.default_rng(12)
    fails = []
    for i in range(50):
        p = int(rng.integers(1, 3))
        q = int(rng.integers(1, 5 - p))
        n = int(rng.integers(p + q + 2, 21))
        dim = p + q
        planted = 0
        if i % 2:
            Z = rng.standard_normal((n, dim))
        else:
            # integer grid points plus a planted hyperplane through the origin
            Z = rng.integers(-3, 4, (n, dim)).astype(float)
            normal = rng.integers(-2, 3, dim).astype(float)
            if not normal.any():
                normal[0] = 1.0
            planted = int(rng.integers(dim - 1, n // 2 + 1))
            Z[:planted] = rng.standard_normal((planted, dim - 1)) @ null_space(normal[None, :]).T
        data = Dataset(Z[:, q:], Z[:, :q])
        exact = hyperplane_max_count(data)
        oracle = max(planted, _direction_oracle(np.hstack([data.Y, data.X]), rng))
        if oracle > exact or exact < dim - 1:
            fails.append((i, exact, oracle))
    report(12, not fails, f"{50 - len(fails)}/50 instances: oracle <= exact and "
                          f"exact >= p+q-1" + (f"; failures {fails}" if fails else ""))


def test_criterion_13_covariance_factor(report):
    rng = np.random.default_rng(13)
    n = 5000
    X, Y = rng.standard_normal((n, 2)), rng.standard_normal((n, 2))
    data = Dataset(X, Y)
    parts, ok = [], True
    for a in TABLE_ARE:
        cfg = MMConfig.for_dimension(2, a)
        mm, _ = fit(data, cfg, SConfig(n_subsamples=500))
        for radial in ("gaussian", "empirical"):
            f = asymptotic_covariance(data, mm, cfg.efficiency_kernel, radial).scalar_factor
            rel = abs(f * a - 1)
            ok &= rel <= 0.02
            parts.append(f"ARE {a} {radial}: {f:.4f} vs {1 / a:.4f}")
    report(13, ok, "; ".join(parts))
