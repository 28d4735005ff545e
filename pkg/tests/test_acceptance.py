"""End-to-end checks of the package's headline guarantees.

Each test covers one guarantee, enforces its tolerance and runtime budget,
and reports a single PASS/FAIL line once the session finishes.
"""

import contextlib
import math
import sys
import time

import cvxpy as cp
import numpy as np
import pytest
from click.testing import CliRunner

from heavyvar.cli import main as cli_main
from heavyvar.dependence import (
    LinearProcessSpec,
    dependence_factor,
    op_norm,
    solve_lyapunov,
    spectral_radius,
    stability_factors,
)
from heavyvar.experiments import (
    FIGSW_HEADER,
    ExperimentConfig,
    run_concentration,
    run_figsw,
    run_ls_tables,
)
from heavyvar.model import VarModel
from heavyvar.penalties import (
    GroupL21Penalty,
    KSupportPenalty,
    L1Penalty,
    NuclearPenalty,
    OwlPenalty,
    gaussian_width_unit_ball,
    theory_bounds,
)
from heavyvar.sampling import NoiseSpec, simulate_var
from heavyvar.solvers import dantzig_l1, fista_fit, ols_fit

_THREADS = 8
_LINES = []


@pytest.fixture(scope="session", autouse=True)
def _print_report(request):
    yield
    # fd-level capture swallows even sys.__stdout__, so suspend it to print
    capman = request.config.pluginmanager.getplugin("capturemanager")
    ctx = capman.global_and_fixture_disabled() if capman else contextlib.nullcontext()
    with ctx:
        out = sys.stdout
        out.write("\n")
        for line in _LINES:
            out.write(line + "\n")
        out.flush()


def _finish(num, desc, ok, t0, budget):
    elapsed = time.perf_counter() - t0
    good = ok and elapsed < budget
    _LINES.append(f"{'PASS' if good else 'FAIL'} {num:2d}. {desc} "
                  f"({elapsed:.1f}s of {budget:.0f}s)")
    assert ok, desc
    assert elapsed < budget, f"{desc}: {elapsed:.1f}s exceeds {budget:.0f}s"


def _random_stable(rng, p, rho):
    A = rng.standard_normal((p, p))
    return A * (rho / spectral_radius(A))


def _random_spd(rng, p):
    Q = rng.standard_normal((p, p))
    return Q @ Q.T / p + 0.1 * np.eye(p)


def test_01_dependence_closed_forms():
    t0 = time.perf_counter()
    ok = True

    spec = LinearProcessSpec.var1(0.5 * np.eye(2), np.eye(2))
    ok &= abs(dependence_factor(spec).c_factor - 8.0 / 3.0) < 1e-6

    white = LinearProcessSpec.white_noise(np.eye(3))
    ok &= dependence_factor(white).c_factor == 1.0

    rng = np.random.default_rng(42)
    for _ in range(50):
        p = int(rng.integers(2, 7))
        A = rng.standard_normal((p, p))
        A *= rng.uniform(0.1, 0.8) / op_norm(A)
        c = dependence_factor(LinearProcessSpec.var1(A, np.eye(p))).c_factor
        ok &= c <= 1.0 / (1.0 - op_norm(A)) ** 2 + 1e-9

    _finish(1, "dependence factor closed forms and operator-norm cap",
            ok, t0, 1.0)


def test_02_spectral_density_sandwich():
    t0 = time.perf_counter()
    ok = True
    rng = np.random.default_rng(6)
    for _ in range(20):
        p = int(rng.integers(2, 9))
        A = _random_stable(rng, p, rng.uniform(0.2, 0.8))
        S = _random_spd(rng, p)
        spec = LinearProcessSpec.var1(A, S)
        m_upper, m_lower = stability_factors(spec, grid_size=256)
        c = dependence_factor(spec).c_factor
        lam = np.linalg.eigvalsh(S)
        ok &= m_lower <= m_upper + 1e-12
        ok &= 2 * np.pi * m_upper <= 2 * lam[-1] * c * 1.01
        ok &= lam[0] / c**2 <= 2 * np.pi * m_lower * 1.01
    _finish(2, "spectral density extremes sandwiched by dependence factor",
            ok, t0, 30.0)


def _cvx_prox(v, tau, term, shape=None):
    x = cp.Variable(v.shape if shape is None else shape)
    obj = 0.5 * cp.sum_squares(x - v) + tau * term(x)
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12,
               tol_feas=1e-12)
    return np.asarray(x.value)


def test_03_prox_operators_match_convex_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0

    for _ in range(100):
        d = int(rng.integers(2, 7))
        v = rng.standard_normal(d) * rng.uniform(0.5, 3.0)
        tau = 10.0 ** rng.uniform(-2.0, 0.3)

        ref = _cvx_prox(v, tau, cp.norm1)
        worst = max(worst, np.max(np.abs(L1Penalty().prox(v, tau) - ref)))

    for _ in range(100):
        d = int(rng.integers(2, 7))
        v = rng.standard_normal(d) * rng.uniform(0.5, 3.0)
        tau = 10.0 ** rng.uniform(-2.0, 0.3)
        idx = list(range(d))
        rng.shuffle(idx)
        cut = int(rng.integers(1, d))
        groups = tuple(g for g in (tuple(idx[:cut]), tuple(idx[cut:])) if g)

        def group_term(x, gs=groups):
            return cp.sum(cp.hstack([cp.norm2(x[list(g)]) for g in gs]))

        ref = _cvx_prox(v, tau, group_term)
        mine = GroupL21Penalty(groups).prox(v, tau)
        worst = max(worst, np.max(np.abs(mine - ref)))

    for _ in range(100):
        d = int(rng.integers(2, 7))
        v = rng.standard_normal(d) * rng.uniform(0.5, 3.0)
        tau = 10.0 ** rng.uniform(-2.0, 0.3)
        w = np.sort(rng.uniform(0.3, 2.0, size=d))[::-1].copy()

        def owl_term(x, w=w):
            # sorted-weight norm as a telescoping sum of top-k sums
            steps = np.append(w[:-1] - w[1:], w[-1])
            return cp.sum(cp.hstack([
                float(steps[k]) * cp.sum_largest(cp.abs(x), k + 1)
                for k in range(len(w)) if steps[k] > 0]))

        ref = _cvx_prox(v, tau, owl_term)
        mine = OwlPenalty(w).prox(v, tau)
        worst = max(worst, np.max(np.abs(mine - ref)))

    for _ in range(100):
        rows = int(rng.integers(2, 4))
        cols = int(rng.integers(2, 4))
        V = rng.standard_normal((rows, cols)) * rng.uniform(0.5, 3.0)
        tau = 10.0 ** rng.uniform(-2.0, 0.3)
        ref = _cvx_prox(V, tau, cp.normNuc)
        mine = NuclearPenalty((rows, cols)).prox(V, tau)
        worst = max(worst, np.max(np.abs(mine - ref)))

    for _ in range(100):
        d = int(rng.integers(3, 7))
        k = int(rng.integers(2, d))
        v = rng.standard_normal(d) * rng.uniform(0.5, 3.0)
        tau = 10.0 ** rng.uniform(-2.0, 0.3)
        # shortest route to the prox: project v/tau on the dual unit ball
        # (top-k Euclidean norm <= 1), then peel off the scaled projection
        y = cp.Variable(d)
        prob = cp.Problem(
            cp.Minimize(cp.sum_squares(y - v / tau)),
            [cp.sum_largest(cp.square(y), k) <= 1.0])
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12,
                   tol_feas=1e-12)
        ref = v - tau * np.asarray(y.value)
        mine = KSupportPenalty(k).prox(v, tau)
        worst = max(worst, np.max(np.abs(mine - ref)))

    _finish(3, f"prox operators within 1e-4 of convex-program oracles "
               f"(worst {worst:.2e})", worst < 1e-4, t0, 120.0)


def test_04_solver_equivalences():
    t0 = time.perf_counter()
    ok = True
    rng = np.random.default_rng(13)
    for _ in range(5):
        n, q, r = 48, 6, 3
        M = rng.standard_normal((n, q))
        Q, _ = np.linalg.qr(M)
        X = Q * math.sqrt(n)
        Y = rng.standard_normal((n, r))
        C = X.T @ Y / n

        lam = 10.0 ** rng.uniform(-1.5, 0.0)
        fit = fista_fit(X, Y, L1Penalty(), lam)
        soft = np.sign(C) * np.maximum(np.abs(C) - lam / 2.0, 0.0)
        ok &= np.max(np.abs(fit.coeffs - soft)) < 1e-8

        las = fista_fit(X, Y, L1Penalty(), 2.0 * lam)
        for j in range(r):
            dan = dantzig_l1(X, Y[:, j], lam)
            ok &= np.max(np.abs(dan.coeffs - las.coeffs[:, j])) < 1e-6

        Xg = rng.standard_normal((n, q)) @ np.diag(rng.uniform(0.5, 2.0, q))
        Yg = rng.standard_normal((n, r))
        zero = fista_fit(Xg, Yg, L1Penalty(), 0.0)
        ols = ols_fit(Xg, Yg)
        rel = (np.linalg.norm(zero.coeffs - ols.coeffs)
               / max(np.linalg.norm(ols.coeffs), 1e-12))
        ok &= rel < 1e-6

    _finish(4, "orthonormal soft-threshold, dantzig-lasso, and zero-penalty "
               "equivalences", ok, t0, 30.0)


def test_05_lyapunov_simulation_consistency():
    t0 = time.perf_counter()
    ok = True
    rng = np.random.default_rng(21)
    for p in (4, 10):
        B = _random_stable(rng, p, 0.6)
        sigma = solve_lyapunov(B, np.eye(p))
        resid = np.linalg.norm(sigma - (B.T @ sigma @ B + np.eye(p)))
        ok &= resid < 1e-10

        noise = NoiseSpec(gamma2=2.0, scale=1.0, p=p)
        traj = simulate_var(VarModel(coeffs=(B,)), noise, T=100_000,
                            burn_in=500, rng=rng)
        Z = traj.data
        emp = Z.T @ Z / Z.shape[0]
        rel = np.linalg.norm(emp - sigma) / np.linalg.norm(sigma)
        ok &= rel < 0.05

    _finish(5, "stationary covariance solves and matches long simulations",
            ok, t0, 60.0)


def test_06_sparse_recovery_error_decreases_in_sample_size():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(experiment="figsw", p_list=(30, 50),
                           gamma2_list=(0.5, 2.0), m_list=(1, 5, 9, 19),
                           replications=30, base_seed=20260822,
                           threads=_THREADS)
    rows = run_figsw(cfg)
    by = {(r["p"], r["gamma2"], r["m"]): r["mean_err"] for r in rows}
    ok = True
    for p in cfg.p_list:
        for g in cfg.gamma2_list:
            errs = [by[p, g, m] for m in cfg.m_list]
            ok &= all(a > b for a, b in zip(errs, errs[1:]))
        for m in cfg.m_list:
            ok &= by[p, 0.5, m] > by[p, 2.0, m]
    _finish(6, "mean estimation error falls with sample size and rises "
               "with heavier tails", ok, t0, 900.0)


def test_07_lowrank_sparse_beats_lasso_beats_ols():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(experiment="ls_tables", p_list=(10,),
                           gamma2_list=(2.0, 1.0, 0.5), replications=20,
                           base_seed=20260822, threads=_THREADS)
    rows = run_ls_tables(cfg)
    by = {(r["n"], r["gamma2"], r["method"]): r["pred_err"] for r in rows}
    ok = True
    for g in cfg.gamma2_list:
        for n in (30, 50):
            ls, lasso, ols = (by[n, g, m] for m in ("ls", "lasso", "ols"))
            ok &= ls <= lasso <= ols
        for m in ("ls", "lasso", "ols"):
            ok &= by[50, g, m] <= by[30, g, m]
    _finish(7, "prediction error orders decomposition, l1, plain fits and "
               "falls in n", ok, t0, 600.0)


def test_08_concentration_bound_shape():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(experiment="concentration", p_list=(10,),
                           gamma2_list=(1.0, 2.0), m_list=(200, 800),
                           replications=1000, base_seed=20260822,
                           threads=_THREADS)
    reports = run_concentration(cfg)
    by = {(r.gamma2, r.n, r.quantity): r for r in reports}
    ok = True
    for r in reports:
        ok &= bool(np.all(np.asarray(r.bound_calibrated)
                          >= np.asarray(r.empirical_tail_prob)))
    for g in cfg.gamma2_list:
        for q in ("gram", "cross"):
            e_small = np.asarray(by[g, 200, q].empirical_tail_prob)
            e_large = np.asarray(by[g, 800, q].empirical_tail_prob)
            ok &= bool(np.all(e_large <= e_small))
            ok &= bool(np.any(e_large < e_small))
    _finish(8, "calibrated tail bound majorizes and tails shrink with n",
            ok, t0, 600.0)


def test_09_rate_constant_calculators():
    t0 = time.perf_counter()
    ok = True

    b = theory_bounds(L1Penalty(), p=100, s=10)
    ok &= abs(b.width_unit_ball - 2.0 * math.sqrt(math.log(200.0))) < 1e-12
    ok &= abs(b.width_cone_sq - (20.0 * math.log(10.0) + 12.5)) < 1e-12
    ok &= abs(b.phi - 2.0 * math.sqrt(10.0)) < 1e-12
    ok &= b.phi_bar == 1.0

    ok &= theory_bounds(OwlPenalty(np.ones(100)), s=10) == b
    half = theory_bounds(OwlPenalty(np.full(100, 2.0)), s=10)
    ok &= abs(half.width_unit_ball - b.width_unit_ball / 2.0) < 1e-12
    ok &= abs(half.phi - 2.0 * b.phi) < 1e-12
    ok &= abs(half.phi_bar - 0.5) < 1e-12
    ok &= half.width_cone_sq == b.width_cone_sq

    groups = tuple(tuple(range(5 * i, 5 * i + 5)) for i in range(20))
    gb = theory_bounds(GroupL21Penalty(groups), s=3)
    ok &= abs(gb.width_unit_ball
              - (math.sqrt(5.0) + 2.0 * math.sqrt(math.log(20.0)))) < 1e-12
    want_cone = ((math.sqrt(2.0 * math.log(17.0)) + math.sqrt(5.0)) ** 2
                 + 5.0) * 3.0
    ok &= abs(gb.width_cone_sq - want_cone) < 1e-12

    kb = theory_bounds(KSupportPenalty(4), p=20, s=4, beta_max=1.0,
                       beta_min=0.5)
    ok &= abs(kb.width_unit_ball
              - (2.0 + 2.0 * math.sqrt(4.0 * math.log(5.0) + 4.0))) < 1e-12
    ok &= kb.caveat is not None

    cases = [
        (L1Penalty(), 100, b),
        (OwlPenalty(np.full(100, 2.0)), 100, half),
        (GroupL21Penalty(groups), 100, gb),
        (KSupportPenalty(4), 20, kb),
    ]
    for pen, dim, bundle in cases:
        est, se = gaussian_width_unit_ball(pen, dim, 4000,
                                           np.random.default_rng(17))
        ok &= est <= bundle.width_unit_ball + 3.0 * se

    _finish(9, "closed-form rate constants match hand values and cap "
               "Monte-Carlo widths", ok, t0, 60.0)


def test_10_experiment_output_independent_of_threads(tmp_path):
    t0 = time.perf_counter()
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text('{"p_list": [8], "gamma2_list": [2.0], '
                        '"m_list": [3], "replications": 5}')
    runner = CliRunner()
    outs = {}
    for threads in ("1", "8"):
        out = tmp_path / f"t{threads}.csv"
        result = runner.invoke(cli_main, [
            "experiment", "figsw", "--config", str(cfg_file), "--seed", "7",
            "--out", str(out), "--threads", threads])
        assert result.exit_code == 0, result.output
        outs[threads] = (out.read_bytes(),
                         (tmp_path / f"t{threads}.json").read_bytes())
    ok = outs["1"] == outs["8"]
    header = outs["1"][0].decode().splitlines()[0]
    ok &= header == ",".join(FIGSW_HEADER)
    _finish(10, "fixed-seed experiment output is byte-identical across "
                "thread counts", ok, t0, 120.0)
