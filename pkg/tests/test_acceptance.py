"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``. Criteria 5 and 6 are
Monte Carlo studies and take several minutes each on one core.
"""

import contextlib
import io
import time

import numpy as np
import pytest
from scipy.interpolate import BSpline

from slfpca.bspline import build_basis, eval_basis, gram_matrix
from slfpca.cli import main as cli_main
from slfpca.dataset import BinaryFunctionalDataset, build_design
from slfpca.initial import init_from_naive_fpca
from slfpca.model import FitConfig
from slfpca.penalty import PenaltyConfig, scad, scad_deriv
from slfpca.simulation import (SimScenario, generate, generator_basis, monte_carlo,
                               true_eigenfunctions, true_mean)
from slfpca.solver import (degrees_of_freedom, estimate_scores, fit, log_logistic, logistic,
                           update_mean, update_theta_subiter)
from slfpca.tuning import TuningGrid

# BIC grid for the Monte Carlo criteria: the default lambda candidates with
# three kappa_theta values, sized for the runtime targets
MC_GRID = TuningGrid(kappa_mu_candidates=tuple(np.logspace(-8, -1, 8)),
                     kappa_theta_candidates=(1e-5, 1e-4, 1e-3),
                     lambda_candidates=TuningGrid().lambda_candidates)
MC_RUNS = 20


@pytest.fixture
def report(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number} {'PASS' if ok else 'FAIL'}: {name} | {detail}")
        return ok
    return emit


# 1 ------------------------------------------------------------------------

def test_criterion_1_penalty_suite(report):
    t0 = time.perf_counter()
    a, rng = 3.7, np.random.default_rng(1)
    cont = 0.0
    for lam in (0.05, 0.5, 1.0, 2.0):
        mid = lambda v: -(v * v - 2 * a * lam * v + lam * lam) / (2 * (a - 1))
        cont = max(cont, abs(lam * lam - mid(lam)), abs(mid(a * lam) - (a + 1) * lam ** 2 / 2),
                   abs(scad(lam, lam, a) - lam * lam), abs(scad(a * lam, lam, a) - (a + 1) * lam ** 2 / 2))
    branch = max(abs(scad(0.5, 1, a) - 0.5), abs(scad(3.7, 1, a) - 2.35), abs(scad(0.0, 1, a)))
    v = rng.uniform(0, 6, 500)
    v = v[(np.abs(v - 1) > 1e-3) & (np.abs(v - a) > 1e-3) & (v > 1e-3)]
    fd = (scad(v + 1e-6, 1, a) - scad(v - 1e-6, 1, a)) / 2e-6
    deriv_err = float(np.max(np.abs(fd - scad_deriv(v, 1, a))))
    v, v0 = rng.uniform(0, 6, 10_000), rng.uniform(1e-3, 6, 10_000)
    margin = float(np.min(scad(v0, 1, a) + 0.5 * scad_deriv(v0, 1, a) / v0 * (v * v - v0 * v0)
                          - scad(v, 1, a)))
    elapsed = time.perf_counter() - t0
    ok = cont < 1e-12 and branch < 1e-12 and deriv_err < 1e-6 and margin >= -1e-10 and elapsed < 1
    assert report(1, "penalty unit suite", ok,
                  f"continuity {cont:.1e} derivative {deriv_err:.1e} LQA margin {margin:.1e} "
                  f"time {elapsed:.2f}s")


# 2 ------------------------------------------------------------------------

def _trap(basis, deriv, intervals):
    t = np.linspace(0, basis.T, intervals + 1)
    B = eval_basis(basis, t, deriv)
    w = np.full(t.size, basis.T / intervals)
    w[[0, -1]] /= 2
    return (B * w[:, None]).T @ B


def test_criterion_2_bspline_suite(report):
    t0 = time.perf_counter()
    basis = build_basis()
    rng = np.random.default_rng(2)
    t = np.concatenate([rng.uniform(0, 10, 1000), [0.0, 10.0]])
    pou = float(np.max(np.abs(eval_basis(basis, t).sum(axis=1) - 1)))
    gram_err = 0.0
    for deriv in (0, 2):
        # 100,000-interval knot-aligned trapezoid with one Richardson step
        ref = (4 * _trap(basis, deriv, 100_000) - _trap(basis, deriv, 50_000)) / 3
        G = gram_matrix(basis, deriv)
        big = np.abs(ref) > 1e-3 * np.abs(ref).max()
        gram_err = max(gram_err, float(np.max(np.abs(G[big] - ref[big]) / np.abs(ref[big]))))
    u, d = basis.knots, basis.d
    lin = np.array([u[l + 1:l + d + 1].mean() for l in range(basis.L)])
    curv = abs(float(lin @ basis.penalty_matrix @ lin))
    ref_b = np.column_stack([BSpline(basis.knots, np.eye(basis.L)[l], d)(t) for l in range(basis.L)])
    scipy_err = float(np.max(np.abs(eval_basis(basis, t) - ref_b)))
    elapsed = time.perf_counter() - t0
    ok = pou < 1e-12 and gram_err < 1e-8 and curv < 1e-10 and scipy_err < 1e-12 and elapsed < 10
    assert report(2, "B-spline oracle suite", ok,
                  f"unity {pou:.1e} gram rel {gram_err:.1e} linear curvature {curv:.1e} "
                  f"time {elapsed:.2f}s")


# 3 ------------------------------------------------------------------------

def test_criterion_3_mm_correctness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    v, v0 = rng.uniform(-30, 30, 10_000), rng.uniform(-30, 30, 10_000)
    # majorizer with the additive constant that makes it touch at v0
    bound = (-log_logistic(v0) + ((v - v0 - 4 * (1 - logistic(v0))) ** 2
                                  - (4 * (1 - logistic(v0))) ** 2) / 8)
    literal = -log_logistic(v0) + (v - v0 - 4 * (1 - logistic(v0))) ** 2 / 8
    slack = float(min(np.min(bound + log_logistic(v)), np.min(literal + log_logistic(v))))
    data, _ = generate(SimScenario(case=3, seed=31))
    basis = build_basis()
    init = init_from_naive_fpca(data, basis, 2, seed=31)
    _, rep = fit(data, basis, FitConfig(penalties=PenaltyConfig(1e-4, 1e-4, 0.0)), init)
    tr = np.array(rep.objective_trace)
    worst = float(np.max(np.diff(tr) / np.abs(tr[:-1])))
    elapsed = time.perf_counter() - t0
    ok = slack >= -1e-12 and worst <= 1e-8 and elapsed < 60
    assert report(3, "MM correctness", ok,
                  f"bound slack {slack:.1e} worst relative increase {worst:.1e} over "
                  f"{len(tr)} iterations time {elapsed:.1f}s")


# 4 ------------------------------------------------------------------------

def test_criterion_4_linear_solve_oracles(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    errs = {"mean": 0.0, "theta": 0.0, "df": 0.0}
    for rep in range(10):
        basis = build_basis(10.0, int(rng.integers(1, 5)), 3)
        subjects = []
        for _ in range(int(rng.integers(3, 7))):
            t = np.sort(rng.uniform(0, 10, int(rng.integers(6, 12))))
            subjects.append((t, rng.integers(0, 2, t.size)))
        data = BinaryFunctionalDataset.from_subjects(subjects, 10.0)
        des = build_design(data, basis)
        N, V, B = data.N, basis.penalty_matrix, des.B
        z = rng.standard_normal(N)
        km, kt = 10 ** rng.uniform(-4, 0), 10 ** rng.uniform(-4, 0)
        ref = np.linalg.solve(B.T @ B + N * km * V, B.T @ z)
        errs["mean"] = max(errs["mean"], float(np.max(np.abs(update_mean(des, z, km, V) - ref))))
        xi = rng.standard_normal(data.n)
        U = B * xi[data.subject_index][:, None]
        ref = np.linalg.solve(U.T @ U + N * kt * V, U.T @ z)
        th = update_theta_subiter(z, xi, des, kt, 0.0, 3.7, basis, np.zeros(basis.L))
        errs["theta"] = max(errs["theta"], float(np.max(np.abs(th - ref))))
        theta = rng.standard_normal(basis.L)
        theta[rng.uniform(size=basis.L) < 0.3] = 0
        A = np.flatnonzero(theta)
        if A.size:
            UA = U[:, A]
            H = UA @ np.linalg.inv(UA.T @ UA + N * kt * V[np.ix_(A, A)]) @ UA.T
            errs["df"] = max(errs["df"], abs(degrees_of_freedom(des, theta, xi, kt, V) - np.trace(H)))
    elapsed = time.perf_counter() - t0
    ok = max(errs.values()) < 1e-10 and elapsed < 10
    assert report(4, "linear-solve oracles", ok,
                  " ".join(f"{k} {v:.1e}" for k, v in errs.items()) + f" time {elapsed:.2f}s")


# 5, 6 ---------------------------------------------------------------------

def _study(case):
    t0 = time.perf_counter()
    res = monte_carlo(SimScenario(case=case), FitConfig(), MC_GRID, MC_RUNS, base_seed=100)
    return res, res.summary(), time.perf_counter() - t0


def test_criterion_5_case1_table(report):
    res, s, elapsed = _study(1)
    i1, i2 = s["ise_1"][0], s["ise_2"][0]
    z1, z2 = s["zero_acc_1"][0], s["zero_acc_2"][0]
    ok = (res.failures == 0 and i1 <= 0.06 and i2 <= 0.06 and z1 >= 0.85 and z2 >= 0.85
          and elapsed < 15 * 60)
    assert report(5, "Case 1 dense, 20 runs", ok,
                  f"ISE1 {i1:.4f} ISE2 {i2:.4f} zero-acc {z1:.3f}/{z2:.3f} "
                  f"ISE_mu {s['ise_mu'][0]:.3f} failures {res.failures} time {elapsed:.0f}s")


def test_criterion_6_case3_table(report):
    res, s, elapsed = _study(3)
    i1, i2 = s["ise_1"][0], s["ise_2"][0]
    zero_share = float(np.mean([r["lambda_selected"] == 0 for r in res.rows]))
    ok = (res.failures == 0 and i1 <= 0.05 and i2 <= 0.06 and zero_share >= 0.6
          and elapsed < 15 * 60)
    assert report(6, "Case 3 dense, 20 runs", ok,
                  f"ISE1 {i1:.4f} ISE2 {i2:.4f} lambda=0 share {zero_share:.2f} "
                  f"ISE_mu {s['ise_mu'][0]:.3f} failures {res.failures} time {elapsed:.0f}s")


# 7 ------------------------------------------------------------------------

def test_criterion_7_score_error_trend(report):
    t0 = time.perf_counter()
    gb = generator_basis()
    phis = true_eigenfunctions(1)
    e = np.eye(gb.L)
    theta = np.stack([e[3], e[9]])
    theta /= np.sqrt(np.einsum("ki,ij,kj->k", theta, gb.mass_matrix, theta))[:, None]
    fine = np.linspace(0, 10, 1001)
    mu = np.linalg.lstsq(eval_basis(gb, fine), true_mean(fine), rcond=None)[0]
    medians = []
    for M in (25, 51, 101, 201):
        grid = np.linspace(0, 10, M)
        errs = []
        for r in range(20):
            rng = np.random.default_rng(1000 + r)
            xi = rng.standard_normal((200, 2)) * [3.0, 2.0]
            X = true_mean(grid)[None, :] + xi @ np.stack([f(grid) for f in phis])
            Y = (rng.uniform(size=X.shape) < logistic(X)).astype(int)
            data = BinaryFunctionalDataset.from_subjects([(grid, y) for y in Y], 10.0)
            xh = estimate_scores(build_design(data, gb), data.q, mu, theta)
            errs.append(np.abs(xh - xi).ravel())
        medians.append(float(np.median(np.concatenate(errs))))
    elapsed = time.perf_counter() - t0
    ok = all(b <= a for a, b in zip(medians, medians[1:])) and elapsed < 300
    assert report(7, "score error trend in grid size", ok,
                  "median |error| " + " ".join(f"M={m}:{v:.3f}" for m, v in
                                               zip((25, 51, 101, 201), medians))
                  + f" time {elapsed:.0f}s")


# 8 ------------------------------------------------------------------------

def test_criterion_8_cli_determinism(report, tmp_path):
    def run_all(d):
        d.mkdir()
        tiny = ["--kappa-mu-grid", "1e-4,1e-2", "--kappa-theta-grid", "1e-3",
                "--lambda-grid", "0,0.1", "--max-outer-iter", "8"]
        cmds = [
            ["simulate", "--case", "1", "--n", "50", "--seed", "9",
             "--out-data", d / "data.csv", "--out-truth", d / "truth.json"],
            ["fit", "--data", d / "data.csv", "--lambda", "0.1", "--max-outer-iter", "10",
             "--seed", "2", "--out-model", d / "model.json", "--out-grid", d / "grid.csv"],
            ["tune", "--data", d / "data.csv", "--seed", "2", *tiny, "--out-table", d / "table.csv",
             "--out-best", d / "best.json", "--out-model", d / "tuned.json"],
            ["mc", "--case", "1", "--n", "30", "--runs", "2", "--seed", "4", *tiny,
             "--out-runs", d / "runs.csv", "--out-summary", d / "summary.csv"],
            ["metrics", "--model", d / "model.json", "--truth", d / "truth.json"],
        ]
        codes, stdout = [], []
        for c in cmds:
            buf = io.StringIO()
            with contextlib.redirect_stdout(buf):
                codes.append(cli_main([str(x) for x in c]))
            stdout.append(buf.getvalue().replace(str(d), "<dir>"))
        files = {p.name: p.read_bytes() for p in sorted(d.iterdir())}
        return codes, stdout, files

    codes1, std1, out1 = run_all(tmp_path / "a")
    codes2, std2, out2 = run_all(tmp_path / "b")
    # output files echo no paths, so the two directories must match byte for byte;
    # stdout names the output paths, which are masked
    same = out1 == out2 and std1 == std2
    ok = codes1 == codes2 == [0] * 5 and same and len(out1) == 9
    assert report(8, "CLI determinism", ok,
                  f"exit codes {codes1} files {len(out1)} identical files and stdout {same}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
