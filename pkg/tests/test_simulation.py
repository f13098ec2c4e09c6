import math

import numpy as np
import pytest
from scipy.integrate import quad

from slfpca.bspline import build_basis
from slfpca.errors import InvalidArgumentError
from slfpca.model import FitConfig, SlfpcaModel
from slfpca.simulation import (MonteCarloResult, RUN_COLUMNS, SimScenario, evaluate_fit,
                               generate, ise, match_components, monte_carlo, support_metrics,
                               true_eigenfunctions, true_mean)
from slfpca.solver import logistic
from slfpca.tuning import TuningGrid


def l2(f, g=None):
    g = f if g is None else g
    breaks = np.arange(0, 11)
    return sum(quad(lambda t: f(t) * g(t), a, b, epsabs=1e-14, epsrel=1e-13)[0]
               for a, b in zip(breaks[:-1], breaks[1:]))


@pytest.mark.parametrize("case", [1, 2, 3, 4])
def test_eigenfunctions_unit_norm(case):
    for f in true_eigenfunctions(case):
        assert abs(l2(f) - 1) < 1e-10


def test_case_orthogonality():
    f1, f2 = true_eigenfunctions(1)
    assert abs(l2(f1, f2)) < 1e-12
    f1, f2 = true_eigenfunctions(2)
    assert abs(l2(f1, f2)) < 1e-8


def test_unknown_case():
    with pytest.raises(InvalidArgumentError):
        true_eigenfunctions(5)
    with pytest.raises(InvalidArgumentError):
        SimScenario(case=0)
    with pytest.raises(InvalidArgumentError):
        SimScenario(design="medium")


def test_generate_dense_grid_and_determinism():
    sc = SimScenario(case=1, n=30, seed=4)
    d1, t1 = generate(sc)
    d2, t2 = generate(sc)
    assert np.array_equal(d1.times, d2.times) and np.array_equal(d1.y, d2.y)
    assert np.array_equal(t1.scores, t2.scores)
    grid = np.linspace(0, 10, 51)
    for i in range(d1.n):
        assert np.array_equal(d1.subject(i)[0], grid)


def test_generate_sparse_counts():
    d, _ = generate(SimScenario(case=2, n=200, design="sparse", seed=1))
    assert d.counts.min() >= 8 and d.counts.max() <= 12
    assert len(set(d.counts)) > 1


def test_generate_binomial_frequencies():
    d, _ = generate(SimScenario(case=1, n=10_000, eigenvalues=(0.0, 0.0), seed=8))
    grid = np.linspace(0, 10, 51)
    Y = d.y.reshape(10_000, 51)
    p = logistic(true_mean(grid))
    se = np.sqrt(p * (1 - p) / 10_000)
    assert np.all(np.abs(Y.mean(axis=0) - p) <= 3 * se + 1e-12) or \
        np.mean(np.abs(Y.mean(axis=0) - p) <= 3 * se) >= 0.98


def test_scores_have_requested_variance():
    _, truth = generate(SimScenario(case=3, n=4000, seed=2))
    assert np.allclose(truth.scores.var(axis=0), [9, 4], rtol=0.1)


def test_ise_examples():
    g = true_eigenfunctions(3)[0]
    assert ise(g, g) < 1e-12
    neg = lambda t: -g(t)
    assert ise(neg, g, sign_align=True) < 1e-12
    assert ise(neg, g) == pytest.approx(4.0, abs=1e-8)
    shift = lambda t: g(t) + 0.1
    assert ise(shift, g) == pytest.approx(0.1, abs=1e-6)
    f = true_eigenfunctions(1)[0]
    assert ise(f, g) == pytest.approx(ise(lambda t: -f(t), lambda t: -g(t)))


def test_support_metric_examples():
    f1 = true_eigenfunctions(1)[0]
    t = np.linspace(0, 10, 1001)
    g = np.abs(f1(t))
    # the cubic tails dip below the 1e-6 support threshold next to the support edges
    expected = np.mean(g[g >= 1e-10] >= 1e-6)
    assert support_metrics(f1, f1) == (1.0, pytest.approx(expected, abs=1e-15))
    assert 0.99 < expected < 1.0
    assert support_metrics(lambda t: np.zeros_like(t), f1) == (1.0, 0.0)
    c3 = true_eigenfunctions(3)[0]
    assert support_metrics(c3, c3)[0] == 1.0
    assert support_metrics(lambda t: -f1(t), f1) == support_metrics(f1, f1)
    with pytest.raises(InvalidArgumentError):
        support_metrics(f1, f1, grid_size=50)


def test_match_components_swaps():
    f1, f2 = true_eigenfunctions(1)
    out = match_components([f2, lambda t: -f1(t)], [f1, f2])
    assert ise(out[0], f1, sign_align=True) < 1e-12


def test_evaluate_fit_on_exact_truth():
    gb = build_basis()
    e = np.eye(gb.L)
    theta = np.stack([e[3] / math.sqrt(e[3] @ gb.mass_matrix @ e[3]),
                      e[9] / math.sqrt(e[9] @ gb.mass_matrix @ e[9])])
    _, truth = generate(SimScenario(case=1, n=5, seed=0))
    mu = np.linalg.lstsq(gb(np.linspace(0, 10, 400)), true_mean(np.linspace(0, 10, 400)),
                         rcond=None)[0]
    model = SlfpcaModel(mu, theta[::-1].copy(), np.zeros((5, 2)), gb)
    row = evaluate_fit(model, truth)
    assert row["ise_1"] < 1e-12 and row["ise_2"] < 1e-12
    assert row["zero_acc_1"] == 1.0 and row["zero_acc_2"] == 1.0
    assert row["ise_mu"] < 1e-3


def test_monte_carlo_smoke_and_summary():
    grid = TuningGrid((1e-3,), (1e-3,), (0.0, 0.1))
    sc = SimScenario(case=1, n=40)
    res = monte_carlo(sc, FitConfig(max_outer_iter=5), grid, runs=2, base_seed=3)
    assert len(res.rows) == 2 and res.failures == 0
    assert [r["run"] for r in res.rows] == [0, 1]
    assert set(RUN_COLUMNS) <= set(res.rows[0])
    summ = res.summary()
    for col in RUN_COLUMNS[1:]:
        vals = [float(r[col]) for r in res.rows]
        assert summ[col][0] == pytest.approx(np.mean(vals))
    again = monte_carlo(sc, FitConfig(max_outer_iter=5), grid, runs=1, base_seed=3)
    assert again.rows[0] == res.rows[0]
    with pytest.raises(InvalidArgumentError):
        monte_carlo(sc, FitConfig(), grid, runs=0)


def test_monte_carlo_counts_failures(monkeypatch):
    from slfpca import simulation

    def boom(*a, **k):
        raise RuntimeError("fail")

    monkeypatch.setattr(simulation, "run_once", boom)
    res = simulation.monte_carlo(SimScenario(n=5), FitConfig(), TuningGrid(), runs=2)
    assert res.failures == 2 and res.rows == []
    assert all(math.isnan(m) for m, _ in MonteCarloResult([], 2).summary().values())
