import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from easvar.bench import (Design, check_condition1, check_condition2, check_condition3, compute_metrics,
                          population_ls_target, run_experiment, run_seed, support_rates)
from easvar.core import Graph, TimeSeriesData, gamma_n0, generate_pattern, simulate_var
from easvar.eas import EasParams

from conftest import random_series
from oracles import constrained_min, min_sparser_distance


def test_condition1_identity_gram():
    n = 100
    q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(n - 1, 2)))
    series = np.zeros((2, n + 1))
    series[:, 1:n] = np.sqrt(n) * q.T
    value, ok = check_condition1(TimeSeriesData(series))
    assert value == pytest.approx(10.0) and ok


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10_000))
def test_condition1_rotation_invariant(p, seed):
    data = random_series(p, 50, seed=seed)
    q = ortho_group.rvs(p, random_state=seed)
    rotated = TimeSeriesData(q @ data.series)
    assert check_condition1(rotated)[0] == pytest.approx(check_condition1(data)[0], rel=1e-9)


def condition2_matrix(a0, sigma2, g, n):
    idx = g.sorted_active()
    return np.kron(gamma_n0(a0, sigma2, n), np.diag(1.0 / np.asarray(sigma2)))[np.ix_(idx, idx)]


def test_condition2_single_entry():
    a0 = np.array([[0.4, 0.0], [0.0, 0.3]])
    g = Graph.from_entries(2, [(0, 0)])
    lhs, _, _ = check_condition2(a0, [1.0, 2.0], g, 50, EasParams())
    m11 = condition2_matrix(a0, [1.0, 2.0], g, 50)[0, 0]
    assert lhs == pytest.approx((m11 * 0.4) ** 2 / 18)


def test_condition2_matches_support_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(30):
        p = int(rng.integers(2, 4))
        a0 = rng.normal(size=(p, p)) * (rng.random((p, p)) < 0.7)
        np.fill_diagonal(a0, rng.uniform(0.5, 1.0, p))
        a0 *= 0.7 / np.linalg.norm(a0, 2)
        g = Graph.from_mask(a0 != 0)
        if g.size > 8:
            continue
        sigma2 = rng.uniform(0.5, 2.0, p)
        lhs, rhs, _ = check_condition2(a0, sigma2, g, 60, EasParams())
        m = condition2_matrix(a0, sigma2, g, 60)
        alpha = a0.flatten(order="F")[g.sorted_active()]
        assert lhs == pytest.approx(2 * constrained_min(m, alpha) / 18, rel=1e-8)
        assert rhs == pytest.approx(1.0 / (60 ** 0.51 * p ** 2))


def test_condition2_uses_rss_floor_when_data_given():
    a0, g0 = generate_pattern("random", 4, 0)
    data = simulate_var(a0, np.ones(4), 120, 0)
    assert check_condition2(a0, np.ones(4), g0, 120, EasParams(), data=data)[2]
    assert not check_condition2(a0, np.ones(4), g0, 120, EasParams(d=1e9), data=data)[2]


def test_condition2_rejects_singular_block():
    # series 2 has negligible variance, so its column is numerically dependent
    a0 = np.array([[0.5, 0.3], [0.0, 0.2]])
    with pytest.raises(ValueError):
        check_condition2(a0, [1.0, 1e-20], Graph.from_entries(2, [(0, 0), (0, 1)]), 30, EasParams())


def test_population_target_against_monte_carlo():
    a0 = np.array([[0.5, 0.2], [0.0, 0.3]])
    n = 30
    g = Graph.full(2)
    reps = 3000
    acc_yx = np.zeros((2, 2))
    for r in range(reps):
        d = simulate_var(a0, [1.0, 1.0], n, 10_000 + r)
        acc_yx += d.y_mat @ d.x_mat.T
    big_gamma = n * gamma_n0(a0, [1.0, 1.0], n)
    np.testing.assert_allclose(acc_yx / reps, a0 @ big_gamma, rtol=0.08, atol=0.3)
    # on the full graph the population least-squares target is A0 itself
    np.testing.assert_allclose(population_ls_target(a0, [1.0, 1.0], g, n), a0.flatten(order="F"), atol=1e-10)


def test_condition3_matches_support_enumeration():
    rng = np.random.default_rng(4)
    for _ in range(30):
        p = 3
        a0 = rng.normal(size=(p, p))
        a0 *= 0.6 / np.linalg.norm(a0, 2)
        g = Graph.from_mask(rng.random((p, p)) < 0.6)
        if g.size == 0:
            continue
        lhs, _, _ = check_condition3(a0, [1.0, 1.0, 1.0], g, 50, EasParams())
        v = population_ls_target(a0, [1.0, 1.0, 1.0], g, 50)
        assert lhs == pytest.approx(4.5 * min_sparser_distance(v), rel=1e-8)


def test_condition3_trivial_cases():
    # a zero coordinate in the target: an unneeded edge
    a0 = np.diag([0.5, 0.4])
    lhs, rhs, ok = check_condition3(a0, [1.0, 1.0], Graph.full(2), 40, EasParams())
    assert lhs == pytest.approx(0.0, abs=1e-20) and ok
    # dependent population columns: series 2 never moves
    a0 = np.array([[0.5, 0.0], [0.0, 0.0]])
    lhs, _, ok = check_condition3(a0, [1.0, 1e-300], Graph.full(2), 40, EasParams())
    assert lhs == 0.0 and ok


def test_metrics_perfect_estimate():
    a0, g0 = generate_pattern("random", 4, 1)
    test = simulate_var(a0, np.ones(4), 50, 1)
    rec = compute_metrics(test, a0, (a0, g0))
    assert rec.est_err == 0 and rec.fpr == 0 and rec.fnr == 0 and rec.map_equals_oracle
    resid = test.y_mat - a0 @ test.x_mat
    assert rec.l2_err == pytest.approx(np.linalg.norm(resid, 2) / 50)
    assert rec.lf_err == pytest.approx(np.linalg.norm(resid) / 50)


def test_metrics_without_oracle_omit_oracle_fields():
    data = random_series(2, 30)
    rec = compute_metrics(data, np.eye(2) * 0.1)
    assert rec.est_err is None and rec.fpr is None and rec.r_hat_go is None


def test_support_rates_counting():
    assert support_rates(Graph.full(2), Graph.diagonal(2)) == (1.0, 0.0)
    assert support_rates(Graph.from_entries(2, [(0, 0)]), Graph.diagonal(2)) == (0.0, 0.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.data())
def test_rates_reconstruct_graph_size(p, data):
    p2 = p * p
    sel = data.draw(st.frozensets(st.integers(0, p2 - 1)))
    oracle = data.draw(st.frozensets(st.integers(0, p2 - 1), min_size=1, max_size=p2 - 1))
    g, g_o = Graph(p, sel), Graph(p, oracle)
    fpr, fnr = support_rates(g, g_o)
    rebuilt = fpr * (p2 - g_o.size) + (1 - fnr) * g_o.size
    assert round(rebuilt) == g.size and abs(rebuilt - g.size) < 1e-9


TINY = Design(p=2, n=40, pattern="random", seeds=2, steps=300, burn_in=100, draws=50)


def test_run_experiment_is_deterministic_and_complete():
    r1, r2 = run_experiment(TINY), run_experiment(TINY)
    assert r1.to_csv() == r2.to_csv()
    rows = r1.rows()
    assert len(rows) == 2 * 4 and all(r["error"] is None for r in rows)
    payload = json.loads(r1.to_json())
    assert payload["schema_version"] == 1 and len(payload["conditions"]) == 2
    table = r1.format_table()
    assert "est err" in table and "Condition 1" in table


def test_parallel_matches_serial():
    assert run_experiment(TINY, processes=2).to_csv() == run_experiment(TINY).to_csv()


def test_failures_are_recorded_per_seed():
    out = run_seed(TINY, 0, methods=("oracle", "bogus"))
    assert "oracle" in out.metrics and "bogus" in out.errors


def test_summary_statistics():
    res = run_experiment(TINY, methods=("oracle",))
    s = res.summary()
    vals = [o.metrics["oracle"].est_err for o in res.outcomes]
    assert s["oracle"]["est_err"][0] == pytest.approx(np.mean(vals))
    assert s["oracle"]["est_err"][1] == pytest.approx(np.std(vals, ddof=1))
    assert math.isnan(s["oracle"]["r_hat_go"][0])
