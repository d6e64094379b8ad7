import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crossview.bp import FactorGraph, NotATree, log_partition, logsumexp, max_product, sum_product


def random_tree(rng, n_max=6, k_max=3):
    fg = FactorGraph()
    n = int(rng.integers(1, n_max + 1))
    for i in range(n):
        k = int(rng.integers(1, k_max + 1))
        fg.add_variable(i, range(k), rng.normal(0, 1, k))
    for i in range(1, n):
        p = int(rng.integers(0, i))
        fg.add_pairwise(p, i, rng.normal(0, 1, (len(fg.domains[p]), len(fg.domains[i]))))
    return fg


def enumerate_scores(fg):
    names = list(fg.domains)
    for combo in itertools.product(*(fg.domains[v] for v in names)):
        a = dict(zip(names, combo))
        yield a, fg.score(a)


def brute_marginals(fg):
    rows = list(enumerate_scores(fg))
    z = logsumexp([s for _, s in rows])
    out = {v: np.zeros(len(fg.domains[v])) for v in fg.domains}
    for a, s in rows:
        for v, lab in a.items():
            out[v][fg.domains[v].index(lab)] += math.exp(s - z)
    return out, z, max(s for _, s in rows)


def test_random_trees_match_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(200):
        fg = random_tree(rng)
        marg, z, best = brute_marginals(fg)
        assignment, score = max_product(fg)
        assert score == pytest.approx(best, abs=1e-9)
        assert fg.score(assignment) == pytest.approx(best, abs=1e-9)
        got = sum_product(fg)
        for v in fg.domains:
            assert np.allclose(got[v], marg[v], atol=1e-9)
        assert log_partition(fg) == pytest.approx(z, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.randoms())
def test_schedule_does_not_change_results(seed, rnd):
    fg = random_tree(np.random.default_rng(seed))
    order = list(fg.domains)
    rnd.shuffle(order)
    a, s = max_product(fg)
    b, s2 = max_product(fg, order)
    assert s == pytest.approx(s2, abs=1e-9)
    m1, m2 = sum_product(fg), sum_product(fg, order)
    assert all(np.allclose(m1[v], m2[v], atol=1e-9) for v in fg.domains)


def test_forest_components_are_independent():
    fg = FactorGraph()
    fg.add_variable("a", (0, 1), [0.0, 1.0])
    fg.add_variable("b", (0, 1), [2.0, 0.0])
    assignment, score = max_product(fg)
    assert assignment == {"a": 1, "b": 0} and score == 3.0
    assert np.allclose(sum_product(fg)["a"], np.exp([0, 1]) / np.exp([0, 1]).sum())


def test_tie_goes_to_lowest_index():
    fg = FactorGraph()
    fg.add_variable("a", ("x", "y", "z"))
    assert max_product(fg)[0] == {"a": "x"}


def test_cycle_rejected():
    fg = FactorGraph()
    for v in "abc":
        fg.add_variable(v, (0, 1))
    fg.add_pairwise("a", "b", np.zeros((2, 2)))
    fg.add_pairwise("b", "c", np.zeros((2, 2)))
    fg.add_pairwise("c", "a", np.zeros((2, 2)))
    with pytest.raises(NotATree):
        max_product(fg)


def test_bad_tables_rejected():
    fg = FactorGraph()
    fg.add_variable("a", (0, 1))
    with pytest.raises(ValueError):
        fg.add_variable("a", (0,))
    with pytest.raises(ValueError):
        fg.add_variable("b", ())
    with pytest.raises(ValueError):
        fg.add_unary("a", [1.0])


def test_logsumexp_handles_neg_inf():
    assert logsumexp([-np.inf, -np.inf]) == -np.inf
    assert logsumexp([0.0, 0.0]) == pytest.approx(math.log(2))
    assert np.allclose(logsumexp(np.array([[0.0, 0.0], [1.0, -np.inf]]), axis=1), [math.log(2), 1.0])
