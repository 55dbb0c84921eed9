import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adwords_pd import gen, lp, model
from adwords_pd.lp import LpStatus, StandardLp
from adwords_pd.model import AdwordsInstance, Agent, AgentOption, PlpInstance, Resource

from oracles import adwords_certificate_ok, vertex_enumeration


def raw(c, A, b):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    return StandardLp(np.asarray(c, float), A, np.asarray(b, float),
                      tuple(("x", j) for j in range(n)), tuple(("row", i) for i in range(m)))


def adwords(budgets, bids):
    return AdwordsInstance.from_bids({f"u{i + 1}": b for i, b in enumerate(budgets)}, bids)


# -- solver basics ------------------------------------------------------------------

def test_one_dimensional():
    sol = lp.solve(raw([1.0], [[1.0]], [1.0]))
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective == pytest.approx(1.0) and sol.y[0] == pytest.approx(1.0)


def test_symmetric_vertex():
    sol = lp.solve(raw([1.0, 1.0], [[1.0, 1.0]], [1.0]))
    assert sol.objective == pytest.approx(1.0) and sol.y[0] == pytest.approx(1.0)
    assert sorted(np.round(sol.x, 9).tolist()) == [0.0, 1.0]


def test_unbounded_ray():
    P = raw([1.0, 1.0], [[1.0, -1.0]], [1.0])
    sol = lp.solve(P)
    assert sol.status is LpStatus.UNBOUNDED
    d = sol.certificate
    assert np.all(d >= -1e-9) and np.all(P.A @ d <= 1e-9) and P.c @ d > 0


def test_infeasible_farkas():
    # x1 + x2 <= 1 and -x1 - x2 <= -2
    P = raw([1.0, 0.0], [[1.0, 1.0], [-1.0, -1.0]], [1.0, -2.0])
    sol = lp.solve(P)
    assert sol.status is LpStatus.INFEASIBLE
    y = sol.certificate
    assert np.all(y >= -1e-9) and np.all(P.A.T @ y >= -1e-9) and P.b @ y < 0


def test_negative_rhs_feasible():
    # x >= 1 (as -x <= -1), x <= 3, maximize -x  -> x = 1
    sol = lp.solve(raw([-1.0], [[-1.0], [1.0]], [-1.0, 3.0]))
    assert sol.status is LpStatus.OPTIMAL and sol.objective == pytest.approx(-1.0)


def test_iteration_limit_is_explicit():
    rng = np.random.default_rng(0)
    P = raw(rng.random(6), rng.random((6, 6)), rng.random(6))
    sol = lp.solve(P, max_iter=1)
    assert sol.status is LpStatus.ITERATION_LIMIT
    with pytest.raises(lp.LpError):
        sol.require_optimal()


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        StandardLp(np.zeros(2), np.zeros((1, 3)), np.zeros(1), ("a", "b", "c"), ("r",))


def test_degenerate_cycling_example_terminates():
    # Beale's classic cycling example (as a maximization)
    c = [0.75, -150.0, 0.02, -6.0]
    A = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
    sol = lp.solve(raw(c, A, [0.0, 0.0, 1.0]))
    assert sol.status is LpStatus.OPTIMAL and sol.objective == pytest.approx(0.05)


@pytest.mark.parametrize("seed", range(20))
def test_random_6x6_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    c, A, b = rng.random(6), rng.random((6, 6)), rng.random(6)
    sol = lp.solve(raw(c, A, b))
    assert sol.objective == pytest.approx(vertex_enumeration(c, A, b), abs=1e-7)
    assert sol.gap <= 1e-6 * (1 + abs(sol.objective))
    assert sol.primal_residual <= 1e-7 and sol.dual_residual <= 1e-7


# -- builders -----------------------------------------------------------------------

def test_single_match():
    P = lp.build_offline_adwords_lp(adwords([1.0], [{"u1": 0.4}]))
    assert P.shape == (2, 1)
    sol = lp.solve(P)
    assert sol.objective == pytest.approx(0.4) and sol.x[0] == pytest.approx(1.0)


def test_three_half_bids_fractional():
    inst = adwords([1.0], [{"u1": 0.5}] * 3)
    P = lp.build_offline_adwords_lp(inst)
    sol = lp.solve(P)
    assert sol.objective == pytest.approx(vertex_enumeration(P.c, P.A, P.b))
    assert sol.objective == pytest.approx(1.0) and sol.x.sum() == pytest.approx(2.0)
    assert lp.check_slackness(P, sol).empty


def test_greedy_worstcase_opt_is_two():
    inst = gen.gen_greedy_worstcase(0.25)
    sol = lp.solve(lp.build_offline_adwords_lp(inst))
    assert sol.objective == pytest.approx(2.0, abs=1e-7)


def test_variable_guard(monkeypatch):
    monkeypatch.setattr(lp, "MAX_VARIABLES", 3)
    with pytest.raises(lp.LpSizeError):
        lp.build_offline_adwords_lp(adwords([1.0], [{"u1": 0.1}] * 4))


def test_plp_image_keeps_optimum():
    inst = adwords([1.0], [{"u1": 0.4}])
    sol = lp.solve(lp.build_offline_plp(model.to_plp(inst)))
    assert sol.objective == pytest.approx(0.4)


def test_plp_two_agents_fractional():
    opt = (AgentOption(1.0, {"r1": 0.6}),)
    inst = PlpInstance((Resource("r1", 1.0),), (Agent("a1", opt), Agent("a2", opt)))
    P = lp.build_offline_plp(inst)
    sol = lp.solve(P)
    assert sol.objective == pytest.approx(5 / 3)
    assert sorted(sol.x.tolist()) == pytest.approx([2 / 3, 1.0])


def test_plp_empty_agents():
    inst = PlpInstance((Resource("r1", 1.0),), ())
    sol = lp.solve(lp.build_offline_plp(inst))
    assert sol.status is LpStatus.OPTIMAL and sol.objective == 0.0


def test_aggregation_is_equivalent():
    inst = gen.gen_random_adwords(3, n_bidders=3, n_queries=40, n_types=5, max_bid_ratio=0.1)
    a = lp.solve(lp.build_offline_adwords_lp(inst, aggregate=True))
    b = lp.solve(lp.build_offline_adwords_lp(inst, aggregate=False))
    assert a.objective == pytest.approx(b.objective, abs=1e-7)


def test_mps_dump(tmp_path):
    P = lp.build_offline_adwords_lp(adwords([1.0, 2.0], [{"u1": 0.5, "u2": 0.25}]))
    path = tmp_path / "x.mps"
    lp.write_mps(P, path)
    text = path.read_text().split("\n")
    assert text[0].startswith("NAME") and "ENDATA" in text
    assert sum(1 for t in text if t.startswith(" L ")) == P.shape[0]


# -- complementary slackness --------------------------------------------------------

def test_optimal_pair_report_is_empty_and_independent_certificate_holds():
    inst = gen.gen_random_adwords(5, n_bidders=3, n_queries=30, n_types=6, max_bid_ratio=0.1,
                                  budget_range=(0.5, 2.0))
    P = lp.build_offline_adwords_lp(inst)
    sol = lp.solve(P)
    assert lp.check_slackness(P, sol, 1e-6).empty
    x = {(lab[1], lab[2]): v for lab, v in zip(P.variable_labels, sol.x)}
    p, d = adwords_certificate_ok(inst, x, sol.alpha(P), sol.beta(P))
    assert p == pytest.approx(d, abs=1e-6)


def test_perturbed_alpha_on_unexhausted_budget_is_flagged():
    inst = adwords([10.0, 1.0], [{"u1": 0.5, "u2": 0.5}, {"u2": 0.5}, {"u2": 0.5}])
    P = lp.build_offline_adwords_lp(inst)
    sol = lp.solve(P)
    y = sol.y.copy()
    row = P.constraint_labels.index(("budget", "u1"))
    y[row] += 0.1
    rep = lp.check_slackness(P, dataclasses.replace(sol, y=y), 1e-6)
    assert [lab for lab, _ in rep.price_violations] == [("budget", "u1")]
    assert rep.max_violation == pytest.approx(0.1)


def test_greedy_worstcase_positive_dual_set():
    """Both budgets are exhausted at OPT, so pricing both is dual-optimal.

    The dual is degenerate (any 0 <= alpha_2 <= alpha_1 = 1 is optimal), so
    the solver's own J_1 must be a subset of the exhausted bidders, and the
    all-ones price vector must be an optimal dual with an empty report.
    """
    inst = gen.gen_greedy_worstcase(0.25)
    P = lp.build_offline_adwords_lp(inst)
    sol = lp.solve(P)
    rep = lp.check_slackness(P, sol)
    assert rep.empty
    used = P.A[:2] @ sol.x
    assert used == pytest.approx([1.0, 1.0])
    assert set(rep.positive_dual_set) <= {"u1", "u2"} and rep.positive_dual_set
    y = np.zeros(P.shape[0])
    y[:2] = 1.0
    both = dataclasses.replace(sol, y=y, dual_objective=float(P.b @ y))
    rep2 = lp.check_slackness(P, both)
    assert rep2.empty and rep2.positive_dual_set == ["u1", "u2"]
    assert both.dual_objective == pytest.approx(sol.objective)


def test_slackness_requires_optimal():
    P = raw([1.0, 1.0], [[1.0, -1.0]], [1.0])
    with pytest.raises(lp.LpError):
        lp.check_slackness(P, lp.solve(P))


# -- properties ---------------------------------------------------------------------

@st.composite
def small_lps(draw):
    m = draw(st.integers(1, 5))
    n = draw(st.integers(1, 5))
    unit = st.floats(0.0, 1.0, allow_nan=False)
    A = np.array(draw(st.lists(st.lists(unit, min_size=n, max_size=n), min_size=m, max_size=m)))
    A[A < 1e-3] = 0.0  # keep the matrix well conditioned: tiny entries become exact zeros
    b = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=m, max_size=m)))
    c = np.array(draw(st.lists(unit, min_size=n, max_size=n)))
    return c, A, b


@settings(max_examples=150, deadline=None)
@given(small_lps())
def test_duality_and_enumeration(lp_data):
    c, A, b = lp_data
    sol = lp.solve(raw(c, A, b))
    if sol.status is LpStatus.UNBOUNDED:
        # only possible with an all-zero column carrying positive cost
        assert any(c[j] > 0 and not A[:, j].any() for j in range(len(c)))
        return
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective == pytest.approx(vertex_enumeration(c, A, b), abs=1e-7)
    # weak duality for the returned (feasible) pair, checked from raw data
    assert np.all(A @ sol.x <= b + 1e-7) and np.all(sol.x >= -1e-9)
    assert np.all(A.T @ sol.y >= c - 1e-7) and np.all(sol.y >= -1e-9)
    assert c @ sol.x <= b @ sol.y + 1e-6 * (1 + abs(b @ sol.y))
    assert abs(c @ sol.x - b @ sol.y) <= 1e-6 * (1 + abs(sol.objective))
