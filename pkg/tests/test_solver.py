"""Constraint solving, maximization, and SMT-LIB emission."""

import itertools

import pytest
from hypothesis import given, settings, strategies as st

from smt2_checker import check_query
from wcfuzz.expressions import Constraint, LinExpr, PathCondition
from wcfuzz.solver import (
    INDETERMINATE,
    UNSAT,
    Domain,
    Model,
    STATS,
    maximize,
    solve,
    to_smtlib,
)
from wcfuzz.vm import InputLayout


def lin(coeffs, const=0):
    return LinExpr(coeffs, const)


def con(coeffs, op, const):
    """coeffs . vars OP const"""
    return Constraint(lin(coeffs), op, LinExpr.constant(const))


def pc_of(*constraints):
    return PathCondition(conjuncts=list(constraints))


def brute_force(constraints, domain, objective=None):
    """Exhaustive ground truth: (satisfiable, max objective or None)."""
    names = sorted(domain.intervals)
    best = None
    sat = False
    ranges = [range(domain.intervals[v][0], domain.intervals[v][1] + 1)
              for v in names]
    for combo in itertools.product(*ranges):
        asg = dict(zip(names, combo))
        if all(c.satisfied_by(asg) for c in constraints):
            sat = True
            if objective is not None:
                val = objective.evaluate(asg)
                best = val if best is None else max(best, val)
    return sat, best


D2 = Domain({"x": (-10, 10), "y": (-10, 10)})


class TestSolve:
    def test_simple_sat(self):
        model = solve(pc_of(con({"x": 1}, ">", 5)), D2)
        assert isinstance(model, Model)
        assert model["x"] > 5

    def test_model_satisfies_all_conjuncts(self):
        pc = pc_of(con({"x": 1, "y": 1}, "<=", 3), con({"x": 1}, ">=", 2),
                   con({"y": 2}, "!=", 2))
        model = solve(pc, D2)
        assert isinstance(model, Model)
        assert pc.satisfied_by(model.assignment)

    def test_unsat_is_the_sentinel(self):
        out = solve(pc_of(con({"x": 1}, ">", 10)), D2)
        assert out is UNSAT

    def test_contradiction_detected(self):
        out = solve(pc_of(con({"x": 1}, ">", 0), con({"x": 1}, "<", 0)), D2)
        assert out is UNSAT

    def test_equality_diagonal(self):
        pc = pc_of(con({"x": 1, "y": -1}, "==", 7))
        model = solve(pc, D2)
        assert model["x"] - model["y"] == 7

    def test_disequality_holes(self):
        dom = Domain({"x": (0, 2)})
        pc = pc_of(con({"x": 1}, "!=", 0), con({"x": 1}, "!=", 1),
                   con({"x": 1}, "!=", 2))
        assert solve(pc, dom) is UNSAT

    def test_empty_condition_yields_trivial_model(self):
        # no conjuncts means no constrained variables; the input
        # materializer fills unmentioned fields from a base input
        model = solve(pc_of(), D2)
        assert isinstance(model, Model)
        assert set(model.assignment) <= {"x", "y"}

    def test_node_budget_gives_indeterminate(self):
        pc = pc_of(con({"x": 1, "y": 1}, "==", 0), con({"x": 1}, "!=", 0))
        out = solve(pc, D2, node_limit=0)
        assert out is INDETERMINATE

    def test_stats_count_calls(self):
        before = STATS.calls
        solve(pc_of(con({"x": 1}, ">", 0)), D2)
        assert STATS.calls == before + 1

    def test_deterministic_model(self):
        pc = pc_of(con({"x": 1, "y": 1}, ">=", 4))
        assert solve(pc, D2).assignment == solve(pc, D2).assignment


class TestMaximize:
    def test_paper_corner(self):
        dom = Domain({"s_1": (-100, 100), "s_2": (-100, 100)})
        pc = pc_of(con({"s_1": 1}, ">", 0), con({"s_2": 1}, ">", 0))
        best = maximize(pc, lin({"s_1": 1, "s_2": 1}), dom)
        assert best.objective_value == 200
        assert best.assignment == {"s_1": 100, "s_2": 100}

    def test_negative_coefficient_pulls_down(self):
        best = maximize(pc_of(), lin({"x": 1, "y": -2}), D2)
        assert best.objective_value == 10 + 20
        assert best["y"] == -10

    def test_respects_constraints(self):
        pc = pc_of(con({"x": 1, "y": 1}, "<=", 5))
        best = maximize(pc, lin({"x": 1, "y": 1}), D2)
        assert best.objective_value == 5

    def test_unsat_passes_through(self):
        pc = pc_of(con({"x": 1}, ">", 10))
        assert maximize(pc, lin({"x": 1}), D2) is UNSAT

    def test_constant_objective(self):
        best = maximize(pc_of(con({"x": 1}, ">=", 0)), LinExpr.constant(9), D2)
        assert best.objective_value == 9


@st.composite
def small_instance(draw):
    ops = ("<", "<=", ">", ">=", "==", "!=")
    k = draw(st.integers(min_value=1, max_value=4))
    constraints = []
    for _ in range(k):
        cx = draw(st.integers(min_value=-2, max_value=2))
        cy = draw(st.integers(min_value=-2, max_value=2))
        op = draw(st.sampled_from(ops))
        const = draw(st.integers(min_value=-8, max_value=8))
        constraints.append(con({"x": cx, "y": cy}, op, const))
    return constraints


@given(small_instance())
@settings(max_examples=120, deadline=None)
def test_solve_agrees_with_brute_force(constraints):
    dom = Domain({"x": (-6, 6), "y": (-6, 6)})
    sat, _ = brute_force(constraints, dom)
    out = solve(pc_of(*constraints), dom)
    if sat:
        assert isinstance(out, Model)
        assert pc_of(*constraints).satisfied_by(out.assignment)
    else:
        assert out is UNSAT


@given(small_instance())
@settings(max_examples=120, deadline=None)
def test_maximize_agrees_with_brute_force(constraints):
    dom = Domain({"x": (-6, 6), "y": (-6, 6)})
    objective = lin({"x": 2, "y": -1}, 3)
    sat, best = brute_force(constraints, dom, objective)
    out = maximize(pc_of(*constraints), objective, dom)
    if sat:
        assert isinstance(out, Model)
        assert out.objective_value == best
    else:
        assert out is UNSAT


class TestSmtlib:
    def test_paper_example_lines(self):
        dom = Domain({"s_1": (-100, 100), "s_2": (-100, 100)})
        pc = pc_of(con({"s_1": 1}, ">", 0), con({"s_2": 1}, ">", 0))
        text = to_smtlib(pc, dom, lin({"s_1": 1, "s_2": 1}))
        squeezed = [" ".join(line.split()) for line in text.splitlines()]
        assert "(assert (> s_1 0))" in squeezed
        assert "(assert (> s_2 0))" in squeezed
        assert "(maximize (+ s_1 s_2))" in squeezed

    def test_negative_bound_rendering(self):
        dom = Domain({"x": (-100, 100)})
        text = to_smtlib(pc_of(con({"x": 1}, ">=", 0)), dom)
        assert "(assert (>= x (- 100)))" in text

    def test_disequality_uses_distinct(self):
        text = to_smtlib(pc_of(con({"x": 1}, "!=", 4)), Domain({"x": (0, 9)}))
        assert "(assert (distinct x 4))" in text

    def test_checker_accepts_plain_query(self):
        pc = pc_of(con({"x": 1, "y": 1}, "<=", 3), con({"y": 2}, "!=", 2))
        counts = check_query(to_smtlib(pc, D2))
        assert counts["declares"] == 2
        # 2 range bounds per variable + 2 conjuncts
        assert counts["asserts"] == 6
        assert counts["maximize"] == 0

    def test_checker_accepts_maximize_query(self):
        counts = check_query(to_smtlib(pc_of(), D2, lin({"x": 1, "y": 3}, 7)))
        assert counts["maximize"] == 1
        assert counts["get_objectives"] == 1

    @given(small_instance())
    @settings(max_examples=40, deadline=None)
    def test_checker_accepts_random_queries(self, constraints):
        dom = Domain({"x": (-6, 6), "y": (-6, 6)})
        check_query(to_smtlib(pc_of(*constraints), dom))

    def test_checker_rejects_undeclared_variable(self):
        with pytest.raises(ValueError, match="undeclared"):
            check_query("(set-logic QF_LIA)\n(assert (> q 0))\n(check-sat)\n")
