"""Bounded integer constraint solving over finite interval domains.

Backtracking search with interval propagation. Variables are picked
smallest-domain-first; under an objective, values are tried greediest
first. The search is complete over the finite domains, so UNSAT answers
are definitive; a node budget turns pathological instances into an
explicit INDETERMINATE outcome instead of a hang.

`maximize` wraps `solve` in branch-and-bound: binary search between the
best incumbent's value and a propagation-certified ceiling, cutting with
`objective >= mid` until the two meet. When the greedy first model
already hits the ceiling, optimality needs no refutation search at all.

No external SMT solver is required anywhere; `to_smtlib` exports the
query for offline cross-checking with one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from wcfuzz.expressions import LinExpr, PathCondition

NODE_LIMIT = 10_000_000


class _Sentinel:
    __slots__ = ("_name",)

    def __init__(self, name):
        self._name = name

    def __repr__(self):
        return self._name


UNSAT = _Sentinel("UNSAT")
INDETERMINATE = _Sentinel("INDETERMINATE")


@dataclass
class SolverStats:
    calls: int = 0
    nodes: int = 0

    def reset(self):
        self.calls = 0
        self.nodes = 0


STATS = SolverStats()


@dataclass(frozen=True)
class Domain:
    """Inclusive integer interval per variable."""

    intervals: dict

    @classmethod
    def from_layout(cls, layout) -> "Domain":
        return cls({layout.sym_name(i): (layout.lo, layout.hi)
                    for i in range(layout.count)})

    def bounds(self, name):
        return self.intervals[name]


@dataclass
class Model:
    assignment: dict
    objective_value: int | None = None

    def __getitem__(self, name):
        return self.assignment[name]


# --- constraint normal form -------------------------------------------------
# Every relation becomes `expr <= 0` (kind "le") or `expr != 0` (kind "ne").

def _normalize(constraints):
    norm = []
    for c in constraints:
        expr, op = c.normalized()
        items = tuple(expr.coeffs.items())
        if op == "<":
            norm.append(("le", items, expr.const + 1))
        elif op == "<=":
            norm.append(("le", items, expr.const))
        elif op == ">":
            neg = expr.neg()
            norm.append(("le", tuple(neg.coeffs.items()), neg.const + 1))
        elif op == ">=":
            neg = expr.neg()
            norm.append(("le", tuple(neg.coeffs.items()), neg.const))
        elif op == "==":
            neg = expr.neg()
            norm.append(("le", items, expr.const))
            norm.append(("le", tuple(neg.coeffs.items()), neg.const))
        else:  # !=
            norm.append(("ne", items, expr.const))
    return norm


def _ceil_div(a, b):
    # b > 0
    return -((-a) // b)


def _propagate(norm, intervals):
    """Tighten intervals to a fixpoint. Returns None when some
    interval empties (definitely UNSAT within these bounds)."""
    iv = dict(intervals)
    changed = True
    while changed:
        changed = False
        for kind, items, const in norm:
            if kind == "le":
                # sum(c*x) + const <= 0
                if not items and const > 0:
                    return None
                for v, cv in items:
                    rest_min = const
                    for u, cu in items:
                        if u == v:
                            continue
                        lo, hi = iv[u]
                        rest_min += cu * lo if cu > 0 else cu * hi
                    bound = -rest_min  # cv * v <= bound
                    lo, hi = iv[v]
                    if cv > 0:
                        top = bound // cv
                        if top < hi:
                            if top < lo:
                                return None
                            iv[v] = (lo, top)
                            changed = True
                    else:
                        bot = _ceil_div(-bound, -cv)
                        if bot > lo:
                            if bot > hi:
                                return None
                            iv[v] = (bot, hi)
                            changed = True
            else:
                # sum(c*x) + const != 0: only prunes near-fixed states
                free = [(v, cv) for v, cv in items if iv[v][0] != iv[v][1]]
                fixed_sum = const
                for v, cv in items:
                    if iv[v][0] == iv[v][1]:
                        fixed_sum += cv * iv[v][0]
                if not free:
                    if fixed_sum == 0:
                        return None
                    continue
                if len(free) == 1:
                    v, cv = free[0]
                    if fixed_sum % cv == 0:
                        forbidden = -fixed_sum // cv
                        lo, hi = iv[v]
                        if lo == forbidden == hi:
                            return None
                        if forbidden == lo:
                            iv[v] = (lo + 1, hi)
                            changed = True
                        elif forbidden == hi:
                            iv[v] = (lo, hi - 1)
                            changed = True
    return iv


class _OutOfNodes(Exception):
    pass


def _check_all(norm, point):
    for kind, items, const in norm:
        total = const
        for v, cv in items:
            total += cv * point[v]
        if kind == "le":
            if total > 0:
                return False
        elif total == 0:
            return False
    return True


def _search(norm, intervals, var_order, value_prefs, budget):
    iv = _propagate(norm, intervals)
    if iv is None:
        return None
    open_vars = [v for v in var_order if iv[v][0] != iv[v][1]]
    if not open_vars:
        point = {v: iv[v][0] for v in var_order}
        return point if _check_all(norm, point) else None
    var = min(open_vars, key=lambda v: iv[v][1] - iv[v][0])
    lo, hi = iv[var]
    descending = value_prefs.get(var, 0) > 0
    values = range(hi, lo - 1, -1) if descending else range(lo, hi + 1)
    for val in values:
        budget[0] -= 1
        STATS.nodes += 1
        if budget[0] < 0:
            raise _OutOfNodes
        child = dict(iv)
        child[var] = (val, val)
        got = _search(norm, child, var_order, value_prefs, budget)
        if got is not None:
            return got
    return None


def _solve_raw(constraints, variables, domain, value_prefs, budget):
    intervals = {}
    for v in variables:
        if v not in domain.intervals:
            raise ValueError(f"variable '{v}' has no domain")
        intervals[v] = domain.intervals[v]
    norm = _normalize(constraints)
    return _search(norm, intervals, list(variables), value_prefs, budget)


def _ordered_vars(pc, domain, extra=()):
    wanted = pc.variables() | set(extra)
    ordered = [v for v in domain.intervals if v in wanted]
    loose = sorted(wanted - set(ordered))
    for v in loose:
        if v not in domain.intervals:
            raise ValueError(f"variable '{v}' has no domain")
    return ordered + loose


def solve(pc: PathCondition, domain: Domain, node_limit: int = NODE_LIMIT):
    """Find any model of the path condition, or UNSAT, or INDETERMINATE."""
    STATS.calls += 1
    variables = _ordered_vars(pc, domain)
    budget = [node_limit]
    try:
        point = _solve_raw(pc.all_constraints(), variables, domain, {}, budget)
    except _OutOfNodes:
        return INDETERMINATE
    if point is None:
        return UNSAT
    model = Model(dict(point))
    if not pc.satisfied_by(model.assignment):
        raise RuntimeError("solver produced a model violating the condition")
    return model


def _objective_ceiling(norm, objective: LinExpr, intervals) -> int:
    """Sound upper bound on the objective over all models: interval
    maximum after propagating the constraints once."""
    iv = _propagate(norm, intervals) or intervals
    top = objective.const
    for v, c in objective.coeffs.items():
        lo, hi = iv[v]
        top += c * hi if c > 0 else c * lo
    return top


def maximize(pc: PathCondition, objective: LinExpr, domain: Domain,
             node_limit: int = NODE_LIMIT):
    """Model of pc maximizing the objective, with objective_value set.

    Binary search between the greedy incumbent and the propagation
    ceiling, over the complete `solve`; the returned model is a true
    maximum. One shared node budget covers the whole proof; when it
    runs out the outcome is INDETERMINATE even if an incumbent existed.
    """
    STATS.calls += 1
    variables = _ordered_vars(pc, domain, extra=objective.variables())
    prefs = dict(objective.coeffs)
    budget = [node_limit]
    constraints = pc.all_constraints()
    intervals = {v: domain.intervals[v] for v in variables}
    try:
        point = _solve_raw(constraints, variables, domain, prefs, budget)
        if point is None:
            return UNSAT
        best = point
        lo = objective.evaluate(point)
        hi = _objective_ceiling(_normalize(constraints), objective, intervals)
        while lo < hi:
            mid = (lo + hi + 1) // 2
            cut = LinExpr.constant(mid).sub(objective)  # obj >= mid
            bounded = constraints + [_le_constraint(cut)]
            better = _solve_raw(bounded, variables, domain, prefs, budget)
            if better is None:
                hi = mid - 1
            else:
                best = better
                lo = objective.evaluate(better)
    except _OutOfNodes:
        return INDETERMINATE
    model = Model(dict(best), objective_value=lo)
    if not pc.satisfied_by(model.assignment):
        raise RuntimeError("solver produced a model violating the condition")
    return model


def _le_constraint(expr: LinExpr):
    from wcfuzz.expressions import Constraint
    return Constraint(expr, "<=", LinExpr.constant(0))


def to_smtlib(pc: PathCondition, domain: Domain,
              objective: LinExpr | None = None) -> str:
    """Render the condition (and optional maximization objective) as an
    SMT-LIB2 query: QF_LIA declarations, domain bounds, one assert per
    conjunct, then `(maximize ...)` in the style of optimizing solvers."""
    variables = _ordered_vars(pc, domain,
                              extra=objective.variables() if objective else ())
    lines = ["(set-logic QF_LIA)"]
    for v in variables:
        lines.append(f"(declare-const {v} Int)")
    for v in variables:
        lo, hi = domain.intervals[v]
        lines.append(f"(assert (>= {v} {_smt_int(lo)}))")
        lines.append(f"(assert (<= {v} {_smt_int(hi)}))")
    for c in pc.conjuncts:
        lines.append(f"(assert {c.to_smt()})")
    for c in pc.concretizations:
        lines.append(f"(assert {c.to_smt()})")
    if objective is not None:
        lines.append(f"(maximize {objective.to_smt()})")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    if objective is not None:
        lines.append("(get-objectives)")
    return "\n".join(lines) + "\n"


def _smt_int(k: int) -> str:
    return str(k) if k >= 0 else f"(- {-k})"
