"""The bounded solver and its SMT-LIB2 rendering.

Three queries: the classic two-variable maximization, an unsatisfiable
conjunction caught by interval propagation, and a maximization with
punched-out values. Each prints the solver verdict next to the query
text an external SMT optimizer would receive. Instant.
"""

from wcfuzz.expressions import Constraint, LinExpr, PathCondition
from wcfuzz.solver import Domain, UNSAT, maximize, solve, to_smtlib


def var(name):
    return LinExpr({name: 1}, 0)


def const(value):
    return LinExpr.constant(value)


def show(title, pc, domain, objective=None):
    print()
    print("=" * 60)
    print(title)
    print("=" * 60)
    print(to_smtlib(pc, domain, objective=objective))
    if objective is None:
        print("-> solve:", solve(pc, domain))
    else:
        print("-> maximize:", maximize(pc, objective, domain))


def main():
    # Two positive variables, maximize their sum: both run to the top
    # of the domain.
    pc = PathCondition()
    pc.conjuncts.append(Constraint(var("s_1"), ">", const(0)))
    pc.conjuncts.append(Constraint(var("s_2"), ">", const(0)))
    domain = Domain({"s_1": (-100, 100), "s_2": (-100, 100)})
    show("maximize s_1 + s_2 under s_1 > 0, s_2 > 0", pc, domain,
         objective=LinExpr({"s_1": 1, "s_2": 1}, 0))

    # Intervals alone refute this one: 2x <= 10 pins x <= 5, x >= 6
    # leaves nothing.
    pc = PathCondition()
    pc.conjuncts.append(Constraint(LinExpr({"x": 2}, 0), "<=", const(10)))
    pc.conjuncts.append(Constraint(var("x"), ">=", const(6)))
    domain = Domain({"x": (0, 255)})
    show("an unsatisfiable pair", pc, domain)
    print("   (identity object:", solve(pc, domain) is UNSAT, ")")

    # Disequalities punch holes: the top value 20 is forbidden, so the
    # maximum lands at 19.
    pc = PathCondition()
    pc.conjuncts.append(Constraint(var("y"), "<=", const(20)))
    pc.conjuncts.append(Constraint(var("y"), "!=", const(20)))
    domain = Domain({"y": (0, 255)})
    show("maximize y with the ceiling punched out", pc, domain,
         objective=var("y"))


if __name__ == "__main__":
    main()
