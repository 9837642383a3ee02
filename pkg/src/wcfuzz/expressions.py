"""Linear integer expressions, constraints, and path conditions.

Symbolic values stay linear by construction: multiplication with two
symbolic operands, division, and modulo are concretized upstream, so an
expression is always `const + sum(coeff * var)`. That keeps both the
bounded solver and the SMT-LIB2 printer simple and total.
"""

from __future__ import annotations

from dataclasses import dataclass, field

RELATIONS = ("<", "<=", ">", ">=", "==", "!=")

_NEGATED = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "==": "!=", "!=": "=="}
_SMT_OP = {"<": "<", "<=": "<=", ">": ">", ">=": ">=", "==": "=", "!=": "distinct"}


class LinExpr:
    """const + sum(coeff * var) over named integer variables."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs=None, const=0):
        self.coeffs = {v: c for v, c in (coeffs or {}).items() if c != 0}
        self.const = const

    @classmethod
    def constant(cls, k: int) -> "LinExpr":
        return cls(None, k)

    @classmethod
    def var(cls, name: str) -> "LinExpr":
        return cls({name: 1}, 0)

    def is_constant(self) -> bool:
        return not self.coeffs

    def variables(self):
        return set(self.coeffs)

    def add(self, other: "LinExpr") -> "LinExpr":
        coeffs = dict(self.coeffs)
        for v, c in other.coeffs.items():
            coeffs[v] = coeffs.get(v, 0) + c
        return LinExpr(coeffs, self.const + other.const)

    def sub(self, other: "LinExpr") -> "LinExpr":
        return self.add(other.scale(-1))

    def scale(self, k: int) -> "LinExpr":
        return LinExpr({v: c * k for v, c in self.coeffs.items()}, self.const * k)

    def neg(self) -> "LinExpr":
        return self.scale(-1)

    def evaluate(self, assignment) -> int:
        total = self.const
        for v, c in self.coeffs.items():
            total += c * assignment[v]
        return total

    def to_smt(self) -> str:
        terms = []
        for v, c in self.coeffs.items():
            if c == 1:
                terms.append(v)
            elif c == -1:
                terms.append(f"(- {v})")
            else:
                terms.append(f"(* {_smt_int(c)} {v})")
        if not terms:
            return _smt_int(self.const)
        if self.const != 0:
            terms.append(_smt_int(self.const))
        if len(terms) == 1:
            return terms[0]
        return "(+ " + " ".join(terms) + ")"

    def __repr__(self):
        parts = [f"{c}*{v}" for v, c in self.coeffs.items()]
        if self.const or not parts:
            parts.append(str(self.const))
        return " + ".join(parts)

    def __eq__(self, other):
        return (isinstance(other, LinExpr)
                and self.coeffs == other.coeffs and self.const == other.const)

    def __hash__(self):
        return hash((frozenset(self.coeffs.items()), self.const))


def _smt_int(k: int) -> str:
    return str(k) if k >= 0 else f"(- {-k})"


@dataclass(frozen=True)
class Constraint:
    """lhs REL rhs between two linear expressions."""

    lhs: LinExpr
    op: str
    rhs: LinExpr

    def __post_init__(self):
        if self.op not in RELATIONS:
            raise ValueError(f"unknown relation '{self.op}'")

    def negated(self) -> "Constraint":
        return Constraint(self.lhs, _NEGATED[self.op], self.rhs)

    def variables(self):
        return self.lhs.variables() | self.rhs.variables()

    def normalized(self) -> tuple:
        """(expr, op) with the constraint rewritten as `expr OP 0`."""
        return self.lhs.sub(self.rhs), self.op

    def satisfied_by(self, assignment) -> bool:
        a = self.lhs.evaluate(assignment)
        b = self.rhs.evaluate(assignment)
        if self.op == "<":
            return a < b
        if self.op == "<=":
            return a <= b
        if self.op == ">":
            return a > b
        if self.op == ">=":
            return a >= b
        if self.op == "==":
            return a == b
        return a != b

    def to_smt(self) -> str:
        return f"({_SMT_OP[self.op]} {self.lhs.to_smt()} {self.rhs.to_smt()})"

    def __repr__(self):
        return f"{self.lhs!r} {self.op} {self.rhs!r}"


@dataclass
class PathCondition:
    """Conjunction collected along one execution path.

    `decisions` is aligned with `conjuncts`: decisions[i] names the
    branch site and the choice (1 taken, 0 fall-through) that produced
    conjuncts[i]. Equalities recorded by concretizing a symbolic array
    index live in `concretizations`; they constrain the solver but are
    not branch decisions.
    """

    conjuncts: list = field(default_factory=list)
    decisions: list = field(default_factory=list)
    concretizations: list = field(default_factory=list)
    status: str = "ok"

    def append(self, constraint: Constraint, site: str, choice: int):
        self.conjuncts.append(constraint)
        self.decisions.append((site, choice))

    def all_constraints(self):
        return list(self.conjuncts) + list(self.concretizations)

    def variables(self):
        names = set()
        for c in self.all_constraints():
            names |= c.variables()
        return names

    def satisfied_by(self, assignment) -> bool:
        return all(c.satisfied_by(assignment) for c in self.all_constraints())

    def copy(self) -> "PathCondition":
        return PathCondition(list(self.conjuncts), list(self.decisions),
                             list(self.concretizations), self.status)

    def __len__(self):
        return len(self.conjuncts)


@dataclass
class SymbolicCost:
    """Symbolic shadow of the user-defined cost accumulator."""

    expr: LinExpr = field(default_factory=lambda: LinExpr.constant(0))

    def add(self, other: LinExpr):
        self.expr = self.expr.add(other)

    def evaluate(self, assignment) -> int:
        return self.expr.evaluate(assignment)
