"""Concrete-driven symbolic replay.

`concolic_execute` reruns a program on a concrete input while carrying
a symbolic shadow for every value derived from the decoded input
fields (symbols sym_0, sym_1, ...). The concrete half forces every
branch exactly as `vm.execute` would; the symbolic half records, for
each branch whose condition touches a symbol, the constraint that kept
execution on this path. No solving happens here.

The interpreter itself is `SymMachine`, a resumable stepper that runs
until the next input-dependent conditional and then waits for a choice.
`concolic_execute` always feeds it the concretely-forced choice; the
explorer instead forces choices from a trie path, which is what makes
the shadow "stale but still steering" during bounded exploration.

Shadow rules:
  - add/sub and multiplication by a constant stay symbolic (linear).
  - sym*sym, division, and modulo concretize the result; the event is
    counted but adds no constraint.
  - A symbolic array index concretizes too, but pins an equality
    (index expr == concrete index) into PathCondition.concretizations,
    since a different index would change which cell the path touched.
  - add_cost accumulates symbolically, so under the user_defined model
    the final cost has a linear expression a solver can maximize.

`assess` is the gateway between runs and shared search state: it
extends the trie with each path, tracks coverage and the high score,
and decides which inputs deserve to cross between the fuzzer and the
symbolic side (import/export modes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .expressions import Constraint, LinExpr, PathCondition, SymbolicCost
from .solver import Domain, Model, maximize
from .vm import (
    BRANCH_RELATION,
    COST_MODELS,
    DEFAULT_BUDGET,
    OP_ADD,
    OP_ADD_COST,
    OP_ALLOC,
    OP_ALOAD,
    OP_ASTORE,
    OP_BRLT,
    OP_BRNE,
    OP_DIV,
    OP_DUP,
    OP_FREE,
    OP_HALT,
    OP_JUMP,
    OP_LOAD,
    OP_MOD,
    OP_MUL,
    OP_NEG,
    OP_OBSERVE,
    OP_POP,
    OP_PUSH,
    OP_PUSHN,
    OP_STORE,
    OP_SUB,
    OP_SWAP,
    STATUS_ERROR,
    STATUS_OK,
    STATUS_TIMEOUT,
    Bitmap,
    ExecutionResult,
    Program,
    _Fault,
)

IMPORT_MODE = "import"
EXPORT_MODE = "export"

RUNNING = "running"
AT_BRANCH = "branch"


@dataclass(frozen=True)
class SymValue:
    """A stack or memory cell that depends on the input: the concrete
    integer the VM would hold, plus the linear expression over sym_i
    that produced it."""

    concrete: int
    expr: LinExpr


def _conc(v):
    return v.concrete if isinstance(v, SymValue) else v


def _expr(v):
    return v.expr if isinstance(v, SymValue) else LinExpr.constant(v)


@dataclass
class ConcolicStats:
    runs: int = 0
    concretized_ops: int = 0
    errors_skipped: int = 0


STATS = ConcolicStats()


class SymMachine:
    """Resumable concrete+symbolic interpreter.

    `run_to_branch` executes until the next conditional whose operands
    involve a symbol, returning AT_BRANCH with the machine paused on
    that instruction (bookkeeping done, operands still on the stack),
    or the final status when the run ends first. `take_branch` then
    commits a choice, recording the matching constraint; nothing checks
    that the concrete shadow agrees, which is exactly what lets a
    caller walk paths the current input does not satisfy.

    Mirrors vm.execute instruction for instruction: same faults, same
    budget accounting, same bitmap updates, same cost counters.
    """

    __slots__ = (
        "program", "budget", "decoded", "mem", "slots", "stack", "bitmap",
        "pc", "events", "sym_cost", "jumps", "live", "peak", "user_sum",
        "observations", "steps", "ip", "skip_entry_event", "status",
        "error", "pending",
    )

    def __init__(self, program: Program, raw_input: bytes,
                 budget: int = DEFAULT_BUDGET):
        layout = program.input_layout
        self.program = program
        self.budget = budget
        self.decoded = layout.decode(raw_input)
        self.mem: list = [SymValue(v, LinExpr.var(layout.sym_name(i)))
                          for i, v in enumerate(self.decoded)]
        self.mem += [0] * (program.mem_size - layout.count)
        for i, v in enumerate(program.data_init):
            self.mem[layout.count + i] = v
        self.slots: list = [0] * program.locals_count
        self.stack: list = []
        self.bitmap = Bitmap()
        self.pc = PathCondition()
        self.events: list = []
        self.sym_cost = LinExpr.constant(0)
        self.jumps = 0
        self.live = 0
        self.peak = 0
        self.user_sum = 0
        self.observations: list = []
        self.steps = 0
        self.ip = 0
        self.skip_entry_event = True
        self.status = RUNNING
        self.error = None
        self.pending = False

    def fork(self) -> "SymMachine":
        """Independent copy; cheap because cell values are immutable."""
        m = object.__new__(SymMachine)
        m.program = self.program
        m.budget = self.budget
        m.decoded = self.decoded
        m.mem = list(self.mem)
        m.slots = list(self.slots)
        m.stack = list(self.stack)
        m.bitmap = Bitmap()
        m.bitmap.cells = bytearray(self.bitmap.cells)
        m.bitmap.prev_location = self.bitmap.prev_location
        m.pc = self.pc.copy()
        m.events = list(self.events)
        m.sym_cost = self.sym_cost
        m.jumps = self.jumps
        m.live = self.live
        m.peak = self.peak
        m.user_sum = self.user_sum
        m.observations = list(self.observations)
        m.steps = self.steps
        m.ip = self.ip
        m.skip_entry_event = self.skip_entry_event
        m.status = self.status
        m.error = self.error
        m.pending = self.pending
        return m

    @property
    def site(self) -> str:
        return self.program.code[self.ip].site

    def _concretize_index(self, v, site):
        if isinstance(v, SymValue):
            self.pc.concretizations.append(
                Constraint(v.expr, "==", LinExpr.constant(v.concrete)))
            self.events.append((site, "index"))
            STATS.concretized_ops += 1
            return v.concrete
        return v

    def concrete_choice(self) -> int:
        """The choice the concrete shadow forces at the pending branch."""
        if not self.pending:
            raise RuntimeError("not paused at a branch")
        b = _conc(self.stack[-1])
        a = _conc(self.stack[-2])
        rel = BRANCH_RELATION[self.program.code[self.ip].op]
        taken = ((rel == "<" and a < b) or (rel == "<=" and a <= b)
                 or (rel == ">" and a > b) or (rel == ">=" and a >= b)
                 or (rel == "==" and a == b) or (rel == "!=" and a != b))
        return 1 if taken else 0

    def take_branch(self, choice: int):
        """Commit a choice at the pending branch and record its constraint."""
        if not self.pending:
            raise RuntimeError("not paused at a branch")
        ins = self.program.code[self.ip]
        b = self.stack.pop()
        a = self.stack.pop()
        base = Constraint(_expr(a), BRANCH_RELATION[ins.op], _expr(b))
        self.pc.append(base if choice else base.negated(), ins.site,
                       1 if choice else 0)
        self.ip = ins.arg if choice else self.ip + 1
        self.pending = False

    def run_to_branch(self) -> str:
        """Execute until the next symbolic conditional or termination.

        Returns AT_BRANCH, or one of the vm statuses (ok, error,
        timeout) once the run is over.
        """
        if self.pending:
            raise RuntimeError("pending branch needs take_branch first")
        if self.status != RUNNING:
            return self.status

        program = self.program
        code = program.code
        block_id_at = program.block_id_at
        ncode = len(code)
        memsize = program.mem_size
        layout = program.input_layout
        stack = self.stack
        mem = self.mem
        slots = self.slots
        bitmap = self.bitmap
        ip = self.ip

        try:
            while ip < ncode:
                bid = block_id_at[ip]
                if bid is not None:
                    if self.skip_entry_event:
                        self.skip_entry_event = False
                    else:
                        bitmap.update(bid)
                        self.jumps += 1
                self.steps += 1
                if self.steps > self.budget:
                    self.status = STATUS_TIMEOUT
                    self.ip = ip
                    return self.status
                ins = code[ip]
                op = ins.op

                if op == OP_PUSH:
                    stack.append(ins.arg)
                elif op == OP_LOAD:
                    stack.append(slots[ins.arg])
                elif op == OP_STORE:
                    slots[ins.arg] = stack.pop()
                elif op == OP_ALOAD:
                    a = self._concretize_index(stack.pop(), ins.site)
                    if not 0 <= a < memsize:
                        raise _Fault(f"aload out of bounds: {a}")
                    stack.append(mem[a])
                elif op == OP_ASTORE:
                    a = self._concretize_index(stack.pop(), ins.site)
                    v = stack.pop()
                    if not 0 <= a < memsize:
                        raise _Fault(f"astore out of bounds: {a}")
                    mem[a] = v
                elif OP_BRLT <= op <= OP_BRNE:
                    if len(stack) < 2:
                        raise IndexError("pop from empty list")
                    b = stack[-1]
                    a = stack[-2]
                    if isinstance(a, SymValue) or isinstance(b, SymValue):
                        self.ip = ip
                        self.pending = True
                        return AT_BRANCH
                    stack.pop()
                    stack.pop()
                    rel = BRANCH_RELATION[op]
                    taken = ((rel == "<" and a < b) or (rel == "<=" and a <= b)
                             or (rel == ">" and a > b) or (rel == ">=" and a >= b)
                             or (rel == "==" and a == b)
                             or (rel == "!=" and a != b))
                    if taken:
                        ip = ins.arg
                        continue
                elif op == OP_JUMP:
                    ip = ins.arg
                    continue
                elif op == OP_ADD:
                    b = stack.pop()
                    a = stack.pop()
                    if isinstance(a, SymValue) or isinstance(b, SymValue):
                        stack.append(SymValue(_conc(a) + _conc(b),
                                              _expr(a).add(_expr(b))))
                    else:
                        stack.append(a + b)
                elif op == OP_SUB:
                    b = stack.pop()
                    a = stack.pop()
                    if isinstance(a, SymValue) or isinstance(b, SymValue):
                        stack.append(SymValue(_conc(a) - _conc(b),
                                              _expr(a).sub(_expr(b))))
                    else:
                        stack.append(a - b)
                elif op == OP_MUL:
                    b = stack.pop()
                    a = stack.pop()
                    if isinstance(a, SymValue) and isinstance(b, SymValue):
                        self.events.append((ins.site, "mul"))
                        STATS.concretized_ops += 1
                        stack.append(a.concrete * b.concrete)
                    elif isinstance(a, SymValue):
                        stack.append(SymValue(a.concrete * b, a.expr.scale(b)))
                    elif isinstance(b, SymValue):
                        stack.append(SymValue(a * b.concrete, b.expr.scale(a)))
                    else:
                        stack.append(a * b)
                elif op == OP_DIV:
                    b = stack.pop()
                    a = stack.pop()
                    cb = _conc(b)
                    if cb == 0:
                        raise _Fault("division by zero")
                    if isinstance(a, SymValue) or isinstance(b, SymValue):
                        self.events.append((ins.site, "div"))
                        STATS.concretized_ops += 1
                    stack.append(_conc(a) // cb)
                elif op == OP_MOD:
                    b = stack.pop()
                    a = stack.pop()
                    cb = _conc(b)
                    if cb == 0:
                        raise _Fault("modulo by zero")
                    if isinstance(a, SymValue) or isinstance(b, SymValue):
                        self.events.append((ins.site, "mod"))
                        STATS.concretized_ops += 1
                    stack.append(_conc(a) % cb)
                elif op == OP_NEG:
                    v = stack.pop()
                    if isinstance(v, SymValue):
                        stack.append(SymValue(-v.concrete, v.expr.neg()))
                    else:
                        stack.append(-v)
                elif op == OP_PUSHN:
                    stack.append(layout.count)
                elif op == OP_DUP:
                    stack.append(stack[-1])
                elif op == OP_SWAP:
                    stack[-1], stack[-2] = stack[-2], stack[-1]
                elif op == OP_POP:
                    stack.pop()
                elif op == OP_ALLOC:
                    n = _conc(stack.pop())
                    if n < 0:
                        raise _Fault(f"alloc of negative size {n}")
                    self.live += n
                    if self.live > self.peak:
                        self.peak = self.live
                elif op == OP_FREE:
                    n = _conc(stack.pop())
                    if n < 0:
                        raise _Fault(f"free of negative size {n}")
                    self.live = self.live - n if self.live > n else 0
                elif op == OP_ADD_COST:
                    v = stack.pop()
                    self.user_sum += _conc(v)
                    self.sym_cost = self.sym_cost.add(_expr(v))
                elif op == OP_OBSERVE:
                    self.observations.append(_conc(stack.pop()))
                elif op == OP_HALT:
                    break
                ip += 1
        except IndexError:
            self.status = STATUS_ERROR
            self.error = f"stack underflow at L{code[ip].line}"
            self.ip = ip
            return self.status
        except _Fault as e:
            self.status = STATUS_ERROR
            self.error = f"{e} at L{code[ip].line}"
            self.ip = ip
            return self.status

        self.ip = ip
        self.status = STATUS_OK
        return self.status

    def cost(self, cost_model: str) -> int:
        if cost_model == "jumps":
            return self.jumps
        if cost_model == "peak_alloc":
            return self.peak
        return self.user_sum if self.user_sum > 0 else 0

    def to_execution_result(self, cost_model: str) -> ExecutionResult:
        status = STATUS_OK if self.status == RUNNING else self.status
        return ExecutionResult(
            status=status, cost=self.cost(cost_model), bitmap=self.bitmap,
            decoded_input=self.decoded, jumps=self.jumps,
            peak_alloc=self.peak, user_cost=self.user_sum,
            observations=self.observations, instr_count=self.steps,
            error=self.error, final_mem=[_conc(v) for v in self.mem])


@dataclass
class AssessRecord:
    """One row of an Assessor's audit log."""

    mode: str
    input: bytes
    status: str
    cost: int
    new_cov: bool = False
    new_high: bool = False
    exported: bool = False
    phase: str = ""
    elapsed: float | None = None


@dataclass
class ConcolicResult:
    """What one concolic run produced.

    Iterates as the 4-tuple (pc, cost, symbolic_cost, result) so call
    sites can unpack it positionally.
    """

    pc: PathCondition
    cost: int
    symbolic_cost: SymbolicCost | None
    result: ExecutionResult
    events: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.pc, self.cost, self.symbolic_cost, self.result))


def concolic_execute(program: Program, raw_input: bytes,
                     cost_model: str = "jumps",
                     budget: int = DEFAULT_BUDGET) -> ConcolicResult:
    """Replay raw_input concretely while collecting path constraints.

    Every branch follows the concrete shadow; the result's cost,
    status, bitmap, and observations are identical to vm.execute on
    the same arguments.
    """
    if cost_model not in COST_MODELS:
        raise ValueError(f"unknown cost model '{cost_model}'")
    STATS.runs += 1
    m = SymMachine(program, raw_input, budget=budget)
    while m.run_to_branch() == AT_BRANCH:
        m.take_branch(m.concrete_choice())
    m.pc.status = m.status
    result = m.to_execution_result(cost_model)
    symbolic_cost = (SymbolicCost(m.sym_cost)
                     if cost_model == "user_defined" else None)
    return ConcolicResult(pc=m.pc, cost=result.cost,
                          symbolic_cost=symbolic_cost, result=result,
                          events=m.events)


def materialize_input(model: Model, layout, base_input: bytes) -> bytes:
    """Turn a solver model into input bytes.

    Fields named in the model are encoded per the layout; every other
    field keeps the value it had in base_input, so the new input stays
    on the old path wherever the solver left it unconstrained.
    """
    values = layout.decode(base_input)
    for i in range(layout.count):
        name = layout.sym_name(i)
        if name in model.assignment:
            values[i] = model.assignment[name]
    return layout.encode(values)


class Assessor:
    """Shared-state gateway for concolic runs.

    Owns the worker's cumulative coverage set and wires runs into the
    trie and high score. `assess` implements the two exchange modes:

    import: paths from the fuzzer feed the trie. Under the user_defined
    cost model it also asks the solver for the cost-maximizing values
    along each imported path and, when that beats the path's own cost,
    emits the maximizing input right away.

    export: inputs this worker synthesized are screened; only those
    with new coverage or a new high score are worth sending to the
    fuzzer.
    """

    def __init__(self, program: Program, cost_model: str, trie, highscore,
                 budget: int = DEFAULT_BUDGET,
                 solver_node_limit: int | None = None, clock=None):
        self.program = program
        self.cost_model = cost_model
        self.trie = trie
        self.highscore = highscore
        self.budget = budget
        self.solver_node_limit = solver_node_limit
        self.clock = clock
        self.log: list = []

    def _has_new_coverage(self, pc) -> bool:
        """Branch coverage on this side means (site, choice) pairs.

        The fuzzer screens by bitmap buckets; over here the natural
        granularity is the decision pair, checked against what the
        trie has already recorded from real executions.
        """
        index = self.trie.coverage_index
        return any(pair not in index for pair in pc.decisions)

    def _maximize_along(self, run: ConcolicResult, raw: bytes) -> bytes | None:
        layout = self.program.input_layout
        domain = Domain.from_layout(layout)
        kwargs = {}
        if self.solver_node_limit is not None:
            kwargs["node_limit"] = self.solver_node_limit
        best = maximize(run.pc, run.symbolic_cost.expr, domain, **kwargs)
        if not isinstance(best, Model):
            return None
        if best.objective_value is None or best.objective_value <= run.cost:
            return None
        return materialize_input(best, layout, raw)

    def assess(self, inputs, mode: str) -> list[bytes]:
        """Run each input concolically, fold it into the shared state,
        and return the inputs that should cross to the other side."""
        if mode not in (IMPORT_MODE, EXPORT_MODE):
            raise ValueError(f"unknown assessment mode {mode!r}")
        exported = []
        for raw in inputs:
            raw = bytes(raw)
            run = concolic_execute(self.program, raw,
                                   cost_model=self.cost_model,
                                   budget=self.budget)
            status = run.result.status
            if status == STATUS_ERROR:
                # Faulting paths carry no usable cost signal; note them
                # and move on.
                STATS.errors_skipped += 1
                bad = AssessRecord(mode, raw, status, run.cost)
                bad.elapsed = self.clock() if self.clock is not None else None
                self.log.append(bad)
                continue
            # Timed-out paths still enter the trie: their truncated
            # cost already dominates most complete paths, which is
            # exactly the region worth exploring further.
            new_cov = self._has_new_coverage(run.pc)
            self.trie.insert_path(run.pc.decisions, run.cost, witness=raw)
            elapsed = self.clock() if self.clock is not None else None
            new_high = (status == STATUS_OK
                        and self.highscore.update(run.cost, raw, elapsed))
            record = AssessRecord(mode, raw, status, run.cost, new_cov, new_high)
            record.elapsed = elapsed
            self.log.append(record)
            if mode == EXPORT_MODE:
                if new_cov or new_high:
                    record.exported = True
                    exported.append(raw)
                continue
            # import mode: chase the ceiling of this very path.
            if (self.cost_model == "user_defined"
                    and run.symbolic_cost is not None
                    and status == STATUS_OK):
                better = self._maximize_along(run, raw)
                if better is not None:
                    exported.append(better)
        return exported


def assess(inputs, mode, trie, highscore, cost_model, program,
           budget: int = DEFAULT_BUDGET) -> list[bytes]:
    """One-shot form of Assessor.assess for callers without worker state."""
    worker = Assessor(program, cost_model, trie, highscore, budget=budget)
    return worker.assess(inputs, mode)
