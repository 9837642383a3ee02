"""Deterministic stack VM with edge-coverage instrumentation and cost counters.

Programs are written in a small line-oriented IR:

    # comment                ; both '#' and ';' start comments
    .name insertion_sort
    .input count=8 width=8 signed=0 min=0 max=255
    .mem 16                  ; scratch words appended after the input region
    .data 1,97,0,120         ; optional initial values for the scratch head
    loop:
        load i
        pushn
        brge done
        ...
    done:
        halt

Data memory is one flat array: words [0, count) hold the decoded input
fields, the remaining `.mem` words are scratch (zero unless `.data` set).
Named locals (`load x` / `store x`) live in a separate slot file that
`aload`/`astore` cannot reach.

Instructions (stack top is on the right):

    push K        -- push constant          pop / dup / swap
    load N        -- push local N           store N   -- pop into local N
    aload         -- a      -> M[a]         astore    -- v a -> (M[a]=v)
    pushn         -- push input field count
    add sub mul   -- a b -> a OP b          div mod   -- floor semantics
    neg           -- a -> -a
    jump L        -- unconditional
    brlt brle brgt brge breq brne L
                  -- a b -> jump to L when a REL b holds
    alloc         -- n -> live += n         free      -- n -> live -= n
    add_cost      -- n -> cost accumulator += n
    observe       -- n -> append n to the run's observation list
    halt

Every label starts a basic block, as does the instruction after a
conditional branch. Block ids are drawn from a seeded PRNG at load time
(collisions permitted). Each inter-block transfer updates the AFL-style
bitmap cell `id ^ prev` and bumps the jump counter; `prev` then becomes
`id >> 1` so tight self-loops and A->B vs B->A stay distinguishable.
The initial entry into the first block is not a transfer.

Cost models: "jumps" counts inter-block transfers, "peak_alloc" is the
high-water mark of the alloc/free counter, "user_defined" is the
add_cost accumulator (floored at zero in the reported total).
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field

import numpy as _np

BITMAP_SIZE = 65536
DEFAULT_BUDGET = 10_000_000

COST_MODELS = ("jumps", "peak_alloc", "user_defined")

STATUS_OK = "ok"
STATUS_ERROR = "error"
STATUS_TIMEOUT = "timeout"

# opcodes
(OP_PUSH, OP_POP, OP_DUP, OP_SWAP, OP_LOAD, OP_STORE, OP_ALOAD, OP_ASTORE,
 OP_PUSHN, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_MOD, OP_NEG, OP_JUMP,
 OP_BRLT, OP_BRLE, OP_BRGT, OP_BRGE, OP_BREQ, OP_BRNE,
 OP_ALLOC, OP_FREE, OP_ADD_COST, OP_OBSERVE, OP_HALT) = range(27)

_BRANCH_OPS = {
    "brlt": OP_BRLT, "brle": OP_BRLE, "brgt": OP_BRGT,
    "brge": OP_BRGE, "breq": OP_BREQ, "brne": OP_BRNE,
}
_PLAIN_OPS = {
    "pop": OP_POP, "dup": OP_DUP, "swap": OP_SWAP, "aload": OP_ALOAD,
    "astore": OP_ASTORE, "pushn": OP_PUSHN, "add": OP_ADD, "sub": OP_SUB,
    "mul": OP_MUL, "div": OP_DIV, "mod": OP_MOD, "neg": OP_NEG,
    "alloc": OP_ALLOC, "free": OP_FREE, "add_cost": OP_ADD_COST,
    "observe": OP_OBSERVE, "halt": OP_HALT,
}

CONDITIONAL_OPS = frozenset(_BRANCH_OPS.values())

# branch opcode -> the relation that makes it jump
BRANCH_RELATION = {
    OP_BRLT: "<", OP_BRLE: "<=", OP_BRGT: ">",
    OP_BRGE: ">=", OP_BREQ: "==", OP_BRNE: "!=",
}


class ParseError(Exception):
    def __init__(self, msg, line, col=1):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


class EncodingError(Exception):
    """A model value cannot be encoded into its layout field."""


@dataclass(frozen=True)
class InputLayout:
    """How raw input bytes decode into typed integer fields.

    All fields share one width/signedness/range. Decoding folds the raw
    word into [lo, hi] by modulo, so any byte string of sufficient length
    decodes, and encode(decode(x)) is stable for in-range values.
    """

    count: int
    width: int = 8
    signed: bool = False
    lo: int = 0
    hi: int = 255

    @property
    def width_bytes(self):
        return self.width // 8

    @property
    def byte_len(self):
        return self.count * self.width_bytes

    def decode(self, raw: bytes) -> list[int]:
        if len(raw) < self.byte_len:
            raise ValueError(
                f"input too short: {len(raw)} bytes, layout needs {self.byte_len}")
        wb = self.width_bytes
        lo = self.lo
        span = self.hi - lo + 1
        out = []
        for i in range(self.count):
            u = int.from_bytes(raw[i * wb:(i + 1) * wb], "little", signed=self.signed)
            out.append(lo + (u - lo) % span)
        return out

    def encode(self, values) -> bytes:
        if len(values) != self.count:
            raise EncodingError(
                f"expected {self.count} values, got {len(values)}")
        wb = self.width_bytes
        parts = []
        for i, v in enumerate(values):
            if not (self.lo <= v <= self.hi):
                raise EncodingError(
                    f"field {i}: value {v} outside range [{self.lo}, {self.hi}]")
            try:
                parts.append(int(v).to_bytes(wb, "little", signed=self.signed))
            except OverflowError as e:
                raise EncodingError(f"field {i}: value {v} exceeds width") from e
        return b"".join(parts)

    def sym_name(self, i: int) -> str:
        return f"sym_{i}"


@dataclass(frozen=True, slots=True)
class Instr:
    op: int
    arg: object
    line: int

    @property
    def site(self):
        return f"L{self.line}"


@dataclass
class Program:
    name: str
    code: list
    input_layout: InputLayout
    block_ids: dict          # block label -> id in [0, BITMAP_SIZE)
    block_id_at: list        # per instruction index: id or None
    mem_size: int            # input words + scratch words
    data_init: list          # initial scratch values
    locals_count: int
    seed: int

    @property
    def block_count(self):
        return len(self.block_ids)

    def branch_sites(self):
        """Source sites of all conditional branch instructions."""
        return [ins.site for ins in self.code if ins.op in CONDITIONAL_OPS]


class Bitmap:
    """AFL-style edge bitmap: 65536 saturating 8-bit counters."""

    __slots__ = ("cells", "prev_location")

    def __init__(self):
        self.cells = bytearray(BITMAP_SIZE)
        self.prev_location = 0

    def update(self, block_id: int):
        idx = block_id ^ self.prev_location
        cur = self.cells[idx]
        if cur != 255:
            self.cells[idx] = cur + 1
        self.prev_location = block_id >> 1

    def nonzero(self):
        return [(i, c) for i, c in enumerate(self.cells) if c]


def bitmap_index(cur_block_id: int, prev_location: int) -> int:
    return cur_block_id ^ prev_location


def hit_bucket(count: int) -> int:
    """AFL hit-count bucket for a nonzero counter value.

    Counts are coarsened into the classic power-of-two-ish classes
    {1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128-255} so small fluctuations
    in loop trip counts do not register as new coverage.
    """
    if count < 4:
        return count - 1   # 1, 2, 3 each get their own bucket
    if count < 8:
        return 3
    if count < 16:
        return 4
    if count < 32:
        return 5
    if count < 128:
        return 6
    return 7


_BUCKET_LUT = bytes(hit_bucket(c) if c else 0 for c in range(256))


def coverage_keys(bitmap: Bitmap) -> frozenset:
    """The (cell index, hit bucket) pairs a bitmap contributes.

    Two executions count as covering the same behaviour exactly when
    their key sets are equal; anything outside an accumulated set is
    new coverage.
    """
    arr = _np.frombuffer(bytes(bitmap.cells), dtype=_np.uint8)
    idx = _np.nonzero(arr)[0]
    lut = _np.frombuffer(_BUCKET_LUT, dtype=_np.uint8)
    buckets = lut[arr[idx]]
    return frozenset(zip(idx.tolist(), buckets.tolist()))


@dataclass
class ExecutionResult:
    status: str
    cost: int
    bitmap: Bitmap | None
    decoded_input: list
    jumps: int = 0
    peak_alloc: int = 0
    user_cost: int = 0
    observations: list = field(default_factory=list)
    instr_count: int = 0
    error: str | None = None
    branch_trace: list | None = None
    # Final memory image (input region + scratch). Diagnostic only:
    # not serialized, so round-tripped results carry None here.
    final_mem: list | None = None

    _STATUS_CODES = {STATUS_OK: 0, STATUS_ERROR: 1, STATUS_TIMEOUT: 2}
    _STATUS_NAMES = {0: STATUS_OK, 1: STATUS_ERROR, 2: STATUS_TIMEOUT}

    def to_bytes(self, include_bitmap: bool = False) -> bytes:
        head = struct.pack(
            "<4sBBq qqq II", b"WCXR", 1, self._STATUS_CODES[self.status],
            self.cost, self.jumps, self.peak_alloc, self.user_cost,
            len(self.decoded_input), len(self.observations))
        body = b"".join(struct.pack("<q", v) for v in self.decoded_input)
        body += b"".join(struct.pack("<q", v) for v in self.observations)
        if include_bitmap and self.bitmap is not None:
            body += struct.pack("<BH", 1, self.bitmap.prev_location)
            body += bytes(self.bitmap.cells)
        else:
            body += struct.pack("<BH", 0, 0)
        return head + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ExecutionResult":
        try:
            magic, ver, status, cost, jumps, peak, user, nd, no = struct.unpack_from(
                "<4sBBq qqq II", blob, 0)
        except struct.error as e:
            raise ValueError("not a serialized ExecutionResult") from e
        if magic != b"WCXR" or ver != 1:
            raise ValueError("not a serialized ExecutionResult")
        off = struct.calcsize("<4sBBq qqq II")
        try:
            decoded = [struct.unpack_from("<q", blob, off + 8 * i)[0] for i in range(nd)]
            off += 8 * nd
            obs = [struct.unpack_from("<q", blob, off + 8 * i)[0] for i in range(no)]
            off += 8 * no
            has_bm, prev = struct.unpack_from("<BH", blob, off)
        except struct.error as e:
            raise ValueError("truncated serialized ExecutionResult") from e
        off += struct.calcsize("<BH")
        bm = None
        if has_bm:
            bm = Bitmap()
            bm.cells = bytearray(blob[off:off + BITMAP_SIZE])
            bm.prev_location = prev
        return cls(status=cls._STATUS_NAMES[status], cost=cost, bitmap=bm,
                   decoded_input=decoded, jumps=jumps, peak_alloc=peak,
                   user_cost=user, observations=obs)


def _parse_input_directive(rest, line):
    fields = {}
    for tok in rest.split():
        if "=" not in tok:
            raise ParseError(f"bad .input field '{tok}'", line)
        k, _, v = tok.partition("=")
        try:
            fields[k] = int(v)
        except ValueError:
            raise ParseError(f".input field '{k}' needs an integer", line) from None
    if "count" not in fields:
        raise ParseError(".input needs count=", line)
    count = fields.pop("count")
    width = fields.pop("width", 8)
    signed = bool(fields.pop("signed", 0))
    if width not in (8, 16, 32):
        raise ParseError(f"unsupported width {width}", line)
    if signed:
        wlo, whi = -(1 << (width - 1)), (1 << (width - 1)) - 1
    else:
        wlo, whi = 0, (1 << width) - 1
    lo = fields.pop("min", wlo)
    hi = fields.pop("max", whi)
    if fields:
        raise ParseError(f"unknown .input field '{next(iter(fields))}'", line)
    if count < 1:
        raise ParseError("count must be >= 1", line)
    if not (wlo <= lo <= hi <= whi):
        raise ParseError(f"range [{lo}, {hi}] not within width", line)
    return InputLayout(count=count, width=width, signed=signed, lo=lo, hi=hi)


def load_program(source: str, seed: int = 0, name: str | None = None) -> Program:
    """Parse IR text into a Program with block ids assigned.

    The same (source, seed) pair always yields identical block ids.
    """
    layout = None
    prog_name = name
    mem_extra = 0
    data_init = []
    code = []
    labels = {}          # label -> instruction index
    pending_labels = []  # labels waiting for the next instruction
    local_slots = {}
    fixups = []          # (code index, label, line, col)

    for lineno, rawline in enumerate(source.splitlines(), start=1):
        text = rawline
        for marker in ("#", ";"):
            cut = text.find(marker)
            if cut != -1:
                text = text[:cut]
        stripped = text.strip()
        if not stripped:
            continue
        col = len(text) - len(text.lstrip()) + 1

        if stripped.startswith("."):
            head, _, rest = stripped.partition(" ")
            rest = rest.strip()
            if head == ".name":
                if not rest:
                    raise ParseError(".name needs a value", lineno, col)
                if prog_name is None:
                    prog_name = rest
            elif head == ".input":
                if layout is not None:
                    raise ParseError("duplicate .input", lineno, col)
                layout = _parse_input_directive(rest, lineno)
            elif head == ".mem":
                try:
                    mem_extra = int(rest)
                except ValueError:
                    raise ParseError(".mem needs an integer", lineno, col) from None
                if mem_extra < 0:
                    raise ParseError(".mem must be >= 0", lineno, col)
            elif head == ".data":
                try:
                    data_init = [int(t) for t in rest.replace(",", " ").split()]
                except ValueError:
                    raise ParseError(".data needs integers", lineno, col) from None
            else:
                raise ParseError(f"unknown directive '{head}'", lineno, col)
            continue

        if stripped.endswith(":"):
            label = stripped[:-1].strip()
            if not label.isidentifier():
                raise ParseError(f"bad label '{label}'", lineno, col)
            if label in labels or label in pending_labels:
                raise ParseError(f"duplicate label '{label}'", lineno, col)
            pending_labels.append(label)
            continue

        parts = stripped.split()
        op_name, args = parts[0], parts[1:]
        idx = len(code)
        for label in pending_labels:
            labels[label] = idx
        pending_labels.clear()

        if op_name == "push":
            if len(args) != 1:
                raise ParseError("push needs one integer", lineno, col)
            try:
                code.append(Instr(OP_PUSH, int(args[0]), lineno))
            except ValueError:
                raise ParseError(f"bad integer '{args[0]}'", lineno, col) from None
        elif op_name in ("load", "store"):
            if len(args) != 1 or not args[0].isidentifier():
                raise ParseError(f"{op_name} needs a local name", lineno, col)
            slot = local_slots.setdefault(args[0], len(local_slots))
            code.append(Instr(OP_LOAD if op_name == "load" else OP_STORE, slot, lineno))
        elif op_name == "jump" or op_name in _BRANCH_OPS:
            if len(args) != 1:
                raise ParseError(f"{op_name} needs a label", lineno, col)
            opcode = OP_JUMP if op_name == "jump" else _BRANCH_OPS[op_name]
            fixups.append((idx, args[0], lineno, col))
            code.append(Instr(opcode, args[0], lineno))
        elif op_name in _PLAIN_OPS:
            if args:
                raise ParseError(f"{op_name} takes no argument", lineno, col)
            code.append(Instr(_PLAIN_OPS[op_name], None, lineno))
        else:
            raise ParseError(f"unknown instruction '{op_name}'", lineno, col)

    if pending_labels:
        # trailing labels point past the last instruction; give them a
        # virtual halt so jumps to an end label stay legal
        idx = len(code)
        code.append(Instr(OP_HALT, None, 0))
        for label in pending_labels:
            labels[label] = idx
        pending_labels.clear()

    if layout is None:
        raise ParseError("missing .input layout", 0)

    resolved = []
    for idx, label, lineno, col in fixups:
        if label not in labels:
            raise ParseError(f"jump to undefined label '{label}'", lineno, col)
        ins = code[idx]
        resolved.append((idx, Instr(ins.op, labels[label], ins.line)))
    for idx, ins in resolved:
        code[idx] = ins

    # basic blocks: entry, every label target, every fall-through after a
    # conditional branch
    starts = {0} if code else set()
    starts.update(labels.values())
    for i, ins in enumerate(code):
        if ins.op in CONDITIONAL_OPS and i + 1 < len(code):
            starts.add(i + 1)

    names_at = {}
    for label, idx in labels.items():
        names_at.setdefault(idx, label)
    rng = random.Random(seed)
    block_ids = {}
    block_id_at = [None] * len(code)
    for idx in sorted(starts):
        bname = names_at.get(idx, f"@{idx}")
        bid = rng.randrange(BITMAP_SIZE)
        block_ids[bname] = bid
        block_id_at[idx] = bid

    if data_init and len(data_init) > mem_extra:
        raise ParseError(f".data has {len(data_init)} values but .mem is {mem_extra}", 0)

    return Program(
        name=prog_name or "anonymous",
        code=code,
        input_layout=layout,
        block_ids=block_ids,
        block_id_at=block_id_at,
        mem_size=layout.count + mem_extra,
        data_init=list(data_init),
        locals_count=len(local_slots),
        seed=seed,
    )


class _Fault(Exception):
    pass


def execute(program: Program, raw_input: bytes, cost_model: str = "jumps",
            budget: int = DEFAULT_BUDGET, record_trace: bool = False) -> ExecutionResult:
    """Run the program on raw input bytes. Deterministic.

    Runtime faults and budget exhaustion become status codes, not
    exceptions; the partial cost observed so far is reported.
    """
    if cost_model not in COST_MODELS:
        raise ValueError(f"unknown cost model '{cost_model}'")
    layout = program.input_layout
    decoded = layout.decode(raw_input)  # raises ValueError when too short

    mem = list(decoded) + [0] * (program.mem_size - layout.count)
    for i, v in enumerate(program.data_init):
        mem[layout.count + i] = v
    slots = [0] * program.locals_count
    stack = []
    bitmap = Bitmap()
    code = program.code
    block_id_at = program.block_id_at
    ncode = len(code)
    memsize = program.mem_size

    jumps = 0
    live = 0
    peak = 0
    user_sum = 0
    observations = []
    trace = [] if record_trace else None

    status = STATUS_OK
    error = None
    steps = 0
    ip = 0
    skip_entry_event = True

    try:
        while ip < ncode:
            bid = block_id_at[ip]
            if bid is not None:
                if skip_entry_event:
                    skip_entry_event = False
                else:
                    idx = bid ^ bitmap.prev_location
                    cur = bitmap.cells[idx]
                    if cur != 255:
                        bitmap.cells[idx] = cur + 1
                    bitmap.prev_location = bid >> 1
                    jumps += 1
            steps += 1
            if steps > budget:
                status = STATUS_TIMEOUT
                break
            ins = code[ip]
            op = ins.op

            if op == OP_PUSH:
                stack.append(ins.arg)
            elif op == OP_LOAD:
                stack.append(slots[ins.arg])
            elif op == OP_STORE:
                slots[ins.arg] = stack.pop()
            elif op == OP_ALOAD:
                a = stack.pop()
                if not 0 <= a < memsize:
                    raise _Fault(f"aload out of bounds: {a}")
                stack.append(mem[a])
            elif op == OP_ASTORE:
                a = stack.pop()
                v = stack.pop()
                if not 0 <= a < memsize:
                    raise _Fault(f"astore out of bounds: {a}")
                mem[a] = v
            elif OP_BRLT <= op <= OP_BRNE:
                b = stack.pop()
                a = stack.pop()
                if op == OP_BRLT:
                    taken = a < b
                elif op == OP_BRLE:
                    taken = a <= b
                elif op == OP_BRGT:
                    taken = a > b
                elif op == OP_BRGE:
                    taken = a >= b
                elif op == OP_BREQ:
                    taken = a == b
                else:
                    taken = a != b
                if trace is not None:
                    trace.append((ins.site, 1 if taken else 0))
                if taken:
                    ip = ins.arg
                    continue
            elif op == OP_JUMP:
                ip = ins.arg
                continue
            elif op == OP_ADD:
                b = stack.pop()
                stack.append(stack.pop() + b)
            elif op == OP_SUB:
                b = stack.pop()
                stack.append(stack.pop() - b)
            elif op == OP_MUL:
                b = stack.pop()
                stack.append(stack.pop() * b)
            elif op == OP_DIV:
                b = stack.pop()
                if b == 0:
                    raise _Fault("division by zero")
                stack.append(stack.pop() // b)
            elif op == OP_MOD:
                b = stack.pop()
                if b == 0:
                    raise _Fault("modulo by zero")
                stack.append(stack.pop() % b)
            elif op == OP_NEG:
                stack.append(-stack.pop())
            elif op == OP_PUSHN:
                stack.append(layout.count)
            elif op == OP_DUP:
                stack.append(stack[-1])
            elif op == OP_SWAP:
                stack[-1], stack[-2] = stack[-2], stack[-1]
            elif op == OP_POP:
                stack.pop()
            elif op == OP_ALLOC:
                n = stack.pop()
                if n < 0:
                    raise _Fault(f"alloc of negative size {n}")
                live += n
                if live > peak:
                    peak = live
            elif op == OP_FREE:
                n = stack.pop()
                if n < 0:
                    raise _Fault(f"free of negative size {n}")
                live = live - n if live > n else 0
            elif op == OP_ADD_COST:
                user_sum += stack.pop()
            elif op == OP_OBSERVE:
                observations.append(stack.pop())
            elif op == OP_HALT:
                break
            ip += 1
    except IndexError:
        status = STATUS_ERROR
        error = f"stack underflow at L{code[ip].line}"
    except _Fault as e:
        status = STATUS_ERROR
        error = f"{e} at L{code[ip].line}"

    if cost_model == "jumps":
        cost = jumps
    elif cost_model == "peak_alloc":
        cost = peak
    else:
        cost = user_sum if user_sum > 0 else 0

    return ExecutionResult(
        status=status, cost=cost, bitmap=bitmap, decoded_input=decoded,
        jumps=jumps, peak_alloc=peak, user_cost=user_sum,
        observations=observations, instr_count=steps, error=error,
        branch_trace=trace, final_mem=mem)
