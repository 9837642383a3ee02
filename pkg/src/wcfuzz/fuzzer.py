"""Cost-guided mutational fuzzing.

The loop is a compact AFL descendant with one twist: alongside
coverage novelty, an input is also kept when it sets a new cost high
score, and ancestors are picked with probability proportional to
(1 + cost). Disabling those two cost hooks (mode "kelinci") leaves a
plain coverage-guided fuzzer, which is exactly the baseline the
campaign comparisons need.

Workers never share memory. Cooperation happens through a sync
directory:

    <sync>/<instance>/queue/id_000042   admitted inputs, raw bytes
    <sync>/<instance>/stats.csv         highscore history (elapsed_s,cost)
    <sync>/<instance>/highscore         best cost so far, single integer
    <sync>/<instance>/best_input        bytes of the best input
    <sync>/STOP                         anyone creating this stops everyone

Every file is published with write-to-temp + atomic rename so peers
never observe partial writes. Peer queues are rescanned every
`sync_interval_cycles` havoc cycles.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from random import Random

from .vm import DEFAULT_BUDGET, STATUS_OK, Program, coverage_keys, execute

DETERMINISTIC_STAGES = ("bitflip", "arith", "interest")
STAGES = DETERMINISTIC_STAGES + ("havoc",)

ARITH_MAX = 8
INTERESTING_BYTES = (0, 1, 16, 32, 64, 100, 127, 128, 200, 255)
HAVOC_BATCH = 64
HAVOC_STACK_MAX = 64
# Deterministic stages cost ~24 executions per input byte; past this
# size they would eat the whole budget, so big inputs go straight to
# havoc like AFL does.
DET_STAGE_MAX_BYTES = 32

ORIGIN_SEED = "seed"
ORIGIN_MUTATION = "mutation"
ORIGIN_IMPORT = "import"


def classify_coverage(bitmap, global_map: frozenset | set):
    """Bucket the bitmap AFL-style and compare against what is known.

    Returns (is_new, updated_set); the input set is not modified, so
    callers can keep snapshots.
    """
    keys = coverage_keys(bitmap)
    if keys <= global_map:
        return False, global_map
    return True, set(global_map) | keys


@dataclass
class QueueEntry:
    """An admitted input plus the reason it was worth keeping."""

    input: bytes
    cost: int
    coverage_new: bool
    origin: str
    highscore_new: bool = False
    id: int = 0
    det_done: bool = False


@dataclass
class Highscore:
    """Best cost seen, its input, and the improvement history."""

    best_cost: int = -1
    best_input: bytes = b""
    history: list = field(default_factory=list)

    def update(self, cost: int, input: bytes | None = None,
               elapsed: float | None = None) -> bool:
        if cost <= self.best_cost:
            return False
        self.best_cost = cost
        if input is not None:
            self.best_input = input
        if elapsed is not None:
            if self.history and elapsed <= self.history[-1][0]:
                elapsed = self.history[-1][0] + 1e-6
            self.history.append((elapsed, cost))
        return True


def mutate(entry: QueueEntry, rng: Random, stage: str,
           min_len: int = 1, max_len: int | None = None,
           batch: int = HAVOC_BATCH) -> list[bytes]:
    """Candidate inputs derived from one queue entry.

    The three deterministic stages enumerate small local edits and
    ignore the rng; havoc draws `batch` candidates, each built from a
    random count (1..64) of stacked random edits, with length kept in
    [min_len, max_len].
    """
    data = entry.input
    if not data:
        raise ValueError("cannot mutate an empty input")
    if max_len is None:
        max_len = 2 * len(data)
    out = []
    if stage == "bitflip":
        for i in range(len(data) * 8):
            buf = bytearray(data)
            buf[i // 8] ^= 0x80 >> (i % 8)
            out.append(bytes(buf))
    elif stage == "arith":
        for i in range(len(data)):
            for d in range(1, ARITH_MAX + 1):
                for s in (d, -d):
                    buf = bytearray(data)
                    buf[i] = (buf[i] + s) % 256
                    out.append(bytes(buf))
    elif stage == "interest":
        for i in range(len(data)):
            for v in INTERESTING_BYTES:
                if data[i] == v:
                    continue
                buf = bytearray(data)
                buf[i] = v
                out.append(bytes(buf))
    elif stage == "havoc":
        for _ in range(batch):
            buf = bytearray(data)
            for _ in range(rng.randint(1, HAVOC_STACK_MAX)):
                buf = _havoc_edit(buf, rng, min_len, max_len)
            out.append(bytes(buf))
    else:
        raise ValueError(f"unknown stage {stage!r}")
    return out


def _havoc_edit(buf: bytearray, rng: Random, min_len: int,
                max_len: int) -> bytearray:
    kind = rng.randrange(7)
    n = len(buf)
    if kind == 0:
        i = rng.randrange(n * 8)
        buf[i // 8] ^= 0x80 >> (i % 8)
    elif kind == 1:
        buf[rng.randrange(n)] = rng.choice(INTERESTING_BYTES)
    elif kind == 2:
        i = rng.randrange(n)
        buf[i] = (buf[i] + rng.choice((1, -1)) * rng.randint(1, ARITH_MAX)) % 256
    elif kind == 3:
        buf[rng.randrange(n)] = rng.randrange(256)
    elif kind == 4 and n >= 2:
        # copy a block elsewhere, length preserved
        size = rng.randint(1, n // 2)
        src = rng.randrange(n - size + 1)
        dst = rng.randrange(n - size + 1)
        buf[dst:dst + size] = buf[src:src + size]
    elif kind == 5 and n < max_len:
        # grow by duplicating a block, clamped to max_len
        size = rng.randint(1, min(n, max_len - n))
        src = rng.randrange(n - size + 1)
        at = rng.randrange(n + 1)
        buf[at:at] = buf[src:src + size]
    elif kind == 6 and n > min_len:
        size = rng.randint(1, n - min_len)
        at = rng.randrange(n - size + 1)
        del buf[at:at + size]
    return buf


def select_ancestor(queue, highscore: Highscore, rng: Random,
                    cost_weighted: bool = True) -> QueueEntry:
    """Pick the next entry to mutate.

    Cost-weighted selection draws with probability proportional to
    (1 + cost); the plain-coverage baseline draws uniformly.
    """
    if not queue:
        raise ValueError("queue is empty")
    if not cost_weighted:
        return rng.choice(queue)
    weights = [1 + max(e.cost, 0) for e in queue]
    return rng.choices(queue, weights=weights, k=1)[0]


class SyncDir:
    """One worker's slot in the shared sync directory."""

    def __init__(self, root, instance_id: str):
        self.root = Path(root)
        self.instance_id = instance_id
        self.home = self.root / instance_id
        self.queue_dir = self.home / "queue"
        self.queue_dir.mkdir(parents=True, exist_ok=True)
        self._published = 0

    def _atomic_write(self, path: Path, data: bytes):
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)

    def publish_input(self, data: bytes) -> Path:
        path = self.queue_dir / f"id_{self._published:06d}"
        self._atomic_write(path, data)
        self._published += 1
        return path

    def write_highscore(self, score: Highscore):
        self._atomic_write(self.home / "highscore",
                           f"{score.best_cost}\n".encode())
        if score.best_input:
            self._atomic_write(self.home / "best_input", score.best_input)

    def flush_stats(self, history):
        lines = ["elapsed_s,cost"]
        lines += [f"{t:.3f},{c}" for t, c in history]
        self._atomic_write(self.home / "stats.csv",
                           ("\n".join(lines) + "\n").encode())

    def peers(self) -> list[str]:
        names = []
        for child in sorted(self.root.iterdir()):
            if child.is_dir() and child.name != self.instance_id:
                if (child / "queue").is_dir():
                    names.append(child.name)
        return names

    def scan_new_inputs(self, seen: set) -> list[bytes]:
        """Unread entries from every peer queue, oldest first."""
        fresh = []
        for peer in self.peers():
            qdir = self.root / peer / "queue"
            for path in sorted(qdir.iterdir()):
                if path.name.endswith(".tmp"):
                    continue
                key = (peer, path.name)
                if key in seen:
                    continue
                seen.add(key)
                try:
                    fresh.append(path.read_bytes())
                except OSError:
                    seen.discard(key)
        return fresh

    def stop_requested(self) -> bool:
        return (self.root / "STOP").exists()

    def request_stop(self):
        self._atomic_write(self.root / "STOP", b"stop\n")


@dataclass
class FuzzConfig:
    cost_model: str = "jumps"
    mode: str = "kelinciwca"            # or "kelinci": coverage-only
    budget_seconds: float = 60.0
    rng_seed: int = 0
    instance_id: str = "fuzzer"
    sync_interval_cycles: int = 8
    stats_flush_seconds: float = 10.0
    exec_budget: int = DEFAULT_BUDGET
    max_iterations: int | None = None   # set for reproducible runs
    stop_at_cost: int | None = None


@dataclass
class FuzzStats:
    history: list
    best_cost: int
    best_input: bytes
    iterations: int = 0
    execs: int = 0
    admitted: int = 0
    imported: int = 0
    seed_cost: int = 0


def fuzz_loop(subject, config: FuzzConfig, sync_root=None) -> FuzzStats:
    """Run one fuzzing campaign over a subject.

    `subject` provides .program, .seed_input and the layout; the walk
    stops at the wall budget, the iteration cap, a target cost, or a
    STOP file in the sync root, whichever comes first. Returns the
    highscore history and counters; all sharing happens through the
    sync directory, when one is given.
    """
    if config.mode not in ("kelinci", "kelinciwca"):
        raise ValueError(f"unknown fuzzer mode {config.mode!r}")
    program: Program = subject.program
    layout = program.input_layout
    rng = Random(config.rng_seed)
    sync = SyncDir(sync_root, config.instance_id) if sync_root else None
    cost_weighted = config.mode == "kelinciwca"

    start = time.monotonic()
    elapsed = lambda: time.monotonic() - start

    queue: list[QueueEntry] = []
    coverage: set = set()
    score = Highscore()
    seen_peer_files: set = set()
    stats = FuzzStats(history=score.history, best_cost=-1, best_input=b"")
    last_flush = start

    def admit(raw, cost, cov_new, origin, high_new) -> QueueEntry:
        entry = QueueEntry(input=raw, cost=cost, coverage_new=cov_new,
                           origin=origin, highscore_new=high_new,
                           id=len(queue))
        queue.append(entry)
        stats.admitted += 1
        if sync:
            sync.publish_input(raw)
        return entry

    def process(raw, origin) -> bool:
        """Execute one candidate; admit if it earns it. True on admit."""
        nonlocal coverage
        stats.execs += 1
        try:
            res = execute(program, raw, cost_model=config.cost_model,
                          budget=config.exec_budget)
        except ValueError:
            # Peer files shorter than the layout cannot decode; skip.
            return False
        if res.status != STATUS_OK:
            # Faults and budget blowouts are recorded, never admitted:
            # their truncated cost would poison the highscore.
            return False
        cov_new, coverage = classify_coverage(res.bitmap, coverage)
        high_new = score.update(res.cost, raw, elapsed())
        if high_new and sync:
            sync.write_highscore(score)
        if cov_new or (high_new and cost_weighted):
            admit(raw, res.cost, cov_new, origin, high_new)
            return True
        return False

    # Seed: always in the queue, whatever it scores.
    seed_raw = bytes(subject.seed_input)
    seed_res = execute(program, seed_raw, cost_model=config.cost_model,
                       budget=config.exec_budget)
    stats.execs += 1
    stats.seed_cost = seed_res.cost
    cov_new, coverage = classify_coverage(seed_res.bitmap, coverage)
    if seed_res.status == STATUS_OK:
        score.update(seed_res.cost, seed_raw, elapsed())
    admit(seed_raw, seed_res.cost, cov_new, ORIGIN_SEED, True)
    if sync:
        sync.write_highscore(score)
        sync.flush_stats(score.history)

    min_len = layout.byte_len
    max_len = 2 * layout.byte_len
    cycles = 0

    def should_stop() -> bool:
        if config.max_iterations is not None and cycles >= config.max_iterations:
            return True
        if config.max_iterations is None and elapsed() >= config.budget_seconds:
            return True
        if config.stop_at_cost is not None and score.best_cost >= config.stop_at_cost:
            return True
        if sync and cycles % 16 == 0 and sync.stop_requested():
            return True
        return False

    while not should_stop():
        entry = select_ancestor(queue, score, rng, cost_weighted=cost_weighted)
        if not entry.det_done and len(entry.input) <= DET_STAGE_MAX_BYTES:
            entry.det_done = True
            candidates = []
            for stage in DETERMINISTIC_STAGES:
                candidates += mutate(entry, rng, stage, min_len, max_len)
        else:
            entry.det_done = True
            candidates = mutate(entry, rng, "havoc", min_len, max_len)
        for raw in candidates:
            process(raw, ORIGIN_MUTATION)
            if (config.stop_at_cost is not None
                    and score.best_cost >= config.stop_at_cost):
                break
        cycles += 1
        stats.iterations = cycles

        if sync and cycles % config.sync_interval_cycles == 0:
            for raw in sync.scan_new_inputs(seen_peer_files):
                stats.imported += 1
                process(raw, ORIGIN_IMPORT)

        now = time.monotonic()
        if sync and now - last_flush >= config.stats_flush_seconds:
            sync.flush_stats(score.history)
            last_flush = now

    if sync:
        sync.flush_stats(score.history)
        sync.write_highscore(score)
        if (config.stop_at_cost is not None
                and score.best_cost >= config.stop_at_cost):
            sync.request_stop()
    stats.best_cost = score.best_cost
    stats.best_input = score.best_input
    stats.iterations = cycles
    return stats


def read_stats_csv(path) -> list[tuple[float, int]]:
    """Parse one worker's stats.csv back into (elapsed_s, cost) points."""
    points = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            points.append((float(row["elapsed_s"]), int(row["cost"])))
    return points
