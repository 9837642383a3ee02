"""Campaign orchestration: fuzzing and symbolic exploration in tandem.

Four modes share one entry point. "kelinci" is the coverage-only
fuzzer, "kelinciwca" adds cost-guided admission, "symexe" runs the
trie-guided concolic worker alone, and "badger" runs kelinciwca and
symexe as separate processes that trade inputs through a shared sync
directory. Workers never share memory; every exchanged byte goes
through files, so a crashed worker leaves partial stats behind
instead of taking the campaign down.

The symexe worker keeps three promises the tests lean on:

* every file it publishes passed an export assessment at publish time
  (new decision coverage or a new high score, nothing else goes out),
* replaying and bounded exploration never touch the solver,
* the fuzzer side never touches the trie or the solver at all.
"""

from __future__ import annotations

import json
import multiprocessing
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .concolic import Assessor, EXPORT_MODE, IMPORT_MODE, materialize_input
from .explorer import DivergenceError, explore_node, witness_for
from .fuzzer import (
    FuzzConfig,
    FuzzStats,
    Highscore,
    SyncDir,
    fuzz_loop,
    read_stats_csv,
)
from .solver import Domain, INDETERMINATE, Model, STATS as SOLVER_STATS, UNSAT, solve
from .subjects import get_subject, seed_input_for
from .trie import HEURISTIC_HIGHER, HEURISTIC_LOWER, Trie
from .vm import DEFAULT_BUDGET, STATUS_ERROR, execute

MODES = ("badger", "kelinciwca", "kelinci", "symexe")

# How long past the wall budget a badger child may run before the
# parent force-stops it.
_GRACE_SECONDS = 20.0


@dataclass
class CampaignConfig:
    subject: str
    mode: str = "badger"
    cost_model: str | None = None       # None: the subject's own model
    budget_seconds: float = 60.0
    rng_seed: int = 0
    n: int | None = None
    value_range: tuple | None = None
    sync_dir: str = "campaign_out"
    import_interval: int = 10           # symexe: scan peers every K iterations
    bse_depth: int = 1
    heuristic: str = HEURISTIC_LOWER
    stop_at_cost: int | None = None
    exec_budget: int = DEFAULT_BUDGET
    solver_node_limit: int | None = None
    fuzzer_iterations: int | None = None    # caps replace the wall clock
    symexe_iterations: int | None = None


@dataclass
class CampaignStats:
    subject: str
    mode: str
    cost_model: str
    seed_cost: int
    best_cost: int
    best_input: bytes
    slowdown: float
    histories: dict = field(default_factory=dict)
    merged: list = field(default_factory=list)
    summaries: dict = field(default_factory=dict)
    sync_dir: str = ""
    crashed: bool = False
    worker_exit: dict = field(default_factory=dict)


def generate_input_file(model, layout) -> bytes:
    """Turn a solver model into raw input bytes.

    Fields the model leaves unconstrained keep the seed text's bytes,
    so two models differing in one variable produce files differing
    only in that field.
    """
    return materialize_input(model, layout, seed_input_for(layout))


def merge_histories(histories) -> list:
    """Pointwise running maximum over several (elapsed, cost) series."""
    events = sorted((t, c) for hist in histories for t, c in hist)
    merged = []
    best = None
    for t, c in events:
        if best is None or c > best:
            best = c
            merged.append((t, best))
    return merged


class SymExeWorker:
    """The concolic half of a campaign.

    Repeatedly picks the most promising trie node, replays to it with
    a witness shadow, explores one decision past it, solves the
    frontier conditions, and re-screens everything through an export
    assessment before publishing. Peer inputs are pulled in every
    `import_interval` iterations and assessed in import mode, which
    on user-defined cost models also maximizes the cost along each
    imported path.
    """

    def __init__(self, subject, config: CampaignConfig, sync_root=None,
                 instance_id: str = "symexe"):
        self.subject = subject
        self.config = config
        self.program = subject.program
        self.layout = self.program.input_layout
        self.cost_model = config.cost_model or subject.cost_model
        self.trie = Trie()
        self.score = Highscore()
        self.sync = SyncDir(sync_root, instance_id) if sync_root else None
        self._start = time.monotonic()
        self.assessor = Assessor(
            self.program, self.cost_model, self.trie, self.score,
            budget=config.exec_budget,
            solver_node_limit=config.solver_node_limit,
            clock=self.elapsed)
        self.iterations = 0
        self.inputs_imported = 0
        self.files_exported = 0
        self.exports_from_maximization = 0
        self.divergences = 0
        self.unsat = 0
        self.indeterminate = 0
        self.solver_calls_during_exploration = 0
        self._solver_calls_at_start = SOLVER_STATS.calls
        self._seen_peer_files: set = set()
        self._seed_cost = 0

    def elapsed(self) -> float:
        return time.monotonic() - self._start

    def _assess(self, raws, mode: str, phase: str) -> list[bytes]:
        before = len(self.assessor.log)
        out = self.assessor.assess(raws, mode)
        for record in self.assessor.log[before:]:
            record.phase = phase
        return out

    def _publish(self, raws, from_maximization: bool = False):
        for raw in raws:
            if self.sync:
                self.sync.publish_input(raw)
            self.files_exported += 1
            if from_maximization:
                self.exports_from_maximization += 1
        if raws and self.sync:
            self.sync.write_highscore(self.score)

    def _import_phase(self):
        raws = []
        if self.sync:
            raws = self.sync.scan_new_inputs(self._seen_peer_files)
        self.inputs_imported += len(raws)
        maxed = self._assess(raws, IMPORT_MODE, "import")
        if maxed:
            screened = self._assess(maxed, EXPORT_MODE, "import_max")
            self._publish(screened, from_maximization=True)

    def _explore_once(self) -> bool:
        """One select/replay/explore/solve round. False when the trie
        has nothing left to offer."""
        node = self.trie.select_most_promising(self.config.heuristic)
        if node is None:
            return False
        before = SOLVER_STATS.calls
        try:
            pairs = explore_node(self.program, self.trie, node,
                                 depth_bound=self.config.bse_depth,
                                 budget=self.config.exec_budget)
        except DivergenceError:
            self.divergences += 1
            self.trie.close_node(node, "replay diverged")
            return True
        finally:
            self.solver_calls_during_exploration += SOLVER_STATS.calls - before
        if not pairs:
            self.trie.close_node(node, "no frontier")
            return True
        base = witness_for(node) or bytes(self.subject.seed_input)
        domain = Domain.from_layout(self.layout)
        kwargs = {}
        if self.config.solver_node_limit is not None:
            kwargs["node_limit"] = self.config.solver_node_limit
        for pc, frontier in pairs:
            outcome = solve(pc, domain, **kwargs)
            if outcome is UNSAT:
                self.unsat += 1
                if frontier is not None:
                    self.trie.close_node(frontier, "infeasible")
                continue
            if outcome is INDETERMINATE or not isinstance(outcome, Model):
                self.indeterminate += 1
                if frontier is not None:
                    self.trie.close_node(frontier, "solver budget")
                continue
            raw = materialize_input(outcome, self.layout, base)
            screened = self._assess([raw], EXPORT_MODE, "explore")
            self._publish(screened)
            if (frontier is not None and frontier.score is None
                    and not frontier.closed):
                # The solved input's real path never reached this
                # frontier: the shadow that planned it was stale.
                self.trie.close_node(frontier, "stale shadow")
        return True

    def _should_stop(self) -> bool:
        cap = self.config.symexe_iterations
        if cap is not None and self.iterations >= cap:
            return True
        if cap is None and self.elapsed() >= self.config.budget_seconds:
            return True
        if (self.config.stop_at_cost is not None
                and self.score.best_cost >= self.config.stop_at_cost):
            return True
        if self.sync and self.sync.stop_requested():
            return True
        return False

    def run(self) -> FuzzStats:
        self._start = time.monotonic()
        seed_raw = bytes(self.subject.seed_input)
        seed_res = execute(self.program, seed_raw, cost_model=self.cost_model,
                           budget=self.config.exec_budget)
        self._seed_cost = seed_res.cost
        maxed = self._assess([seed_raw], IMPORT_MODE, "boot")
        if maxed:
            screened = self._assess(maxed, EXPORT_MODE, "import_max")
            self._publish(screened, from_maximization=True)
        if self.sync:
            self.sync.write_highscore(self.score)
            self.sync.flush_stats(self.score.history)
        last_flush = time.monotonic()

        wait_for_peers = self.config.mode == "badger"
        while not self._should_stop():
            if self.iterations % self.config.import_interval == 0:
                self._import_phase()
            progressed = self._explore_once()
            if not progressed:
                if not wait_for_peers:
                    break
                # Trie exhausted for now; the fuzzer may still feed us.
                time.sleep(0.02)
            self.iterations += 1
            now = time.monotonic()
            if self.sync and now - last_flush >= 10.0:
                self.sync.flush_stats(self.score.history)
                last_flush = now

        if self.sync:
            self.sync.flush_stats(self.score.history)
            self.sync.write_highscore(self.score)
            if (self.config.stop_at_cost is not None
                    and self.score.best_cost >= self.config.stop_at_cost):
                self.sync.request_stop()
            self._write_summary()
            self._write_assess_log()
        return FuzzStats(history=self.score.history,
                         best_cost=self.score.best_cost,
                         best_input=self.score.best_input,
                         iterations=self.iterations,
                         execs=len(self.assessor.log),
                         admitted=self.files_exported,
                         imported=self.inputs_imported,
                         seed_cost=self._seed_cost)

    def summary(self) -> dict:
        errors = sum(1 for r in self.assessor.log if r.status == STATUS_ERROR)
        return {
            "iterations": self.iterations,
            "inputs_imported": self.inputs_imported,
            "files_exported": self.files_exported,
            "exports_from_maximization": self.exports_from_maximization,
            "divergences": self.divergences,
            "unsat": self.unsat,
            "indeterminate": self.indeterminate,
            "solver_calls_total": SOLVER_STATS.calls - self._solver_calls_at_start,
            "solver_calls_during_exploration": self.solver_calls_during_exploration,
            "trie_nodes": len(self.trie.nodes),
            "assess_errors": errors,
            "seed_cost": self._seed_cost,
            "best_cost": self.score.best_cost,
        }

    def _write_summary(self):
        data = json.dumps(self.summary(), indent=2) + "\n"
        self.sync._atomic_write(self.sync.home / "summary.json",
                                data.encode())

    def _write_assess_log(self):
        rows = ["seq,elapsed_s,phase,mode,status,cost,new_cov,new_high,"
                "exported,input_hex"]
        for i, r in enumerate(self.assessor.log):
            t = f"{r.elapsed:.3f}" if r.elapsed is not None else ""
            rows.append(f"{i},{t},{r.phase},{r.mode},{r.status},{r.cost},"
                        f"{int(r.new_cov)},{int(r.new_high)},"
                        f"{int(r.exported)},{r.input.hex()}")
        self.sync._atomic_write(self.sync.home / "assess_log.csv",
                                ("\n".join(rows) + "\n").encode())


def _subject_args(config: CampaignConfig) -> tuple:
    return (config.subject, config.n, config.value_range, config.rng_seed)


def _load_subject(args: tuple):
    name, n, value_range, seed = args
    return get_subject(name, n=n, value_range=value_range, seed=seed)


def _fuzzer_proc(subject_args, fuzz_kwargs, sync_root):
    subject = _load_subject(subject_args)
    fuzz_loop(subject, FuzzConfig(**fuzz_kwargs), sync_root=sync_root)


def _symexe_proc(subject_args, config_kwargs, sync_root):
    subject = _load_subject(subject_args)
    worker = SymExeWorker(subject, CampaignConfig(**config_kwargs),
                          sync_root=sync_root)
    worker.run()


def _fuzz_config(config: CampaignConfig, cost_model: str, mode: str,
                 instance_id: str) -> FuzzConfig:
    return FuzzConfig(cost_model=cost_model, mode=mode,
                      budget_seconds=config.budget_seconds,
                      rng_seed=config.rng_seed, instance_id=instance_id,
                      exec_budget=config.exec_budget,
                      max_iterations=config.fuzzer_iterations,
                      stop_at_cost=config.stop_at_cost)


def _run_badger(config: CampaignConfig, cost_model: str, sync_root: Path,
                exit_codes: dict):
    fuzz_cfg = _fuzz_config(config, cost_model, "kelinciwca", "fuzzer")
    procs = {
        "fuzzer": multiprocessing.Process(
            target=_fuzzer_proc,
            args=(_subject_args(config), asdict(fuzz_cfg), str(sync_root))),
        "symexe": multiprocessing.Process(
            target=_symexe_proc,
            args=(_subject_args(config), asdict(config), str(sync_root))),
    }
    for p in procs.values():
        p.start()
    deadline = time.monotonic() + config.budget_seconds + _GRACE_SECONDS
    while any(p.is_alive() for p in procs.values()):
        if time.monotonic() >= deadline:
            break
        for p in procs.values():
            p.join(timeout=0.2)
    if any(p.is_alive() for p in procs.values()):
        # Persuade first, terminate as the last resort.
        (sync_root / "STOP").write_bytes(b"stop\n")
        for p in procs.values():
            p.join(timeout=10.0)
        for p in procs.values():
            if p.is_alive():
                p.terminate()
                p.join()
    for name, p in procs.items():
        exit_codes[name] = p.exitcode


def _collect(sync_root: Path) -> tuple[dict, dict, int, bytes, dict]:
    histories, summaries = {}, {}
    best_cost, best_input = -1, b""
    for child in sorted(sync_root.iterdir()):
        if not child.is_dir():
            continue
        stats_file = child / "stats.csv"
        if stats_file.exists():
            histories[child.name] = read_stats_csv(stats_file)
        hs = child / "highscore"
        if hs.exists():
            cost = int(hs.read_text().strip())
            if cost > best_cost:
                best_cost = cost
                bi = child / "best_input"
                best_input = bi.read_bytes() if bi.exists() else b""
        summary_file = child / "summary.json"
        if summary_file.exists():
            summaries[child.name] = json.loads(summary_file.read_text())
    return histories, summaries, best_cost, best_input


def _write_outputs(sync_root: Path, stats: CampaignStats):
    lines = ["elapsed_s,best_cost"]
    lines += [f"{t:.3f},{c}" for t, c in stats.merged]
    (sync_root / "stats_merged.csv").write_text("\n".join(lines) + "\n")
    report = (
        f"subject: {stats.subject}\n"
        f"mode: {stats.mode}\n"
        f"cost_model: {stats.cost_model}\n"
        f"seed_cost: {stats.seed_cost}\n"
        f"best_cost: {stats.best_cost}\n"
        f"slowdown: {stats.slowdown:.3f}\n"
        f"best_input: 0x{stats.best_input.hex()}\n"
    )
    (sync_root / "report.txt").write_text(report)


def run_campaign(config: CampaignConfig) -> CampaignStats:
    """Run one campaign end to end and leave its artifacts in sync_dir.

    Returns the merged statistics; raises ValueError on an unknown
    mode or heuristic before any worker starts.
    """
    if config.mode not in MODES:
        raise ValueError(f"unknown mode {config.mode!r}")
    if config.heuristic not in (HEURISTIC_HIGHER, HEURISTIC_LOWER):
        raise ValueError(f"unknown heuristic {config.heuristic!r}")
    subject = _load_subject(_subject_args(config))
    cost_model = config.cost_model or subject.cost_model
    sync_root = Path(config.sync_dir)
    sync_root.mkdir(parents=True, exist_ok=True)

    seed_res = execute(subject.program, bytes(subject.seed_input),
                       cost_model=cost_model, budget=config.exec_budget)
    seed_cost = seed_res.cost

    exit_codes: dict = {}
    if config.mode in ("kelinci", "kelinciwca"):
        fuzz_cfg = _fuzz_config(config, cost_model, config.mode, "fuzzer")
        fuzz_loop(subject, fuzz_cfg, sync_root=str(sync_root))
        exit_codes["fuzzer"] = 0
    elif config.mode == "symexe":
        worker = SymExeWorker(subject, config, sync_root=str(sync_root))
        worker.run()
        exit_codes["symexe"] = 0
    else:
        _run_badger(config, cost_model, sync_root, exit_codes)

    histories, summaries, best_cost, best_input = _collect(sync_root)
    merged = merge_histories(histories.values())
    if best_cost < 0 and merged:
        best_cost = merged[-1][1]
    if seed_cost > 0:
        slowdown = best_cost / seed_cost
    else:
        slowdown = float("inf") if best_cost > 0 else 1.0
    stats = CampaignStats(
        subject=f"{config.subject} (n={subject.n})",
        mode=config.mode, cost_model=cost_model,
        seed_cost=seed_cost, best_cost=best_cost, best_input=best_input,
        slowdown=slowdown, histories=histories, merged=merged,
        summaries=summaries, sync_dir=str(sync_root),
        crashed=any(code not in (0, None) for code in exit_codes.values()),
        worker_exit=exit_codes)
    _write_outputs(sync_root, stats)
    return stats
