"""Trie-guided replay and bounded exploration.

Given a promising trie node, `replay_to_node` re-runs the program
symbolically along the node's recorded choice sequence, using the
node's witness input (or the nearest ancestor's) as the concrete
shadow. Choices are forced from the trie, not from the shadow, so the
replay can walk straight onto a frontier branch the witness never
took; from that point the shadow is stale but still steers purely
concrete control flow. No constraint is ever solved here, which is
the point: reaching the interesting frontier costs one cheap replay.

`bounded_explore` then forks the machine at each input-dependent
conditional it meets, taking both sides, until it has committed
`depth_bound` fresh decisions per path. Each finished path yields its
PathCondition; feasibility is someone else's job (the solver screens
them, and a real execution of any solved input settles the truth).

Divergence (the program no longer reaches the sites the trie
recorded, e.g. because the witness went stale) raises
DivergenceError; callers drop the task and close the node.
"""

from __future__ import annotations

from dataclasses import dataclass

from .concolic import AT_BRANCH, SymMachine
from .expressions import PathCondition
from .vm import DEFAULT_BUDGET, Program

DEFAULT_DEPTH_BOUND = 1


class DivergenceError(Exception):
    """Replay could not follow the trie path; the task is void."""


@dataclass(frozen=True)
class ExplorationTask:
    """One unit of symbolic work: walk to `target`, then look past it.

    `prefix_decisions` is the exact root-to-target (site, choice)
    sequence; `depth_bound` says how many fresh decisions to commit
    beyond the target before extracting path conditions.
    """

    target: object
    prefix_decisions: tuple
    depth_bound: int = DEFAULT_DEPTH_BOUND


def make_task(trie, node, depth_bound: int = DEFAULT_DEPTH_BOUND) -> ExplorationTask:
    """Build the task for a node chosen by select_most_promising."""
    if depth_bound < 1:
        raise ValueError("depth_bound must be >= 1")
    return ExplorationTask(
        target=node,
        prefix_decisions=tuple(trie.path_decisions(node)),
        depth_bound=depth_bound,
    )


def witness_for(node) -> bytes | None:
    """Nearest recorded input on the path from this node to the root."""
    while node is not None:
        if node.witness is not None:
            return node.witness
        node = node.parent
    return None


def replay_to_node(program: Program, task: ExplorationTask,
                   budget: int = DEFAULT_BUDGET) -> SymMachine:
    """Symbolically re-execute the trie path ending at task.target.

    Returns the machine paused immediately after the target's
    decision, with the prefix path condition accumulated and the
    target's already-known child choices attached for bounded_explore
    to skip. Zero solver calls by construction: the concrete shadow
    supplies every value a branch needs.
    """
    witness = witness_for(task.target)
    if witness is None:
        raise DivergenceError(
            f"node {task.target.id}: no witness input anywhere on its path")
    machine = SymMachine(program, witness, budget=budget)
    for site, choice in task.prefix_decisions:
        status = machine.run_to_branch()
        if status != AT_BRANCH:
            raise DivergenceError(
                f"node {task.target.id}: run ended ({status}) "
                f"before reaching {site}")
        if machine.site != site:
            raise DivergenceError(
                f"node {task.target.id}: expected decision at {site}, "
                f"program paused at {machine.site}")
        machine.take_branch(choice)
    return machine


def bounded_explore(state: SymMachine, depth_bound: int,
                    skip_first_choices=frozenset()) -> list[PathCondition]:
    """Fork past the replayed node and collect frontier conditions.

    The first fresh decision skips `skip_first_choices` (the target's
    existing trie children); deeper decisions take both sides. A path
    contributes its PathCondition once it has `depth_bound` fresh
    decisions, or earlier if the program ends first with at least one.
    """
    if depth_bound < 1:
        raise ValueError("depth_bound must be >= 1")
    results = []
    worklist = [(state, 0)]
    while worklist:
        machine, depth = worklist.pop()
        status = machine.run_to_branch()
        if status != AT_BRANCH:
            # Ran out of path before the bound. Timeouts and faults
            # land here too; with at least one fresh decision the
            # condition is still a usable frontier.
            if depth > 0:
                machine.pc.status = status
                results.append(machine.pc)
            continue
        choices = (0, 1)
        if depth == 0 and skip_first_choices:
            choices = tuple(c for c in choices if c not in skip_first_choices)
        for choice in choices:
            fork = machine.fork()
            fork.take_branch(choice)
            if depth + 1 >= depth_bound:
                results.append(fork.pc)
            else:
                worklist.append((fork, depth + 1))
    return results


def explore_node(program: Program, trie, node,
                 depth_bound: int = DEFAULT_DEPTH_BOUND,
                 budget: int = DEFAULT_BUDGET) -> list[tuple]:
    """Replay to a node and return its frontier path conditions.

    Convenience wrapper tying replay_to_node and bounded_explore to a
    live trie: the first fresh decision site gets frontier placeholder
    nodes so selection can target those paths directly later. Returns
    (path condition, placeholder node) pairs; the placeholder lets the
    caller close a frontier whose condition turns out unsatisfiable.
    """
    task = make_task(trie, node, depth_bound)
    machine = replay_to_node(program, task, budget=budget)
    known = frozenset(node.children)
    conditions = bounded_explore(machine, depth_bound,
                                 skip_first_choices=known)
    prefix_len = len(task.prefix_decisions)
    out = []
    for pc in conditions:
        placeholder = None
        if len(pc.decisions) > prefix_len:
            site, choice = pc.decisions[prefix_len]
            placeholder = trie.add_frontier(node, site, choice)
        out.append((pc, placeholder))
    return out
