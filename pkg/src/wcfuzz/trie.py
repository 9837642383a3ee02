"""Decision trie over symbolic branch outcomes.

Each node below the root records one decision: at `site` (the source
line of a conditional branch whose operands carried symbols) the
execution took `choice` (1 = taken, 0 = fall-through). A path from the
root is therefore the symbolic skeleton of one concrete run.

Scores summarize how expensive the subtree looked so far, as exact
rationals: a leaf scores its trace cost, an inner node the arithmetic
mean of its children's known scores. Unknown scores (frontier nodes
created by exploration but never executed) rank as +infinity during
selection: an unassessed frontier is maximally interesting.

`unexplored_choices` of a node are the choices at its *successor*
decision point that no execution or exploration has taken yet. A fresh
frontier node, whose successors are entirely unknown, reports both.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

logger = logging.getLogger(__name__)

BRANCH_CHOICES = (0, 1)

HEURISTIC_HIGHER = "higher"
HEURISTIC_LOWER = "lower"


@dataclass
class TrieStats:
    ops: int = 0

    def reset(self):
        self.ops = 0


STATS = TrieStats()


class TrieNode:
    __slots__ = ("id", "site", "choice", "parent", "depth", "children",
                 "score", "is_leaf", "leaf_cost", "closed", "witness")

    def __init__(self, node_id, site, choice, parent):
        self.id = node_id
        self.site = site            # "ROOT" for the root
        self.choice = choice        # None for the root
        self.parent = parent
        self.depth = 0 if parent is None else parent.depth + 1
        self.children = {}          # choice -> TrieNode
        self.score = None           # Fraction, or None = unknown
        self.is_leaf = False        # some trace ended at this decision
        self.leaf_cost = None       # Fraction cost of that trace (max kept)
        self.closed = False         # divergence / UNSAT / exhausted guard
        self.witness = None         # bytes of the last input through here

    @property
    def unexplored_choices(self) -> frozenset:
        if self.closed:
            return frozenset()
        if self.children:
            return frozenset(c for c in BRANCH_CHOICES if c not in self.children)
        if self.is_leaf:
            return frozenset()
        if self.parent is None:
            # a root nobody has executed through yet
            return frozenset()
        return frozenset(BRANCH_CHOICES)

    def successor_site(self):
        for child in self.children.values():
            return child.site
        return None

    def __repr__(self):
        tag = "ROOT" if self.parent is None else f"site={self.site} choice={self.choice}"
        sc = "?" if self.score is None else str(self.score)
        return f"<TrieNode id={self.id} {tag} score={sc}>"


class Trie:
    def __init__(self):
        self.root = TrieNode(0, "ROOT", None, None)
        self.nodes = {0: self.root}
        self.coverage_index = {}    # (site, choice) -> first-seen node id
        self._candidates = set()    # node ids with unexplored choices

    @property
    def node_count(self):
        return len(self.nodes)

    def _new_node(self, site, choice, parent):
        node = TrieNode(len(self.nodes), site, choice, parent)
        self.nodes[node.id] = node
        parent.children[choice] = node
        return node

    def _refresh_candidate(self, node):
        if node.unexplored_choices:
            self._candidates.add(node.id)
        else:
            self._candidates.discard(node.id)

    def _recompute_score(self, node):
        known = [c.score for c in node.children.values() if c.score is not None]
        if known:
            node.score = Fraction(sum(known), len(known))
        elif node.is_leaf:
            node.score = node.leaf_cost
        elif not node.children:
            node.score = None

    def insert_path(self, decisions, leaf_cost, witness=None) -> TrieNode:
        """Record one executed path: its decisions and final trace cost.

        Shared prefixes reuse existing nodes. Re-inserting a known leaf
        with a different cost keeps the maximum and logs the conflict
        (nondeterminism or concretization divergence guard).
        """
        STATS.ops += 1
        node = self.root
        node.closed = False
        if witness is not None:
            node.witness = witness
        for site, choice in decisions:
            child = node.children.get(choice)
            if child is None:
                child = self._new_node(site, choice, node)
            elif child.site != site:
                logger.warning(
                    "trie: decision at %s reuses child recorded at %s "
                    "(divergent control flow kept as-is)", site, child.site)
            self.coverage_index.setdefault((site, choice), child.id)
            child.closed = False
            if witness is not None:
                child.witness = witness
            self._refresh_candidate(node)
            node = child
        cost = Fraction(leaf_cost)
        if node.leaf_cost is not None and node.leaf_cost != cost:
            # Same decisions, different cost: normal when the cost
            # depends on field values that never steer a branch.
            logger.debug("trie: leaf %d cost %s differs from %s, keeping max",
                         node.id, cost, node.leaf_cost)
            cost = max(cost, node.leaf_cost)
        node.is_leaf = True
        node.leaf_cost = cost
        self._refresh_candidate(node)
        cur = node
        while cur is not None:
            self._recompute_score(cur)
            cur = cur.parent
        leaf = node
        return leaf

    def add_frontier(self, parent: TrieNode, site: str, choice: int) -> TrieNode:
        """Materialize an exploration target: a decision bounded symbolic
        execution plans to take but no run has executed. Score unknown."""
        STATS.ops += 1
        existing = parent.children.get(choice)
        if existing is not None:
            return existing
        node = self._new_node(site, choice, parent)
        self._refresh_candidate(parent)
        self._refresh_candidate(node)
        return node

    def close_node(self, node: TrieNode, reason: str = ""):
        """Take a node out of selection for good (infeasible frontier,
        divergent replay, or no successor branches found)."""
        STATS.ops += 1
        node.closed = True
        if reason:
            logger.debug("trie: closing node %d (%s)", node.id, reason)
        self._refresh_candidate(node)

    def _would_reach_new_coverage(self, node) -> bool:
        succ = node.successor_site()
        if succ is None:
            return True  # successors unknown, potentially new
        for choice in node.unexplored_choices:
            if (succ, choice) not in self.coverage_index:
                return True
        return False

    def select_most_promising(self, heuristic: str = HEURISTIC_LOWER):
        """Pick the next exploration target, or None if fully explored.

        Total order: potential new coverage first, then score descending
        with unknown as +infinity, then depth (the `lower` heuristic
        prefers deeper nodes, `higher` shallower), then node id.
        """
        STATS.ops += 1
        if heuristic not in (HEURISTIC_HIGHER, HEURISTIC_LOWER):
            raise ValueError(f"unknown position heuristic '{heuristic}'")
        best = None
        best_key = None
        for node_id in self._candidates:
            node = self.nodes[node_id]
            cov = 0 if self._would_reach_new_coverage(node) else 1
            if node.score is None:
                score_key = (0, Fraction(0))
            else:
                score_key = (1, -node.score)
            depth_key = -node.depth if heuristic == HEURISTIC_LOWER else node.depth
            key = (cov, score_key, depth_key, node.id)
            if best_key is None or key < best_key:
                best_key = key
                best = node
        return best

    def path_decisions(self, node: TrieNode):
        """Decisions from the root down to (and including) this node."""
        path = []
        cur = node
        while cur.parent is not None:
            path.append((cur.site, cur.choice))
            cur = cur.parent
        path.reverse()
        return path

    def iter_nodes(self):
        return iter(self.nodes.values())

    def dump(self) -> str:
        """Deterministic text rendering, used by the golden tests."""
        lines = []

        def walk(node, indent):
            sc = "?" if node.score is None else str(node.score)
            bits = []
            if node.parent is None:
                bits.append("ROOT")
            else:
                bits.append(f"site={node.site}")
                bits.append(f"choice={node.choice}")
            bits.append(f"score={sc}")
            if node.is_leaf:
                bits.append("leaf")
            if node.closed:
                bits.append("closed")
            un = node.unexplored_choices
            if un:
                bits.append("unexplored={%s}" % ",".join(str(c) for c in sorted(un)))
            lines.append("  " * indent + f"[id={node.id} " + " ".join(bits) + "]")
            for choice in sorted(node.children):
                walk(node.children[choice], indent + 1)

        walk(self.root, 0)
        return "\n".join(lines)

    def to_dot(self) -> str:
        out = ["digraph trie {", '  node [shape=box, fontname="monospace"];']
        for node in self.nodes.values():
            sc = "?" if node.score is None else str(node.score)
            if node.parent is None:
                label = f"id=0 ROOT\\nscore={sc}"
            else:
                label = f"id={node.id} {node.site}\\nscore={sc}"
            style = ' style=filled fillcolor="#dddddd"' if node.is_leaf else ""
            out.append(f'  n{node.id} [label="{label}"{style}];')
        for node in self.nodes.values():
            for choice, child in sorted(node.children.items()):
                out.append(f'  n{node.id} -> n{child.id} [label="{choice}"];')
        out.append("}")
        return "\n".join(out)


def insert_path(trie: Trie, decisions, leaf_cost, witness=None) -> TrieNode:
    return trie.insert_path(decisions, leaf_cost, witness)


def select_most_promising(trie: Trie, heuristic: str = HEURISTIC_LOWER):
    return trie.select_most_promising(heuristic)
