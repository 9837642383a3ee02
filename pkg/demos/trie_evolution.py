"""How the decision trie grows: import, select, explore, export.

Walks the three-element sorting example step by step and dumps the
trie after each stage, showing score propagation from leaves to root
as the mean over children. Instant.
"""

from wcfuzz.concolic import Assessor, EXPORT_MODE, IMPORT_MODE, materialize_input
from wcfuzz.explorer import explore_node
from wcfuzz.fuzzer import Highscore
from wcfuzz.solver import Domain, solve
from wcfuzz.subjects import get_subject
from wcfuzz.trie import HEURISTIC_LOWER, Trie
from wcfuzz.vm import execute


def main():
    subject = get_subject("insertion_sort", n=3)
    program = subject.program
    layout = program.input_layout
    seed = bytes(subject.seed_input)

    print(f"seed decodes to {layout.decode(seed)} (already sorted)")
    print(f"seed cost: {execute(program, seed).cost} jumps")

    trie, score = Trie(), Highscore()
    assessor = Assessor(program, subject.cost_model, trie, score)

    print("\n--- stage 1: import the seed path ---")
    assessor.assess([seed], IMPORT_MODE)
    print(trie.dump())
    print("one chain, two comparisons, every score equals the one known cost")

    print("\n--- stage 2: pick a node and explore one decision deeper ---")
    node = trie.select_most_promising(HEURISTIC_LOWER)
    print(f"selected {node!r}")
    pairs = explore_node(program, trie, node, depth_bound=1)
    pc, _ = pairs[0]
    print(f"frontier condition: {pc.conjuncts}")
    print(trie.dump())
    print("the unexplored side now has a placeholder with unknown score")

    print("\n--- stage 3: solve, materialize, assess for export ---")
    model = solve(pc, Domain.from_layout(layout))
    print(f"solver model: {model.assignment}")
    raw = materialize_input(model, layout, seed)
    print(f"new input decodes to {layout.decode(raw)}")
    assessor.assess([raw], EXPORT_MODE)
    print(trie.dump())
    print("the new leaf cost flowed upward: the shared parent is now the")
    print("mean of its children, and the root follows the parent")


if __name__ == "__main__":
    main()
