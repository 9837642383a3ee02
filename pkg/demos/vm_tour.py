"""A guided tour of the VM: assembling, running, and reading costs.

Assembles a small gas-metered program from source, runs it under each
cost model, then replays a shipped subject and shows where the jump
count and the coverage bitmap come from. Runs in well under a second.
"""

from wcfuzz.subjects import get_subject
from wcfuzz.vm import BITMAP_SIZE, execute, load_program

TOY = """\
.name toy_meter
.input count=3 width=8 signed=1 min=-50 max=50
        push 0
        store i
loop:
        load i
        pushn
        brge done
        push 7
        add_cost            # flat fee per item
        load i
        aload
        push 0
        brlt negative
        load i
        aload
        add_cost            # positive values charge their own value
negative:
        load i
        push 1
        add
        store i
        jump loop
done:
        push 42
        observe
        halt
"""


def banner(text):
    print()
    print("=" * 60)
    print(text)
    print("=" * 60)


def main():
    banner("1. A toy program, three cost models")
    program = load_program(TOY)
    raw = program.input_layout.encode([10, -3, 25])
    for model in ("jumps", "peak_alloc", "user_defined"):
        res = execute(program, raw, cost_model=model)
        print(f"  cost_model={model:<12} status={res.status:<8} cost={res.cost}")
    res = execute(program, raw, cost_model="user_defined")
    print(f"  decoded input: {res.decoded_input}")
    print(f"  observations:  {res.observations}  (the literal pushed at the end)")
    print("  user cost = 3 items * 7 flat + (10 + 25) charged for positives")

    banner("2. Jump counting on a real subject")
    subject = get_subject("insertion_sort", n=6)
    layout = subject.program.input_layout
    sorted_in = layout.encode([1, 2, 3, 4, 5, 6])
    reversed_in = layout.encode([6, 5, 4, 3, 2, 1])
    a = execute(subject.program, sorted_in)
    b = execute(subject.program, reversed_in)
    print(f"  sorted input cost:   {a.cost} jumps")
    print(f"  reversed input cost: {b.cost} jumps")
    print(f"  slowdown: {b.cost / a.cost:.2f}x from input shape alone")

    banner("3. The coverage bitmap")
    cells = b.bitmap.cells
    hot = sorted(((v, i) for i, v in enumerate(cells) if v), reverse=True)
    print(f"  {BITMAP_SIZE} cells, {len(hot)} touched")
    print(f"  every jump increments one cell: sum={sum(cells)} == jumps={b.jumps}")
    print("  hottest cells (count, index):", hot[:5])

    banner("4. Observations as a side channel")
    table = get_subject("hash_table", n=8)
    same = bytes([7]) * 64
    res = execute(table.program, same)
    print(f"  8 identical keys -> {res.observations[0]} collisions "
          f"(cap is keys-1 = 7)")


if __name__ == "__main__":
    main()
