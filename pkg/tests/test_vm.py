"""VM core: input layout, parser, bitmap semantics, execution."""

import pytest
from hypothesis import given, settings, strategies as st

from wcfuzz.vm import (
    BITMAP_SIZE,
    Bitmap,
    EncodingError,
    ExecutionResult,
    InputLayout,
    ParseError,
    STATUS_ERROR,
    STATUS_OK,
    STATUS_TIMEOUT,
    bitmap_index,
    coverage_keys,
    execute,
    hit_bucket,
    load_program,
)

# 2 input words, 4 scratch words for tiny hand-written programs
_HEADER = ".input count=2\n.mem 4\n"


def prog(body: str, seed: int = 0):
    return load_program(_HEADER + body, seed=seed)


class TestInputLayout:
    def test_modulo_fold_into_range(self):
        layout = InputLayout(count=3, lo=0, hi=9)
        assert layout.decode(bytes([0, 10, 23])) == [0, 0, 3]

    def test_signed_fold(self):
        layout = InputLayout(count=1, signed=True, lo=-8, hi=8)
        # -120 folds into [-8, 8]: span 17, (-120 + 8) % 17 = 7 -> -1
        assert layout.decode((-120).to_bytes(1, "little", signed=True)) == [-1]

    def test_too_short_raises(self):
        with pytest.raises(ValueError, match="too short"):
            InputLayout(count=4).decode(b"abc")

    def test_excess_bytes_ignored(self):
        layout = InputLayout(count=2)
        assert layout.decode(b"ab" + b"junk") == [97, 98]

    def test_encode_rejects_out_of_range(self):
        layout = InputLayout(count=1, lo=0, hi=9)
        with pytest.raises(EncodingError, match="outside range"):
            layout.encode([10])

    def test_encode_rejects_wrong_arity(self):
        with pytest.raises(EncodingError):
            InputLayout(count=2).encode([1])

    @given(st.lists(st.integers(min_value=-100, max_value=100),
                    min_size=4, max_size=4))
    def test_encode_decode_round_trip(self, values):
        layout = InputLayout(count=4, signed=True, lo=-100, hi=100)
        assert layout.decode(layout.encode(values)) == values

    @given(st.binary(min_size=6, max_size=12))
    def test_decode_always_in_range(self, raw):
        layout = InputLayout(count=3, width=16, lo=5, hi=300)
        assert all(5 <= v <= 300 for v in layout.decode(raw))


class TestParser:
    def test_comments_and_labels(self):
        p = prog("start:\n  push 1  # comment\n  pop ; other comment\nhalt\n")
        assert [i.op for i in p.code]  # parsed something
        assert "start" in p.block_ids

    def test_unknown_instruction(self):
        with pytest.raises(ParseError, match="unknown instruction 'frob'"):
            prog("frob\n")

    def test_duplicate_label(self):
        with pytest.raises(ParseError, match="duplicate label"):
            prog("a:\nhalt\na:\nhalt\n")

    def test_undefined_jump_target(self):
        with pytest.raises(ParseError, match="undefined label 'nowhere'"):
            prog("jump nowhere\n")

    def test_missing_input_directive(self):
        with pytest.raises(ParseError, match="missing .input"):
            load_program("halt\n")

    def test_input_needs_count(self):
        with pytest.raises(ParseError, match="needs count"):
            load_program(".input width=8\nhalt\n")

    def test_data_larger_than_mem(self):
        with pytest.raises(ParseError, match=".data has 3"):
            load_program(".input count=1\n.mem 2\n.data 1,2,3\nhalt\n")

    def test_trailing_label_gets_virtual_halt(self):
        p = prog("jump end\nend:\n")
        res = execute(p, b"ab")
        assert res.status == STATUS_OK

    def test_block_ids_deterministic_per_seed(self):
        src = _HEADER + "a:\npush 1\npop\nb:\nhalt\n"
        one = load_program(src, seed=7)
        two = load_program(src, seed=7)
        other = load_program(src, seed=8)
        assert one.block_ids == two.block_ids
        assert one.block_ids != other.block_ids

    def test_branch_sites_reports_conditionals(self):
        p = prog("loop:\npush 1\npush 2\nbrlt loop\nhalt\n")
        # header takes lines 1-2, brlt sits on line 6
        assert p.branch_sites() == ["L6"]


class TestBitmapSemantics:
    def test_index_is_xor(self):
        assert bitmap_index(0x0003, 0x0001) == 0x0002

    def test_self_loop_nonzero(self):
        # A block jumping to itself: prev holds its shifted id.
        assert bitmap_index(6, 6 >> 1) == 5

    def test_direction_asymmetry(self):
        a, b = 8, 2
        assert bitmap_index(b, a >> 1) == 6
        assert bitmap_index(a, b >> 1) == 9
        assert bitmap_index(b, a >> 1) != bitmap_index(a, b >> 1)

    def test_shift_property_all_nonzero_ids(self):
        # the top set bit of b survives XOR with b >> 1
        assert all(bitmap_index(b, b >> 1) != 0 for b in range(1, BITMAP_SIZE))

    def test_size_is_64k(self):
        assert BITMAP_SIZE == 65536
        assert len(Bitmap().cells) == 65536

    @pytest.mark.parametrize("count,bucket", [
        (1, 0), (2, 1), (3, 2), (4, 3), (7, 3), (8, 4), (15, 4),
        (16, 5), (31, 5), (32, 6), (127, 6), (128, 7), (255, 7),
    ])
    def test_hit_bucket_boundaries(self, count, bucket):
        assert hit_bucket(count) == bucket

    def test_counter_saturates(self):
        bm = Bitmap()
        for _ in range(300):
            bm.update(0)  # always hits the same cell with prev shifting to 0
        assert max(bm.cells) == 255

    @given(st.lists(st.integers(min_value=0, max_value=BITMAP_SIZE - 1),
                    min_size=1, max_size=50))
    def test_coverage_keys_match_naive(self, ids):
        bm = Bitmap()
        for bid in ids:
            bm.update(bid)
        naive = {(i, hit_bucket(c)) for i, c in enumerate(bm.cells) if c}
        assert coverage_keys(bm) == frozenset(naive)


class TestExecute:
    def test_arithmetic_and_observe(self):
        p = prog("push 7\npush 3\nsub\npush 2\nmul\nobserve\nhalt\n")
        res = execute(p, b"ab")
        assert res.status == STATUS_OK
        assert res.observations == [8]

    def test_branch_taken_vs_not(self):
        body = "push 1\npush 2\nbrlt yes\npush 0\nobserve\nhalt\nyes:\npush 1\nobserve\nhalt\n"
        res = execute(prog(body), b"ab")
        assert res.observations == [1]

    def test_division_by_zero_faults(self):
        p = prog("push 1\npush 0\ndiv\nhalt\n")
        res = execute(p, b"ab")
        assert res.status == STATUS_ERROR
        assert "division by zero at L" in res.error

    def test_stack_underflow_faults(self):
        res = execute(prog("pop\n"), b"ab")
        assert res.status == STATUS_ERROR
        assert "stack underflow" in res.error

    def test_memory_bounds_fault(self):
        res = execute(prog("push 99\naload\nhalt\n"), b"ab")
        assert res.status == STATUS_ERROR
        assert "aload out of bounds" in res.error

    def test_timeout_on_budget(self):
        res = execute(prog("spin:\njump spin\n"), b"ab", budget=100)
        assert res.status == STATUS_TIMEOUT
        assert res.instr_count == 101

    def test_peak_alloc_high_water_mark(self):
        body = "push 5\nalloc\npush 3\nalloc\npush 6\nfree\npush 2\nalloc\nhalt\n"
        res = execute(prog(body), b"ab", cost_model="peak_alloc")
        assert res.cost == 8          # 5+3 before the free
        assert res.peak_alloc == 8

    def test_free_clamps_at_zero(self):
        body = "push 2\nalloc\npush 99\nfree\npush 4\nalloc\nhalt\n"
        res = execute(prog(body), b"ab", cost_model="peak_alloc")
        assert res.cost == 4

    def test_alloc_negative_faults(self):
        res = execute(prog("push -1\nalloc\nhalt\n"), b"ab")
        assert res.status == STATUS_ERROR

    def test_user_cost_accumulates(self):
        body = "push 10\nadd_cost\npush 4\nadd_cost\nhalt\n"
        res = execute(prog(body), b"ab", cost_model="user_defined")
        assert res.cost == 14
        assert res.user_cost == 14

    def test_user_cost_floor_keeps_raw_sum(self):
        body = "push -5\nadd_cost\nhalt\n"
        res = execute(prog(body), b"ab", cost_model="user_defined")
        assert res.cost == 0
        assert res.user_cost == -5

    def test_unknown_cost_model_rejected(self):
        with pytest.raises(ValueError, match="cost model"):
            execute(prog("halt\n"), b"ab", cost_model="wall_clock")

    def test_pushn_pushes_field_count(self):
        res = execute(prog("pushn\nobserve\nhalt\n"), b"ab")
        assert res.observations == [2]

    def test_input_reaches_memory(self):
        body = "push 0\naload\nobserve\npush 1\naload\nobserve\nhalt\n"
        res = execute(prog(body), bytes([17, 42]))
        assert res.observations == [17, 42]

    def test_determinism_bit_for_bit(self, insertion8):
        raw = bytes(range(8))
        one = execute(insertion8.program, raw)
        two = execute(insertion8.program, raw)
        assert one.to_bytes(include_bitmap=True) == two.to_bytes(include_bitmap=True)

    def test_jump_cost_counts_block_transitions(self):
        # entry -> loop(3x) -> out: entry event skipped, so 3 loop
        # entries plus the exit entry are the 4 recorded jumps
        body = ("push 3\nstore i\n"
                "loop:\nload i\npush 1\nsub\nstore i\nload i\npush 0\n"
                "brgt loop\nout:\nhalt\n")
        res = execute(prog(body), b"ab", cost_model="jumps")
        assert res.cost == res.jumps == 4

    def test_record_trace_lists_decisions(self):
        body = "push 1\npush 2\nbrlt yes\nhalt\nyes:\nhalt\n"
        res = execute(prog(body), b"ab", record_trace=True)
        assert res.branch_trace == [("L5", 1)]


# hypothesis and function fixtures do not mix; property tests below
# share one module-level subject instead
from wcfuzz.subjects import get_subject

_INS8 = get_subject("insertion_sort", n=8)


@given(st.binary(min_size=8, max_size=8))
@settings(max_examples=60)
def test_bitmap_conservation_random_inputs(raw):
    res = execute(_INS8.program, raw)
    assert res.status == STATUS_OK
    total = sum(res.bitmap.cells)
    if max(res.bitmap.cells) < 255:
        assert total == res.jumps
    else:
        assert total <= res.jumps


@given(st.binary(min_size=8, max_size=8))
@settings(max_examples=40)
def test_execution_result_round_trip(raw):
    res = execute(_INS8.program, raw)
    back = ExecutionResult.from_bytes(res.to_bytes(include_bitmap=True))
    assert back.status == res.status
    assert back.cost == res.cost
    assert back.decoded_input == res.decoded_input
    assert back.observations == res.observations
    assert bytes(back.bitmap.cells) == bytes(res.bitmap.cells)
    assert back.final_mem is None


def test_round_trip_rejects_garbage():
    with pytest.raises(ValueError, match="not a serialized"):
        ExecutionResult.from_bytes(b"XXXX" + bytes(40))
