"""Shipped subjects and their independent oracles.

Each oracle is computed here from first principles (brute force,
closed form, or the stdlib), never copied from the implementation.
"""

import itertools
import re

import pytest
from hypothesis import given, settings, strategies as st

from wcfuzz.subjects import (
    SEED_TEXT,
    SubjectError,
    get_subject,
    list_subjects,
    parse_flat_toml,
    seed_input_for,
    subject_names,
    worst_cost,
    worst_input,
)
from wcfuzz.vm import STATUS_OK, execute


class TestManifestParsing:
    def test_flat_toml_values(self):
        text = '# comment\nname = "x"\nn = 8\nflag = true\noff = false\n'
        assert parse_flat_toml(text) == {
            "name": "x", "n": 8, "flag": True, "off": False}

    def test_flat_toml_rejects_bad_line(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_flat_toml('a = 1\nnot a key value\n')

    def test_flat_toml_rejects_unquoted_string(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_flat_toml("a = bare\n")


class TestCatalog:
    def test_names_sorted_and_complete(self):
        names = subject_names()
        assert names == sorted(names)
        assert set(names) == {"abs_sum", "gas_contract", "hash_table",
                              "insertion_sort", "quicksort", "regex_toy"}

    def test_all_seeds_execute_ok(self):
        for spec in list_subjects():
            res = execute(spec.program, spec.seed_input,
                          cost_model=spec.cost_model)
            assert res.status == STATUS_OK, spec.name

    def test_seed_input_cycles_hello_world(self):
        layout = get_subject("insertion_sort", n=14).layout
        raw = seed_input_for(layout)
        assert raw == SEED_TEXT + SEED_TEXT[:3]
        assert len(raw) == layout.byte_len

    def test_unknown_subject(self):
        with pytest.raises(SubjectError, match="unknown subject"):
            get_subject("bogus")

    def test_n_must_be_positive(self):
        with pytest.raises(SubjectError, match="n must be"):
            get_subject("insertion_sort", n=0)

    def test_n_capped_by_table_size(self):
        with pytest.raises(SubjectError, match="exceeds max_n=64"):
            get_subject("hash_table", n=65)

    def test_value_range_validated(self):
        with pytest.raises(SubjectError):
            get_subject("gas_contract", value_range=(5, -5))

    def test_n_patch_changes_layout(self):
        assert get_subject("insertion_sort", n=5).layout.count == 5
        assert get_subject("hash_table", n=16).layout.byte_len == 128

    def test_value_range_patch_changes_layout(self):
        spec = get_subject("gas_contract", n=5, value_range=(-8, 8))
        assert (spec.layout.lo, spec.layout.hi) == (-8, 8)


class TestInsertionSortOracle:
    def test_worst_input_is_strictly_decreasing(self):
        spec = get_subject("insertion_sort", n=6)
        values = spec.layout.decode(worst_input(spec))
        assert all(values[i] > values[i + 1] for i in range(5))

    def test_brute_force_confirms_decreasing_worst(self):
        # n=4 over a tiny domain: exhaustive search must agree with
        # the closed-form worst input
        spec = get_subject("insertion_sort", n=4, value_range=(0, 7))
        best_cost, best = -1, None
        for values in itertools.product(range(8), repeat=4):
            res = execute(spec.program, spec.layout.encode(list(values)))
            assert res.status == STATUS_OK
            if res.cost > best_cost:
                best_cost, best = res.cost, list(values)
        oracle_cost = execute(spec.program, worst_input(spec)).cost
        assert best_cost == oracle_cost
        assert best == sorted(best, reverse=True)

    def test_sorting_is_actually_correct(self):
        spec = get_subject("insertion_sort", n=8)
        raw = bytes([200, 3, 7, 150, 3, 99, 0, 255])
        res = execute(spec.program, raw)
        assert res.final_mem[:8] == sorted(res.decoded_input)

    def test_sorted_input_is_cheapest(self):
        spec = get_subject("insertion_sort", n=8)
        sorted_cost = execute(spec.program, bytes(range(8))).cost
        bumped = execute(spec.program, bytes([1, 0] + list(range(2, 8)))).cost
        assert bumped > sorted_cost


class TestQuicksortOracle:
    def test_sorts_correctly(self):
        spec = get_subject("quicksort", n=8)
        raw = bytes([9, 1, 250, 4, 4, 77, 0, 31])
        res = execute(spec.program, raw)
        assert res.status == STATUS_OK
        assert res.final_mem[:8] == sorted(res.decoded_input)

    def test_all_equal_keys_are_the_brute_force_worst(self):
        # Hoare partitioning stops both scans at every element when all
        # keys are equal, so every level swaps maximally.
        spec = get_subject("quicksort", n=4, value_range=(0, 5))
        costs = {
            v: execute(spec.program, spec.layout.encode(list(v))).cost
            for v in itertools.product(range(6), repeat=4)}
        worst = max(costs, key=costs.get)
        assert len(set(worst)) == 1
        assert costs[worst] > costs[(0, 1, 2, 3)]

    def test_equal_keys_beat_shuffles_at_n8(self):
        spec = get_subject("quicksort", n=8)
        equal = execute(spec.program, bytes([5] * 8)).cost
        shuffled = execute(spec.program, bytes([3, 6, 1, 7, 0, 5, 2, 4])).cost
        assert equal > shuffled


class TestHashTableOracle:
    def test_collision_bound_adversarial(self):
        spec = get_subject("hash_table", n=16)
        raw = bytes(range(128))  # sequential keys: all in one bucket
        res = execute(spec.program, raw)
        assert res.status == STATUS_OK
        assert res.observations[0] == 15   # 16 keys, keys-1 collisions

    def test_collision_bound_full_table(self):
        spec = get_subject("hash_table")   # 64 keys
        res = execute(spec.program, bytes(range(256)) * 2)
        assert res.observations[0] <= 63

    @given(st.binary(min_size=128, max_size=128))
    @settings(max_examples=50, deadline=None)
    def test_collision_bound_random(self, raw):
        spec = get_subject("hash_table", n=16)
        res = execute(spec.program, raw)
        assert res.status == STATUS_OK
        assert 0 <= res.observations[0] <= 15

    def test_distinct_colliders_cost_more_than_duplicates(self):
        spec = get_subject("hash_table", n=16)
        distinct = execute(spec.program, bytes(range(128))).cost
        dup = execute(spec.program, bytes(range(8)) * 16).cost
        assert distinct > dup


class TestRegexToyOracle:
    PATTERN = re.compile(r"\Aa*a*a*x\Z")

    def matcher_agrees(self, text: bytes) -> bool:
        spec = get_subject("regex_toy")
        res = execute(spec.program, text, cost_model="peak_alloc")
        assert res.status == STATUS_OK
        got = bool(res.observations[-1])
        want = self.PATTERN.match(text.decode("latin1")) is not None
        return got == want

    def test_known_match(self):
        assert self.matcher_agrees(b"aaaaaaaaaaax")

    def test_known_mismatch(self):
        assert self.matcher_agrees(b"aaaaaaaaaaaa")

    @given(st.binary(min_size=12, max_size=12))
    @settings(max_examples=80, deadline=None)
    def test_agrees_with_stdlib(self, raw):
        assert self.matcher_agrees(raw)

    @given(st.text(alphabet="ax", min_size=12, max_size=12))
    @settings(max_examples=60, deadline=None)
    def test_agrees_on_adversarial_alphabet(self, text):
        assert self.matcher_agrees(text.encode())

    def test_backtracking_blows_up_allocation(self):
        spec = get_subject("regex_toy")
        calm = execute(spec.program, seed_input_for(spec.layout),
                       cost_model="peak_alloc").cost
        angry = execute(spec.program, b"a" * 12, cost_model="peak_alloc").cost
        assert angry > 5 * calm


class TestGasOracle:
    def test_closed_form_matches_execution(self):
        spec = get_subject("gas_contract", n=5, value_range=(-8, 8))
        res = execute(spec.program, worst_input(spec),
                      cost_model="user_defined")
        assert res.cost == worst_cost(spec) == 5 * (21 + 8)

    def test_brute_force_confirms_worst(self):
        spec = get_subject("gas_contract", n=3, value_range=(-4, 4))
        best = max(
            execute(spec.program, spec.layout.encode(list(v)),
                    cost_model="user_defined").cost
            for v in itertools.product(range(-4, 5), repeat=3))
        assert best == worst_cost(spec) == 3 * (21 + 4)

    @given(st.lists(st.integers(min_value=-8, max_value=8),
                    min_size=5, max_size=5))
    @settings(max_examples=60, deadline=None)
    def test_formula_exact_per_input(self, values):
        spec = get_subject("gas_contract", n=5, value_range=(-8, 8))
        res = execute(spec.program, spec.layout.encode(values),
                      cost_model="user_defined")
        assert res.cost == sum(21 + abs(v) for v in values)


class TestAbsSumOracle:
    @given(st.lists(st.integers(min_value=-100, max_value=100),
                    min_size=2, max_size=2))
    @settings(max_examples=60, deadline=None)
    def test_formula_exact_per_input(self, values):
        spec = get_subject("abs_sum")
        res = execute(spec.program, spec.layout.encode(values),
                      cost_model="user_defined")
        assert res.cost == abs(values[0]) + abs(values[1])

    def test_worst_sits_at_corner(self):
        spec = get_subject("abs_sum")
        assert worst_cost(spec) == 200
        res = execute(spec.program, worst_input(spec),
                      cost_model="user_defined")
        assert res.cost == 200
