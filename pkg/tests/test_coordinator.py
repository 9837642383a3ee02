"""Campaign orchestration: worker wiring, artifacts, isolation."""

import json

import pytest
from hypothesis import given, settings, strategies as st

from wcfuzz.coordinator import (
    CampaignConfig,
    SymExeWorker,
    generate_input_file,
    merge_histories,
    run_campaign,
)
from wcfuzz.solver import Model, STATS as SOLVER_STATS
from wcfuzz.subjects import get_subject
from wcfuzz.vm import execute


class TestGenerateInputFile:
    def test_unconstrained_fields_keep_seed_text(self):
        # full-byte layout: seed bytes survive the decode/encode round
        layout = get_subject("insertion_sort", n=4).program.input_layout
        out = generate_input_file(Model(assignment={}), layout)
        assert out == b"Hell"   # first bytes of the seed text

    def test_constrained_field_overrides(self, abs_sum2):
        layout = abs_sum2.program.input_layout
        out = generate_input_file(Model(assignment={"sym_1": 77}), layout)
        decoded = layout.decode(out)
        assert decoded[1] == 77
        assert out[0] == ord("H")

    @settings(max_examples=50, deadline=None)
    @given(st.dictionaries(st.sampled_from(["sym_0", "sym_1"]),
                           st.integers(min_value=-100, max_value=100)))
    def test_models_round_trip(self, assignment):
        layout = get_subject("abs_sum", n=2).program.input_layout
        out = generate_input_file(Model(assignment=assignment), layout)
        decoded = layout.decode(out)
        for i in range(layout.count):
            if f"sym_{i}" in assignment:
                assert decoded[i] == assignment[f"sym_{i}"]


class TestMergeHistories:
    def test_running_max_across_workers(self):
        merged = merge_histories([
            [(1.0, 5), (4.0, 9)],
            [(2.0, 7), (3.0, 6)],
        ])
        assert merged == [(1.0, 5), (2.0, 7), (4.0, 9)]

    def test_empty_inputs(self):
        assert merge_histories([]) == []
        assert merge_histories([[], []]) == []

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.tuples(
        st.floats(min_value=0, max_value=100, allow_nan=False),
        st.integers(min_value=0, max_value=1000)), max_size=6), max_size=4))
    def test_merged_is_monotone_in_both_axes(self, histories):
        merged = merge_histories(histories)
        times = [t for t, _ in merged]
        costs = [c for _, c in merged]
        assert times == sorted(times)
        assert costs == sorted(costs)
        assert len(set(costs)) == len(costs)   # strict improvements only


class TestSymExeWorker:
    def test_reaches_known_worst_on_small_sort(self, tmp_path):
        subject = get_subject("insertion_sort", n=4)
        config = CampaignConfig(subject="insertion_sort", mode="symexe",
                                n=4, symexe_iterations=200,
                                sync_dir=str(tmp_path))
        worker = SymExeWorker(subject, config, sync_root=str(tmp_path))
        stats = worker.run()
        # brute-force worst for n=4 is 3+2+1 shifts on top of the base walk
        assert stats.best_cost > stats.seed_cost
        decoded = subject.program.input_layout.decode(stats.best_input)
        assert decoded == sorted(decoded, reverse=True)

    def test_summary_counters_are_consistent(self, tmp_path):
        subject = get_subject("insertion_sort", n=4)
        config = CampaignConfig(subject="insertion_sort", mode="symexe",
                                n=4, symexe_iterations=60,
                                sync_dir=str(tmp_path))
        worker = SymExeWorker(subject, config, sync_root=str(tmp_path))
        worker.run()
        s = worker.summary()
        assert s["solver_calls_during_exploration"] == 0
        assert s["solver_calls_total"] >= s["unsat"]
        assert s["files_exported"] >= s["exports_from_maximization"]
        assert s["trie_nodes"] >= 1
        assert s["iterations"] <= 60

    def test_export_log_only_flags_published_rows(self, tmp_path):
        subject = get_subject("insertion_sort", n=4)
        config = CampaignConfig(subject="insertion_sort", mode="symexe",
                                n=4, symexe_iterations=80,
                                sync_dir=str(tmp_path))
        worker = SymExeWorker(subject, config, sync_root=str(tmp_path))
        worker.run()
        exported_rows = [r for r in worker.assessor.log if r.exported]
        queue = sorted((tmp_path / "symexe" / "queue").iterdir())
        assert len(exported_rows) == len(queue)
        assert ([r.input for r in exported_rows]
                == [p.read_bytes() for p in queue])

    def test_import_maximization_publishes_ceiling(self, tmp_path):
        # user_defined model: importing the seed already triggers path
        # maximization, and the maximized input gets published
        subject = get_subject("abs_sum", n=2)
        config = CampaignConfig(subject="abs_sum", mode="symexe", n=2,
                                symexe_iterations=30,
                                sync_dir=str(tmp_path))
        worker = SymExeWorker(subject, config, sync_root=str(tmp_path))
        stats = worker.run()
        assert worker.exports_from_maximization >= 1
        assert stats.best_cost == 200

    def test_assess_log_schema(self, tmp_path):
        subject = get_subject("insertion_sort", n=3)
        config = CampaignConfig(subject="insertion_sort", mode="symexe",
                                n=3, symexe_iterations=20,
                                sync_dir=str(tmp_path))
        SymExeWorker(subject, config, sync_root=str(tmp_path)).run()
        lines = (tmp_path / "symexe" / "assess_log.csv").read_text().splitlines()
        assert lines[0] == ("seq,elapsed_s,phase,mode,status,cost,"
                            "new_cov,new_high,exported,input_hex")
        first = lines[1].split(",")
        assert first[0] == "0" and first[2] == "boot"
        assert bytes.fromhex(first[9])


def campaign(tmp_path, mode, **kw):
    base = dict(subject="insertion_sort", mode=mode, n=4,
                sync_dir=str(tmp_path / mode), rng_seed=3,
                fuzzer_iterations=60, symexe_iterations=60,
                budget_seconds=20.0)
    base.update(kw)
    return run_campaign(CampaignConfig(**base))


class TestRunCampaign:
    def test_unknown_mode_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="mode"):
            campaign(tmp_path, "hybrid")

    def test_unknown_heuristic_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="heuristic"):
            campaign(tmp_path, "symexe", heuristic="wide")

    @pytest.mark.parametrize("mode", ["kelinci", "kelinciwca", "symexe"])
    def test_single_worker_artifacts(self, tmp_path, mode):
        stats = campaign(tmp_path, mode)
        assert not stats.crashed
        assert stats.best_cost >= stats.seed_cost > 0
        assert stats.slowdown == stats.best_cost / stats.seed_cost
        root = tmp_path / mode
        lines = (root / "stats_merged.csv").read_text().splitlines()
        assert lines[0] == "elapsed_s,best_cost"
        costs = [int(line.split(",")[1]) for line in lines[1:]]
        assert costs == [c for _, c in stats.merged]
        report = (root / "report.txt").read_text()
        assert f"mode: {mode}\n" in report
        assert f"best_cost: {stats.best_cost}\n" in report
        assert f"best_input: 0x{stats.best_input.hex()}\n" in report

    def test_symexe_writes_summary_json(self, tmp_path):
        stats = campaign(tmp_path, "symexe")
        summary = stats.summaries["symexe"]
        assert summary["solver_calls_during_exploration"] == 0
        on_disk = json.loads(
            (tmp_path / "symexe" / "symexe" / "summary.json").read_text())
        assert on_disk == summary

    def test_fuzzer_modes_never_touch_solver(self, tmp_path):
        before = SOLVER_STATS.calls
        campaign(tmp_path, "kelinci")
        campaign(tmp_path, "kelinciwca")
        assert SOLVER_STATS.calls == before

    def test_badger_runs_both_workers(self, tmp_path):
        stats = campaign(tmp_path, "badger", budget_seconds=6.0,
                         stop_at_cost=12)
        assert not stats.crashed
        assert stats.worker_exit.keys() == {"fuzzer", "symexe"}
        assert set(stats.histories) >= {"fuzzer"}
        assert stats.best_cost >= 12

    def test_stop_at_cost_short_circuits(self, tmp_path):
        stats = campaign(tmp_path, "kelinciwca", stop_at_cost=1,
                         fuzzer_iterations=100000)
        assert stats.best_cost >= 1
