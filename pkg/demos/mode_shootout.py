"""All four campaign modes on the hash table, side by side.

Runs 30-second campaigns in each mode on a 12-key hash table, then
feeds the merged stats files to the compare command for the final
table. The hybrid mode tends to win because the concolic worker can
solve byte-equality chains that random mutation rarely stumbles into.
Takes about two minutes.
"""

import tempfile
from pathlib import Path

from wcfuzz.cli import main as wcfuzz_main
from wcfuzz.coordinator import MODES, CampaignConfig, run_campaign


def main():
    out = Path(tempfile.mkdtemp(prefix="wcfuzz_shootout_"))
    print(f"artifacts land in {out}")

    stats_files = []
    for mode in MODES:
        print(f"\n--- {mode}: 30 s on hash_table n=12 ---")
        stats = run_campaign(CampaignConfig(
            subject="hash_table", mode=mode, n=12,
            budget_seconds=30.0, rng_seed=1,
            sync_dir=str(out / mode)))
        print(f"best cost {stats.best_cost} "
              f"(slowdown {stats.slowdown:.2f}x over the seed)")
        stats_files.append(str(out / mode / "stats_merged.csv"))

    print("\n--- time to reach cost thresholds (seconds) ---")
    wcfuzz_main(["compare", *stats_files])
    print("\nthresholds are fractions of the best cost any mode reached;")
    print("a dash means the mode never got there within its budget")


if __name__ == "__main__":
    main()
