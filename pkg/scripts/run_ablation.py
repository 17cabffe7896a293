#!/usr/bin/env python3
"""Window-size sweep on the bundled sample data.

Runs ingest + xt-fit if needed, then trains every (variant, k) cell and
prints the three loss tables. Full paper-scale hyperparameters by default;
pass --epochs to shorten.

    python3 scripts/run_ablation.py --artifacts /tmp/ablation --epochs 5
"""

import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from threatshare import cli

REPO = Path(__file__).resolve().parents[1]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--artifacts", type=Path, default=None)
    parser.add_argument("--epochs", type=int, default=25)
    parser.add_argument("--k-values", default="1,3,5,7,9")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    artifacts = args.artifacts or Path(tempfile.mkdtemp(prefix="threatshare-ablation-"))
    config = {
        "paths": {
            "data_dir": str(REPO / "data" / "fixture"),
            "stats_csv": str(REPO / "data" / "fixture" / "player_stats.csv"),
            "roles_csv": str(REPO / "data" / "fixture" / "player_roles.csv"),
            "artifacts_dir": str(artifacts),
            "cache_dir": str(artifacts / "cache"),
        },
        "training": {"epochs": args.epochs},
        "seed": args.seed,
    }
    cfg = cli.parse_config(config)
    cli.run_pipeline(cfg, ["ingest", "xt-fit"])
    k_values = [int(v) for v in args.k_values.split(",")]
    cli.ablate(cfg, k_values)
    for metric in ("mae", "mse", "combined"):
        path = artifacts / f"ablation_{metric}.csv"
        print(f"\n== {metric} ({path})")
        print(path.read_text())


if __name__ == "__main__":
    main()
