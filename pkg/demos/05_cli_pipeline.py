"""
Batch processing with the command-line tool
===========================================

The ``sfam`` command consumes a JSON manifest of episodes (tensor paths,
image sizes, metric, optional truth boxes) and writes per-episode heatmaps,
localization scores, or sanity reports.  This script materializes a small
synthetic dataset and drives all three subcommands.
"""

import json
import subprocess
import sys
from pathlib import Path

from sfam.synthetic import write_episode_dataset

out_root = Path("demo_output") / "cli"
manifest = write_episode_dataset(out_root / "episodes", n_episodes=8, seed=99)
print(f"manifest: {manifest}")


def run(*args):
    cmd = [sys.executable, "-m", "sfam.cli", *args]
    print("\n$ sfam " + " ".join(args))
    subprocess.run(cmd, check=True)


run("explain", "--manifest", str(manifest), "--out", str(out_root / "explain"), "--jobs", "4")
run("evaluate", "--manifest", str(manifest), "--out", str(out_root / "eval"))
run(
    "sanity",
    "--manifest", str(manifest),
    "--out", str(out_root / "sanity"),
    "--fractions", "0,0.5,1",
    "--seed", "7",
)

summary = json.loads((out_root / "eval" / "summary.json").read_text())
print(f"\nevaluate summary: mean IoU {summary['mean_iou']:.4f}, accuracy {summary['accuracy']:.4f}")
