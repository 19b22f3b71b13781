"""Partial hypernetwork, latent replay and naive fine-tuning on the desk-scale stream.

Run:  python3 demos/compare_strategies.py [output_dir]
Each strategy runs through the same harness as the CLI (about 20-40 s each),
then the accuracy on the first experience is drawn for all three.
"""

import sys
from pathlib import Path

from partialhn.harness import load_config, plot_experience_over_time, run
from partialhn.metrics import aca, forgetting

root = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/compare")
config = Path(__file__).resolve().parents[1] / "configs" / "desk-split.txt"

matrices = {}
for strategy in ("partial-hn", "latent-replay", "naive"):
    artifacts = run(load_config(config, {"strategy": strategy, "out_dir": str(root / strategy), "checkpoints": False}))
    R = artifacts.matrix
    matrices[strategy] = artifacts.path("accuracy_matrix.csv")
    print(f"{strategy:>14}: ACA {aca(R, R.size):.3f}  forgetting {forgetting(R, R.size):.3f}")

plot = plot_experience_over_time(matrices, root / "experience1.svg")
print(f"\nfirst-experience accuracy over time: {plot}")
