"""Train a partial hypernetwork on a small synthetic stream and print what it remembers.

Run:  python3 demos/quickstart.py
Takes about half a minute on one CPU core.
"""

import numpy as np

from partialhn.hypernet import HyperConfig
from partialhn.metrics import AccuracyMatrix, aca, forgetting
from partialhn.models import build_slim_resnet, decompose
from partialhn.streams import make_split_stream, make_synthetic_splits
from partialhn.strategies import PartialHN, TrainConfig

# Twelve synthetic classes split into three experiences of four classes each.
train, test = make_synthetic_splits(12, 200, 40, size=16, seed=0)
stream = make_split_stream(train, test, n_experiences=3, classes_per_exp=4, seed=0)

# The first k=2 blocks (stem and first stage) become the frozen feature extractor g.
# The hypernetwork generates every weight after them, one set per task embedding.
model = build_slim_resnet(4, nf=8, seed=0)
strategy = PartialHN(
    decompose(model, k=2, classifier_classes=4),
    TrainConfig(alpha=0.05, beta=0.01, lam=0.5, epochs=5, batch_size=8),
    HyperConfig(emb_std=0.2),
)

R = AccuracyMatrix(len(stream))
for t, exp in enumerate(stream, start=1):
    summary = strategy.train_experience(exp)
    R.set_row(t, strategy.evaluate(stream, t))
    print(f"after experience {t}: final epoch loss {summary.epoch_losses[-1]:.3f}, accuracies {np.round(R.R[t - 1, :t], 3)}")

print(f"\naverage accuracy {aca(R, 3):.3f}, forgetting {forgetting(R, 3):.3f}")
print("g was frozen after experience 1 and is unchanged:", strategy.d.phi_hash()[:16], "...")
