"""Train the full model on synthetic data and inspect what the mask kept.

Run from the repository root::

    python3 demos/quickstart.py

Takes about a minute on one core.
"""

from sparg.data import SyntheticConfig, generate_synthetic, make_folds
from sparg.evaluation import edge_overlap, support_recovery
from sparg.training import LossWeights, TrainConfig, binarize_and_evaluate, masked_model, train

dataset = generate_synthetic(SyntheticConfig(seed=0))
fold = make_folds(dataset, seed=0)[0]
print(f"{len(dataset)} subjects, k={dataset.k}, {dataset.n_edges} edges, {int(dataset.ood.sum())} OOD")

config = TrainConfig(
    max_epochs=600, patience=600, fine_tune_after_binarize=True,
    weights=LossWeights(0.1, 0.5, 0.001, 0.5),
)


def progress(row, model):
    if row["epoch"] % 100 == 0:
        print(f"epoch {row['epoch']:4d}  total {row['total']:.4f}  val balacc {row['val_balacc']:.3f}")


tm = train(config, fold, dataset, on_epoch=progress)

mask = masked_model(tm, 0.9).mask
precision, recall, _ = support_recovery(mask, dataset.planted["informative"])
print(f"kept {int(mask.kept.sum())} edges: planted precision {precision:.2f} recall {recall:.2f}, "
      f"{edge_overlap(mask, dataset.planted['nuisance'])} nuisance edges")

for ratio in (0.0, 0.9):
    entry = binarize_and_evaluate(tm, ratio, fold, dataset)
    print(f"occlusion {ratio}: ID {entry['id_balacc']:.3f}  OOD {entry['ood_balacc']:.3f}")
