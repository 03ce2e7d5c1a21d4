"""Train the embedding network on a small synthetic set and inspect the run.

This is a scaled-down version of the real recipe (millions of patches); it
uses a few hundred quadruplets so it finishes in a couple of minutes on a
CPU. The network, loss, and schedule are the production ones.

Run from the repository root:

    python3 demos/03_training.py
"""

import numpy as np

from provtrace.embednet import (
    build_network,
    count_parameters,
    layer_parameter_counts,
    load_checkpoint,
    save_checkpoint,
)
from provtrace.quadgen import PatchStore, make_quadruplets, synthesize_corpus
from provtrace.rankloss import TrainConfig, train

# The network: five conv blocks then two fully connected layers, embeddings
# L2-normalized to 256 dimensions.
network = build_network(seed=0)
print(f"parameters: {count_parameters(network):,}")
print(f"per layer:  {layer_parameter_counts(network)}")

rng = np.random.default_rng(3)
corpus = synthesize_corpus(rng, 8)
store = PatchStore(patch_size=64)
records = []
for i, (image_id, image) in enumerate(corpus):
    neg_id, neg_image = corpus[(i + 1) % len(corpus)]
    for difficulty in ("easy", "hard"):
        batch, store = make_quadruplets(
            image, neg_image, difficulty, count=12, rng=rng,
            anchor_id=image_id, negative_id=neg_id, store=store,
        )
        records.extend(batch)
print(f"\ndataset: {len(records)} quadruplets from {len(corpus)} images")

config = TrainConfig(max_epochs=2, batch_size=32, val_fraction=0.25)
result = train(records, store, config, np.random.default_rng(5), network=network)

print("\nepoch  train_loss  val_loss  val_precision  lr")
for row in result.history:
    print(f"{row.epoch:5d}  {row.train_loss:10.4f}  {row.val_loss:8.4f}"
          f"  {row.val_precision:13.3f}  {row.lr:g}")
print(f"\nbest epoch {result.best_epoch} "
      f"(held-out precision {result.best_val_precision:.3f}); "
      "a random ordering of the three distances would score 1/6")

save_checkpoint("/tmp/demo_checkpoint.pt", result.network,
                extra={"best_epoch": result.best_epoch})
reloaded, payload = load_checkpoint("/tmp/demo_checkpoint.pt")
print(f"checkpoint round-trip ok, extra={payload['extra']}")
