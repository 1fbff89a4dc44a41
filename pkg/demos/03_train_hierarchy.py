"""Train on synthetic scenes and inspect the radial hierarchy.

Generates the default synthetic dataset, trains with and without the
entailment term, and compares how far place and object embeddings sit from
the hyperboloid origin. With the cone loss active, places should end up
closer to the root than their objects, and the separation should widen.
"""

import dataclasses

import numpy as np

from hyperscene import SyntheticConfig, TrainConfig, generate, train
from hyperscene.trainer import embed_root_distances

dataset = generate(SyntheticConfig())
print(
    f"dataset: {len(dataset.scene_ids)} scenes, {len(dataset.views)} views, "
    f"{len(dataset.tracks)} objects"
)

config = TrainConfig(epochs=150)  # shorter than the benchmark default, for a quick look
for label, cfg in (
    ("with entailment   ", config),
    ("without entailment", dataclasses.replace(config, entailment_enabled=False)),
):
    out = train(dataset, cfg)
    dists = embed_root_distances(out.table)
    place = float(np.mean(dists["place-view"].root_distances))
    obj = float(np.mean(dists["object"].root_distances))
    last = out.history[-1]
    print(
        f"\n{label}: final losses place={last.loss_place:.3f} "
        f"object={last.loss_object:.3f} entail={last.loss_entailment:.3f} "
        f"curvature={last.curvature:.4f}"
    )
    print(
        f"  mean root distance: places {place:.3f} vs objects {obj:.3f} "
        f"(gap {obj - place:+.3f})"
    )
