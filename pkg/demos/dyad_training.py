"""Train the dynamical-system autoencoder on normal vehicles and score the rest.

The decoder sees only current and SOC plus the latent code, so snippets whose
voltage and temperature response departs from the learned dynamics score high.

    python demos/dyad_training.py
"""

import numpy as np

from evbattery.core import fit_normalizer
from evbattery.detectors import DyadConfig, dyad_train
from evbattery.evalkit import auroc, robust_vehicle_score
from evbattery.synthgen import GenConfig, generate_fleet

fleet = generate_fleet(GenConfig(seed=3, n_normal=12, n_anomalous=4, snippets_per_vehicle=60,
                                 fault_severity=0.8))
normal = [v for v in fleet if v.health_label == 0]
train, held_out = normal[:8], normal[8:] + [v for v in fleet if v.health_label == 1]

norm = fit_normalizer([s for v in train for s in v.snippets])
model = dyad_train(train, DyadConfig(epochs=5), seed=0, norm=norm)
print("training loss per epoch:", np.round(model.history, 4))

labels, scores = [], []
for v in held_out:
    s = model.score_snippets(list(v.snippets))
    labels.append(v.health_label)
    scores.append(robust_vehicle_score(s, 10))
    print(f"{v.vehicle_id} label={v.health_label} median={np.median(s):.4f} "
          f"top10%={scores[-1]:.4f}")
print(f"held-out AUROC {auroc(labels, scores):.3f}")
