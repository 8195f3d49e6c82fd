"""How the top-h% vehicle score reacts to a fault that shows in few snippets.

    python demos/robust_scoring.py
"""

import numpy as np

from evbattery.evalkit import auroc, robust_vehicle_score, select_hyperparams

rng = np.random.default_rng(0)
n_snippets = 200

# snippet scores: every vehicle has its own baseline, anomalous ones add a burst in 10% of snippets
vehicles, labels = [], []
for i in range(30):
    s = rng.gamma(4.0, 0.01 * rng.uniform(0.7, 1.3), n_snippets)
    if i % 3 == 0:
        burst = rng.choice(n_snippets, n_snippets // 10, replace=False)
        s[burst] += 0.05
        labels.append(1)
    else:
        labels.append(0)
    vehicles.append(s)

for h in (1, 5, 10, 25, 50, 100):
    v = [robust_vehicle_score(s, h) for s in vehicles]
    print(f"h={h:>3}%  AUROC {auroc(labels, v):.3f}")

params, diag = select_hyperparams(labels, vehicles)
print(f"selected h={params.h}, tau={params.tau:.4f}, validation F1 {diag['val_f1']:.3f}")
