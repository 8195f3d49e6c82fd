"""Five-fold capacity regression on a fleet with accelerated capacity fade.

    python demos/capacity_regression.py
"""

from evbattery.capacity import REGRESSORS, RegressorConfig, evaluate_capacity
from evbattery.synthgen import GenConfig, generate_fleet

fleet = generate_fleet(GenConfig(seed=7, n_normal=12, n_anomalous=6, snippets_per_vehicle=80,
                                 fault_kinds=("accelerated_fade",), fault_severity=1.0,
                                 transient_fraction=0.5, truncation_probability=0.0))
n = sum(s.capacity_label is not None for v in fleet for s in v.snippets)
print(f"{n} capacity-labeled snippets")

for kind in REGRESSORS:
    rep = evaluate_capacity(fleet, RegressorConfig(kind=kind), k=5, seed=0)
    print(f"{kind:>11}: RMSE {rep.rmse_mean:.2f}±{rep.rmse_std:.2f} Ah "
          f"(mean predictor {rep.baseline_mean:.2f})")
