"""Simulate a small fleet, inspect one charging record and its capacity label.

    python demos/fleet_generation.py [out_dir]
"""

import sys

import numpy as np

from evbattery.core import AVG_VOLT, CURRENT, SOC, TIMESTAMP, dataset_stats
from evbattery.io import write_dataset
from evbattery.synthgen import (BatteryState, ChargeProtocol, GenConfig, capacity_label,
                                fleet_faults, generate_fleet, simulate_charge)

# one CC-CV charge of a 50 Ah pack with 10% fade
state = BatteryState(nominal_capacity=50.0, fade_fraction=0.1, internal_resistance=0.003)
record = simulate_charge(state, ChargeProtocol(start_soc=5.0))
t_h = (record[:, TIMESTAMP] - record[0, TIMESTAMP]) / 3600
cc = np.flatnonzero(record[:, CURRENT] == 35.0)
print(f"record: {len(record)} samples over {t_h[-1]:.2f} h, "
      f"CC from {t_h[cc[0]]:.2f} to {t_h[cc[-1]]:.2f} h, final SOC {record[-1, SOC]:.1f}%")
print(f"voltage {record[:, AVG_VOLT].min():.3f}..{record[:, AVG_VOLT].max():.3f} V")
print(f"capacity label {capacity_label(record):.3f} Ah "
      f"(effective capacity {state.effective_capacity:.2f} Ah)")

# a fleet with planted faults on the anomalous vehicles
config = GenConfig(seed=1, n_normal=8, n_anomalous=4, snippets_per_vehicle=40)
fleet = generate_fleet(config)
print(dataset_stats(fleet).as_dict())
for vid, fault in fleet_faults(config).items():
    if fault is not None:
        print(f"  {vid}: {fault.kind}")

if len(sys.argv) > 1:
    paths = write_dataset(fleet, sys.argv[1])
    print("wrote", *paths)
