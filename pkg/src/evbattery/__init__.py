"""Battery-fleet analytics: synthetic charging data, vehicle-level anomaly
detection with robust score aggregation, and capacity regression."""

__version__ = "0.1.0"
