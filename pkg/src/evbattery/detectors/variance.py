import numpy as np

from ..core import AVG_VOLT, Vehicle


def variance_score(vehicle: Vehicle, channel: int = AVG_VOLT) -> float:
    """Mean over snippets of the per-snippet population variance of one channel.

    Used directly as the vehicle score; no top-h% aggregation.
    """
    if not vehicle.snippets:
        raise ValueError(f"vehicle {vehicle.vehicle_id} has no snippets")
    x = vehicle.stack([channel])[:, :, 0]
    return float(np.mean(np.var(x, axis=1)))
