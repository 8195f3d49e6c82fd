"""Vehicle-level cross-validation plans.

For detection, normal and anomalous vehicles are split into ``k`` folds each.
In round ``r``: train on every normal fold except ``r``; tune on those training
vehicles plus anomalous fold ``r``; test on normal fold ``r`` and the remaining
``k - 1`` anomalous folds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ProtocolError


@dataclass(frozen=True)
class RoundRoles:
    round: int
    train: tuple
    validation_anomalous: tuple
    test_normal: tuple
    test_anomalous: tuple

    @property
    def validation(self) -> tuple:
        return self.train + self.validation_anomalous

    @property
    def test(self) -> tuple:
        return self.test_normal + self.test_anomalous


@dataclass(frozen=True)
class FoldPlan:
    normal_folds: tuple
    anomalous_folds: tuple

    @property
    def k(self) -> int:
        return len(self.normal_folds)

    def round(self, r: int) -> RoundRoles:
        k = self.k
        if not 0 <= r < k:
            raise IndexError(r)
        train = tuple(v for j in range(k) if j != r for v in self.normal_folds[j])
        test_anom = tuple(v for j in range(k) if j != r for v in self.anomalous_folds[j])
        return RoundRoles(r, train, tuple(self.anomalous_folds[r]), tuple(self.normal_folds[r]),
                          test_anom)

    def rounds(self):
        return [self.round(r) for r in range(self.k)]

    def to_dict(self) -> dict:
        return {"normal_folds": [list(f) for f in self.normal_folds],
                "anomalous_folds": [list(f) for f in self.anomalous_folds]}


def _split(ids, k: int, rng: np.random.Generator) -> tuple:
    ids = sorted(ids)
    order = rng.permutation(len(ids))
    folds = [[] for _ in range(k)]
    for i, j in enumerate(order):
        folds[i % k].append(ids[j])
    return tuple(tuple(f) for f in folds)


def build_folds(vehicles, k: int = 5, seed: int = 0) -> FoldPlan:
    if k < 2:
        raise ValueError("need at least 2 folds")
    normal = [v.vehicle_id for v in vehicles if v.health_label == 0]
    anomalous = [v.vehicle_id for v in vehicles if v.health_label == 1]
    if len(set(normal) | set(anomalous)) != len(normal) + len(anomalous):
        raise ValueError("duplicate vehicle ids")
    for name, ids in (("normal", normal), ("anomalous", anomalous)):
        if len(ids) < k:
            raise ProtocolError(f"need at least {k} {name} vehicles for {k}-fold evaluation, "
                                f"got {len(ids)}")
    rng = np.random.default_rng(seed)
    return FoldPlan(_split(normal, k, rng), _split(anomalous, k, rng))


def build_group_folds(vehicle_ids, k: int = 5, seed: int = 0) -> tuple:
    """Label-agnostic split of vehicles into ``k`` folds."""
    ids = list(vehicle_ids)
    if len(ids) < k:
        raise ProtocolError(f"need at least {k} vehicles for {k}-fold evaluation, got {len(ids)}")
    return _split(ids, k, np.random.default_rng(seed))
