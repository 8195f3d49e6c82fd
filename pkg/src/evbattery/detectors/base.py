from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import ChargingSnippet, NormStats, ProtocolError, apply_normalizer


@dataclass(frozen=True)
class SnippetScore:
    vehicle_id: str
    snippet_index: int
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score) or self.score < 0:
            raise ValueError(f"snippet score must be finite and >= 0, got {self.score}")


class TrainHistory(list):
    """Mean training loss per epoch."""


def check_normal_only(vehicles) -> None:
    bad = [v.vehicle_id for v in vehicles if v.health_label != 0]
    if bad:
        raise ProtocolError(
            f"anomalous vehicles in training data: {', '.join(bad[:5])}"
            + (" ..." if len(bad) > 5 else ""))
    if not any(v.snippets for v in vehicles):
        raise ValueError("no training data")


def stack_normalized(snippets, norm: NormStats, channels) -> np.ndarray:
    """(n, 128, len(channels)) normalized array from snippets or a raw (n, 128, 8) array."""
    if isinstance(snippets, np.ndarray):
        raw = snippets
    else:
        raw = np.stack([s.series for s in snippets])
    return np.ascontiguousarray(apply_normalizer(raw, norm)[:, :, list(channels)])


def snippet_scores(snippets: list[ChargingSnippet], scores) -> list[SnippetScore]:
    return [SnippetScore(s.vehicle_id, s.snippet_index, float(x)) for s, x in zip(snippets, scores)]


def write_scores(path, scores: list[SnippetScore]) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vehicle_id", "snippet_index", "score"])
        for s in scores:
            w.writerow([s.vehicle_id, s.snippet_index, repr(float(s.score))])


def read_scores(path) -> list[SnippetScore]:
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [SnippetScore(r["vehicle_id"], int(r["snippet_index"]), float(r["score"])) for r in rows]
