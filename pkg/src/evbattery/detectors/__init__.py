"""Snippet-level anomaly scorers."""

from .autoencoder import AEConfig, AEModel, ae_score, ae_train
from .base import SnippetScore, read_scores, snippet_scores, write_scores
from .dyad import DyadConfig, DyadModel, dyad_score, dyad_train
from .variance import variance_score

DETECTORS = ("dyad", "ae", "variance")

__all__ = [
    "AEConfig", "AEModel", "DETECTORS", "DyadConfig", "DyadModel", "SnippetScore", "ae_score",
    "ae_train", "dyad_score", "dyad_train", "read_scores", "snippet_scores", "variance_score",
    "write_scores",
]
