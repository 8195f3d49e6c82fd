"""JSON-Lines dataset files and their vehicle manifest."""

from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .core import ChargingSnippet, Vehicle

DATASET_FILE = "dataset.jsonl"
MANIFEST_FILE = "manifest.json"


def snippet_record(snippet: ChargingSnippet, health_label: int) -> dict:
    return {
        "vehicle_id": snippet.vehicle_id,
        "snippet_index": int(snippet.snippet_index),
        "mileage": float(snippet.mileage),
        "health_label": int(health_label),
        "capacity_label": None if snippet.capacity_label is None else float(snippet.capacity_label),
        "series": snippet.series.tolist(),
    }


def write_dataset(vehicles, directory) -> tuple[Path, Path]:
    """Write ``dataset.jsonl`` plus ``manifest.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data_path = directory / DATASET_FILE
    manifest_path = directory / MANIFEST_FILE
    with open(data_path, "w") as fh:
        for v in vehicles:
            for s in v.snippets:
                fh.write(json.dumps(snippet_record(s, v.health_label), separators=(",", ":")))
                fh.write("\n")
    manifest = {"vehicles": [{"vehicle_id": v.vehicle_id, "health_label": v.health_label,
                              "n_snippets": len(v.snippets)} for v in vehicles]}
    manifest_path.write_text(json.dumps(manifest, indent=1) + "\n")
    return data_path, manifest_path


def read_dataset(directory) -> list[Vehicle]:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST_FILE).read_text())
    labels = OrderedDict((m["vehicle_id"], int(m["health_label"])) for m in manifest["vehicles"])
    snippets: dict[str, list[ChargingSnippet]] = {vid: [] for vid in labels}
    with open(directory / DATASET_FILE) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            vid = rec["vehicle_id"]
            if vid not in labels:
                raise ValueError(f"line {lineno}: vehicle {vid!r} missing from manifest")
            if int(rec["health_label"]) != labels[vid]:
                raise ValueError(f"line {lineno}: health label disagrees with manifest for {vid!r}")
            snippets[vid].append(ChargingSnippet(
                vid, int(rec["snippet_index"]), float(rec["mileage"]),
                np.asarray(rec["series"], dtype=np.float64), rec["capacity_label"]))
    return [Vehicle(vid, lab, tuple(snippets[vid])) for vid, lab in labels.items()]
