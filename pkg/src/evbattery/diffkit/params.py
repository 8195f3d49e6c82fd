"""Named parameter store with paired gradient buffers and JSON checkpoints."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def config_hash(config) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


class ModelParams:
    """Ordered mapping ``name -> float64 array`` plus one gradient buffer per entry."""

    def __init__(self):
        self._values: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> np.ndarray:
        if name in self._values:
            raise KeyError(f"parameter {name!r} already exists")
        value = np.array(value, dtype=np.float64)
        self._values[name] = value
        self._grads[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __contains__(self, name):
        return name in self._values

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def names(self) -> list[str]:
        return list(self._values)

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def accumulate(self, name: str, g) -> None:
        buf = self._grads[name]
        g = np.asarray(g)
        if g.shape != buf.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {buf.shape} for {name!r}")
        buf += g

    def zero_grad(self) -> None:
        for g in self._grads.values():
            g.fill(0.0)

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self._grads.values())))

    def clip_grad_norm(self, max_norm: float) -> float:
        """Scale all gradients so their global L2 norm is at most ``max_norm``."""
        norm = self.grad_norm()
        if norm > max_norm > 0:
            scale = max_norm / norm
            for g in self._grads.values():
                g *= scale
        return norm

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self._values.values())

    def size(self) -> int:
        return sum(v.size for v in self._values.values())

    def copy(self) -> "ModelParams":
        out = ModelParams()
        for k, v in self._values.items():
            out.add(k, v)
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self._values.items()}

    def load_state_dict(self, state: dict) -> None:
        for k, v in state.items():
            if k not in self._values:
                raise KeyError(f"unexpected parameter {k!r}")
            v = np.asarray(v, dtype=np.float64)
            if v.shape != self._values[k].shape:
                raise ValueError(f"shape mismatch for {k!r}: {v.shape} vs {self._values[k].shape}")
            self._values[k][...] = v


def save_params(params: ModelParams, path, config=None) -> None:
    """Write tensors, shapes and a config hash as JSON.

    Floats are written with ``repr`` precision so loading is bit-exact.
    """
    doc = {
        "config": config,
        "config_hash": config_hash(config),
        "tensors": {k: {"shape": list(params[k].shape), "data": params[k].ravel().tolist()}
                    for k in params},
    }
    Path(path).write_text(json.dumps(doc))


def load_params(path, expected_config=None) -> tuple[ModelParams, dict]:
    doc = json.loads(Path(path).read_text())
    if config_hash(doc["config"]) != doc["config_hash"]:
        raise ValueError("checkpoint config hash does not match its config")
    if expected_config is not None and config_hash(expected_config) != doc["config_hash"]:
        raise ValueError("checkpoint was written for a different config")
    params = ModelParams()
    for name, t in doc["tensors"].items():
        params.add(name, np.asarray(t["data"], dtype=np.float64).reshape(t["shape"]))
    return params, doc["config"]
