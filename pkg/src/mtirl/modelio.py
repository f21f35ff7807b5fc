"""A method-agnostic fitted model and its JSON file format.

All three learners reduce to the same summary: one weight row per active
cluster, a hard cluster index per training trajectory, mixture weights, the
resolved config and free-form diagnostics.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidArgument


@dataclass(eq=False)
class FittedModel:
    method: str
    theta: np.ndarray            # (D_active, K)
    assignments: np.ndarray      # (N,) indices into theta rows
    pi: np.ndarray               # (D_active,)
    config: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        self.assignments = np.asarray(self.assignments, dtype=np.int64).reshape(-1)
        self.pi = np.asarray(self.pi, dtype=float).reshape(-1)
        D = self.theta.shape[0]
        if self.pi.shape != (D,):
            raise InvalidArgument("pi needs one entry per weight row")
        if self.assignments.size and (self.assignments.min() < 0 or self.assignments.max() >= D):
            raise InvalidArgument("assignment index out of range")

    @property
    def num_clusters(self) -> int:
        return self.theta.shape[0]

    @property
    def num_features(self) -> int:
        return self.theta.shape[1]

    def per_trajectory_weights(self) -> np.ndarray:
        return self.theta[self.assignments]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "K": self.num_features,
            "D_active": self.num_clusters,
            "theta": self.theta.tolist(),
            "assignments": self.assignments.tolist(),
            "pi": self.pi.tolist(),
            "config": self.config,
            "diagnostics": self.diagnostics,
        }

    def __eq__(self, other) -> bool:
        return isinstance(other, FittedModel) and self.to_dict() == other.to_dict()

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        try:
            theta = np.array(d["theta"], dtype=float).reshape(int(d["D_active"]), int(d["K"]))
            return cls(str(d["method"]), theta, d["assignments"], d["pi"],
                       dict(d.get("config") or {}), dict(d.get("diagnostics") or {}))
        except (KeyError, TypeError, ValueError, InvalidArgument) as exc:
            raise DataError(f"malformed model record ({exc})") from exc


def compact_labels(labels: np.ndarray):
    """Relabel arbitrary cluster ids to ``0..D-1`` in order of first use of the sorted ids."""
    ids, compact = np.unique(np.asarray(labels, dtype=np.int64), return_inverse=True)
    return ids, compact.astype(np.int64)


def save_model(path, model: FittedModel) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n")


def load_model(path) -> FittedModel:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: model is not valid JSON ({exc.msg})") from exc
    if not isinstance(d, dict):
        raise DataError(f"{path}:1: model must be a JSON object")
    return FittedModel.from_dict(d)
