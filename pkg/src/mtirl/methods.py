"""Uniform entry point for the three learners."""
from __future__ import annotations

from dataclasses import fields
from typing import Optional

from .baselines import DpmConfig, EmConfig, dpm_birl_fit, dpm_to_fitted, em_mlirl_fit, em_to_fitted
from .errors import ConfigError
from .mdp_core import FeatureMap, Mdp
from .me_mtirl import MtirlConfig, fit as me_fit, to_fitted as me_to_fitted
from .modelio import FittedModel
from .trajectories import Dataset

CONFIG_TYPES = {"me-mtirl": MtirlConfig, "em-mlirl": EmConfig, "dpm-birl": DpmConfig}
METHODS = tuple(CONFIG_TYPES)


def make_config(method: str, params: Optional[dict] = None, seed: Optional[int] = None):
    """Build a method config from a plain dict, rejecting unknown keys."""
    if method not in CONFIG_TYPES:
        raise ConfigError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    cls = CONFIG_TYPES[method]
    params = dict(params or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(params) - known)
    if unknown:
        raise ConfigError(f"unknown {method} parameter(s): {', '.join(unknown)}")
    if seed is not None:
        params["seed"] = int(seed)
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad {method} parameters ({exc})") from exc


def fit_method(method: str, dataset: Dataset, mdp: Mdp, features: FeatureMap, config=None) -> FittedModel:
    config = config if config is not None else make_config(method)
    if method == "me-mtirl":
        model, diag = me_fit(dataset, mdp, features, config)
        return me_to_fitted(model, config, diag)
    if method == "em-mlirl":
        return em_to_fitted(em_mlirl_fit(dataset, mdp, features, config), config)
    if method == "dpm-birl":
        return dpm_to_fitted(dpm_birl_fit(dataset, mdp, features, config), config)
    raise ConfigError(f"unknown method {method!r}")


def converged(model: FittedModel) -> bool:
    """Method-specific convergence flag; sampling methods always report True."""
    d = model.diagnostics
    if model.method == "me-mtirl":
        return bool(d.get("converged")) and all(d.get("refit_converged", []))
    if model.method == "em-mlirl":
        return bool(d.get("converged"))
    return True
