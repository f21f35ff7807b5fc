"""Command-line front end: ``mtirl {generate,train,eval,experiment,sort}``.

Every run is described by a YAML file; keys not listed in ``--help`` are
rejected. Artifacts carry the fully resolved config.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError, ConvergenceError, DataError, InvalidArgument, MtirlError
from .evaluation import (ExperimentSpec, IleSpec, assignment_accuracy, greedy_for, matched_ile,
                         precision_recall, run_experiment, spec_to_dict)
from .methods import CONFIG_TYPES, METHODS, converged, fit_method, make_config
from .modelio import load_model, save_model
from .onion_domain import CALIBRATED_EPISODE, SortEpisodeConfig, simulate_sorting
from .trajectories import generate_mixed_dataset, load_dataset, save_dataset

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CONVERGENCE = 0, 2, 3, 4
DOMAINS = ("onion", "toy-chain", "toy-grid")


@dataclass
class GenerateBlock:
    n: int = 64
    mix: Optional[list] = None     # default: uniform over the domain's experts
    expert: str = "boltzmann"
    beta: float = 50.0


@dataclass
class PathsBlock:
    dataset: str = "dataset.jsonl"
    model: str = "model.json"
    results: str = "results.csv"


@dataclass
class ExperimentBlock:
    dataset_sizes: list = field(default_factory=lambda: [8, 16, 32, 64])
    runs_per_point: int = 5
    methods: list = field(default_factory=lambda: list(METHODS))
    record_timing: bool = True


@dataclass
class SortBlock:
    policy: str = "experts"         # or "model": greedy policy of every learned cluster
    num_onions: int = CALIBRATED_EPISODE.num_onions
    num_blemished: int = CALIBRATED_EPISODE.num_blemished
    inspect_accuracy: float = CALIBRATED_EPISODE.inspect_accuracy
    roll_accuracy: float = CALIBRATED_EPISODE.roll_accuracy
    time_budget: int = CALIBRATED_EPISODE.time_budget
    episode_seed: int = CALIBRATED_EPISODE.seed


@dataclass
class IleBlock:
    p_norm: float = 2.0
    value_mode: str = "episodic"


@dataclass
class RunConfig:
    domain: str = "onion"
    method: str = "me-mtirl"
    seed: int = 0
    require_convergence: bool = False
    generate: GenerateBlock = field(default_factory=GenerateBlock)
    params: dict = field(default_factory=dict)   # per-method parameter blocks keyed by method
    paths: PathsBlock = field(default_factory=PathsBlock)
    experiment: ExperimentBlock = field(default_factory=ExperimentBlock)
    sort: SortBlock = field(default_factory=SortBlock)
    ile: IleBlock = field(default_factory=IleBlock)

    def to_dict(self) -> dict:
        return asdict(self)


_BLOCKS = {"generate": GenerateBlock, "paths": PathsBlock, "experiment": ExperimentBlock,
           "sort": SortBlock, "ile": IleBlock}


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return cls(**data)


def parse_config(data) -> RunConfig:
    """Validate a plain mapping (e.g. loaded YAML) into a :class:`RunConfig`."""
    data = dict(data or {})
    blocks = {name: _build(cls, data.pop(name, None) or {}, name) for name, cls in _BLOCKS.items()}
    cfg = _build(RunConfig, {**data, **blocks}, "config")
    if cfg.domain not in DOMAINS:
        raise ConfigError(f"unknown domain {cfg.domain!r}; expected one of {', '.join(DOMAINS)}")
    if cfg.method not in METHODS:
        raise ConfigError(f"unknown method {cfg.method!r}; expected one of {', '.join(METHODS)}")
    if not isinstance(cfg.params, dict):
        raise ConfigError("params must be a mapping of method -> parameters")
    for method, block in cfg.params.items():
        make_config(method, block)      # rejects unknown methods and keys
    if cfg.sort.policy not in ("experts", "model"):
        raise ConfigError(f"unknown sort.policy {cfg.sort.policy!r}")
    IleSpec(cfg.ile.p_norm, cfg.ile.value_mode)
    return cfg


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return parse_config({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({' '.join(str(exc).split())})") from exc
    try:
        return parse_config(data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _domain(cfg: RunConfig):
    from .domains import get_domain
    return get_domain(cfg.domain)


def _write(path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from exc


def _check_dims(header: dict, mdp, features, source: str) -> None:
    got = (header["num_states"], header["num_actions"], header["num_features"], header["horizon"])
    want = (mdp.num_states, mdp.num_actions, features.num_features, mdp.horizon)
    if tuple(got) != want:
        raise ConfigError(f"{source} has (S, A, K, T) = {tuple(got)} but the domain has {want}")


def _load_dataset_for(cfg: RunConfig, mdp, features):
    ds, header = load_dataset(cfg.paths.dataset)
    _check_dims(header, mdp, features, cfg.paths.dataset)
    return ds


# --- subcommands ----------------------------------------------------------------

def cmd_generate(cfg: RunConfig, out: Optional[str]) -> int:
    mdp, features, W = _domain(cfg)
    g = cfg.generate
    mix = np.full(len(W), 1.0 / len(W)) if g.mix is None else np.asarray(g.mix, dtype=float)
    try:
        ds = generate_mixed_dataset(mdp, features, W, mix, int(g.n), rng_seed=cfg.seed,
                                    expert=g.expert, beta=g.beta)
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from exc
    ds.meta["run_config"] = cfg.to_dict()
    path = out or cfg.paths.dataset
    try:
        save_dataset(path, ds, mdp.num_states, mdp.num_actions, features.num_features)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from exc
    hist = np.bincount(ds.true_labels, minlength=len(W)).tolist()
    print(f"wrote {path}: N={len(ds)} T={ds.horizon} K={features.num_features} labels={hist}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, out: Optional[str]) -> int:
    mdp, features, _ = _domain(cfg)
    ds = _load_dataset_for(cfg, mdp, features)
    method_cfg = make_config(cfg.method, cfg.params.get(cfg.method), seed=cfg.seed)
    model = fit_method(cfg.method, ds, mdp, features, method_cfg)
    model.diagnostics["run_config"] = cfg.to_dict()
    path = out or cfg.paths.model
    try:
        save_model(path, model)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from exc
    ok = converged(model)
    print(f"wrote {path}: method={model.method} clusters={model.num_clusters} converged={ok}")
    if cfg.require_convergence and not ok:
        raise ConvergenceError(f"{cfg.method} did not converge (model written to {path})")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, out: Optional[str]) -> int:
    mdp, features, _ = _domain(cfg)
    ds = _load_dataset_for(cfg, mdp, features)
    model = load_model(cfg.paths.model)
    if model.num_features != features.num_features:
        raise ConfigError(f"model has K={model.num_features}, domain has K={features.num_features}")
    if len(model.assignments) != len(ds):
        raise ConfigError(f"model covers {len(model.assignments)} trajectories, dataset has {len(ds)}")
    if ds.true_labels is None or ds.true_weights is None:
        raise DataError(f"{cfg.paths.dataset}: evaluation needs true labels and weights")
    value, mapping = matched_ile(ds, model.theta, mdp, features, IleSpec(cfg.ile.p_norm, cfg.ile.value_mode))
    metrics = {"method": model.method, "ile": value, "clusters": model.num_clusters,
               "accuracy": assignment_accuracy(model.assignments, ds.true_labels),
               "mapping": {str(k): v for k, v in mapping.items()}, "converged": converged(model)}
    text = json.dumps(metrics, sort_keys=True)
    print(text)
    if out:
        _write(out, json.dumps({**metrics, "run_config": cfg.to_dict()}, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_experiment(cfg: RunConfig, out: Optional[str], jobs: int) -> int:
    e = cfg.experiment
    spec = ExperimentSpec(dataset_sizes=tuple(e.dataset_sizes), runs_per_point=e.runs_per_point,
                          methods=tuple(e.methods), base_seed=cfg.seed, domain=cfg.domain,
                          mix=None if cfg.generate.mix is None else tuple(cfg.generate.mix),
                          expert=cfg.generate.expert, expert_beta=cfg.generate.beta,
                          p_norm=cfg.ile.p_norm, value_mode=cfg.ile.value_mode,
                          record_timing=e.record_timing, method_params=dict(cfg.params))
    path = Path(out or cfg.paths.results)
    _write(path.with_name(path.name + ".config.yaml"),
           yaml.safe_dump({"run_config": cfg.to_dict(), "experiment": spec_to_dict(spec)}, sort_keys=True))

    def progress(row):
        print(f"{row['method']} N={row['size']} run={row['run']} {row['status']}", file=sys.stderr)

    rows = run_experiment(spec, None, jobs=jobs, progress=progress)
    from .evaluation import rows_to_csv
    _write(path, rows_to_csv(rows))
    failed = sum(1 for r in rows if r["kind"] == "run" and r["status"] != "ok")
    print(f"wrote {path}: {sum(r['kind'] == 'run' for r in rows)} runs, {failed} failed")
    return EXIT_OK


def cmd_sort(cfg: RunConfig, out: Optional[str]) -> int:
    if cfg.domain != "onion":
        raise ConfigError("sort needs domain: onion")
    mdp, features, W = _domain(cfg)
    s = cfg.sort
    episode = SortEpisodeConfig(s.num_onions, s.num_blemished, s.inspect_accuracy, s.roll_accuracy,
                                s.time_budget, s.episode_seed)
    if s.policy == "experts":
        named = [("expert-pick-inspect-place", W[0]), ("expert-roll-pick-place", W[1])]
    else:
        model = load_model(cfg.paths.model)
        if model.num_features != features.num_features:
            raise ConfigError(f"model has K={model.num_features}, onion domain has K={features.num_features}")
        named = [(f"{model.method}-cluster-{d}", th) for d, th in enumerate(model.theta)]
    lines = ["policy,tp,fp,fn,tn,precision,recall"]
    for name, theta in named:
        c = simulate_sorting(greedy_for(mdp, features, theta), episode)
        P, R = precision_recall(c)
        lines.append(f"{name},{c.tp},{c.fp},{c.fn},{c.tn},{P:.6g},{R:.6g}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if out:
        _write(out, text)
    return EXIT_OK


# --- entry point ----------------------------------------------------------------

def _describe_keys() -> str:
    def block(cls, prefix=""):
        out = []
        for f in fields(cls):
            if f.name in _BLOCKS:
                out.extend(block(_BLOCKS[f.name], f"{f.name}."))
            elif f.name == "params":
                for m, mcls in CONFIG_TYPES.items():
                    names = ", ".join(g.name for g in fields(mcls) if g.name != "seed")
                    out.append(f"  params.{m}: {names}")
            else:
                default = getattr(cls(), f.name)
                out.append(f"  {prefix}{f.name} (default {default!r})")
        return out
    return "config keys (YAML):\n" + "\n".join(block(RunConfig)) + \
        "\n\nexit codes: 0 ok, 2 config error, 3 data error, 4 convergence failure"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtirl", description="Multi-task MaxEnt IRL and baselines.",
                                epilog=_describe_keys(), formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=("generate", "train", "eval", "experiment", "sort"))
    p.add_argument("--config", help="YAML run config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--jobs", type=int, default=1, help="concurrent runs for experiment")
    p.add_argument("--out", help="override the output path")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.command == "experiment":
            return cmd_experiment(cfg, args.out, args.jobs)
        return {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
                "sort": cmd_sort}[args.command](cfg, args.out)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except DataError as exc:
        return _fail("data", exc, EXIT_DATA)
    except ConvergenceError as exc:
        return _fail("convergence", exc, EXIT_CONVERGENCE)
    except (InvalidArgument, MtirlError) as exc:
        return _fail("config", exc, EXIT_CONFIG)


def _fail(kind: str, exc: Exception, code: int) -> int:
    msg = " ".join(str(exc).split())
    print(f"mtirl: error[{kind}]: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
