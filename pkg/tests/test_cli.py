import json

import pytest
import yaml

from mtirl.cli import RunConfig, build_parser, main, parse_config
from mtirl.errors import ConfigError
from mtirl.modelio import FittedModel, load_model
from mtirl.trajectories import load_dataset


def write_config(tmp_path, **overrides):
    cfg = {"paths": {"dataset": str(tmp_path / "d.jsonl"), "model": str(tmp_path / "m.json"),
                     "results": str(tmp_path / "r.csv")},
           "generate": {"n": 8}}
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(cfg.get(k), dict):
            cfg[k] = {**cfg[k], **v}
        else:
            cfg[k] = v
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


FAST_ME = {"me-mtirl": {"max_iters": 50, "refit_max_iters": 300}}


def test_generate_shape_and_determinism(tmp_path, capsys):
    cfg = write_config(tmp_path, seed=1)
    assert main(["generate", "--config", cfg]) == 0
    first = (tmp_path / "d.jsonl").read_bytes()
    ds, header = load_dataset(tmp_path / "d.jsonl")
    assert len(ds) == 8 and len(first.decode().splitlines()) == 9
    assert header["num_states"] == 120
    assert "N=8" in capsys.readouterr().out
    assert main(["generate", "--config", cfg]) == 0
    assert (tmp_path / "d.jsonl").read_bytes() == first


def test_seed_flag_overrides(tmp_path):
    cfg = write_config(tmp_path, seed=1)
    main(["generate", "--config", cfg, "--out", str(tmp_path / "a.jsonl")])
    main(["generate", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "b.jsonl")])
    assert (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "b.jsonl").read_bytes()


def test_single_expert_mix(tmp_path):
    cfg = write_config(tmp_path, generate={"mix": [1.0, 0.0]})
    assert main(["generate", "--config", cfg]) == 0
    ds, _ = load_dataset(tmp_path / "d.jsonl")
    assert set(ds.true_labels.tolist()) == {0}


def test_train_eval_round_trip(tmp_path, capsys):
    cfg = write_config(tmp_path, domain="toy-chain", params=FAST_ME, generate={"n": 12, "beta": 5.0})
    assert main(["generate", "--config", cfg]) == 0
    assert main(["train", "--config", cfg]) == 0
    model = load_model(tmp_path / "m.json")
    assert FittedModel.from_dict(json.loads((tmp_path / "m.json").read_text())) == model
    assert model.diagnostics["run_config"]["domain"] == "toy-chain"
    capsys.readouterr()
    assert main(["eval", "--config", cfg, "--out", str(tmp_path / "metrics.json")]) == 0
    metrics = json.loads(capsys.readouterr().out)
    assert metrics["ile"] >= 0
    assert json.loads((tmp_path / "metrics.json").read_text())["run_config"]["method"] == "me-mtirl"


def test_require_convergence_exit_code(tmp_path):
    cfg = write_config(tmp_path, domain="toy-chain", require_convergence=True,
                       params={"em-mlirl": {"max_em_iters": 1, "tol": 1e-12}}, method="em-mlirl")
    main(["generate", "--config", cfg])
    assert main(["train", "--config", cfg]) == 4
    assert (tmp_path / "m.json").exists()


def test_experiment_writes_csv_and_config(tmp_path):
    cfg = write_config(tmp_path, domain="toy-chain", params=FAST_ME,
                       experiment={"dataset_sizes": [4], "runs_per_point": 1, "methods": ["me-mtirl"]})
    assert main(["experiment", "--config", cfg]) == 0
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert len(lines) == 1 + 1 + 1
    echoed = yaml.safe_load((tmp_path / "r.csv.config.yaml").read_text())
    assert echoed["experiment"]["dataset_sizes"] == [4]


def test_sort_expert_rows(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["sort", "--config", cfg]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1].startswith("expert-pick-inspect-place,4,0,8,12,100,")
    assert out[2].startswith("expert-roll-pick-place,8,4,4,8,")


def test_unknown_key_is_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, bogus=1)
    assert main(["generate", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and "error[config]" in err and "bogus" in err


@pytest.mark.parametrize("data", [
    {"generate": {"size": 3}},
    {"params": {"me-mtirl": {"learning_rate": 1}}},
    {"params": {"svm": {}}},
    {"domain": "mars"},
    {"ile": {"p_norm": 0.1}},
    {"sort": {"policy": "random"}},
])
def test_parse_config_rejects(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_defaults_parse():
    assert parse_config({}) == RunConfig()


def test_malformed_dataset_names_line(tmp_path, capsys):
    cfg = write_config(tmp_path)
    main(["generate", "--config", cfg])
    lines = (tmp_path / "d.jsonl").read_text().splitlines()
    lines[3] = '{"states": [0], "actions": '
    (tmp_path / "d.jsonl").write_text("\n".join(lines) + "\n")
    assert main(["train", "--config", cfg]) == 3
    assert "d.jsonl:4:" in capsys.readouterr().err


def test_dimension_mismatch_is_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path)
    main(["generate", "--config", cfg])
    other = write_config(tmp_path, domain="toy-chain")
    assert main(["train", "--config", other]) == 2


def test_unwritable_path_names_path(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = write_config(tmp_path)
    assert main(["generate", "--config", cfg, "--out", str(blocker / "x.jsonl")]) == 3
    assert str(blocker / "x.jsonl") in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["generate", "--config", str(tmp_path / "none.yaml")]) == 2


def test_help_lists_every_key():
    text = build_parser().format_help()
    for key in ("domain", "method", "seed", "generate.n", "generate.mix", "paths.model",
                "experiment.runs_per_point", "sort.time_budget", "ile.value_mode",
                "params.me-mtirl", "prune_threshold", "params.dpm-birl", "dictionary"):
        assert key in text
