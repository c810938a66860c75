import json

import numpy as np
import pytest

from duse.checkpoint import load_checkpoint, read_csv, save_checkpoint, write_json
from duse.cli import main
from duse.config import RunConfig, parse_config
from duse.errors import ConfigurationError, ContractError


# -- config ----------------------------------------------------------------------

def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("")
    assert parse_config(path, env={}) == RunConfig()


def test_beta_from_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# fusion weight\nlsea.beta = 0.7\nhtpc.strategy = Deep\n")
    cfg = parse_config(path, env={})
    assert cfg.lsea.beta == 0.7 and cfg.htpc.strategy == "Deep"


def test_deep_large_profile_rejected():
    with pytest.raises(ConfigurationError, match="ViT-L"):
        parse_config(None, ["encoder.profile=large", "htpc.strategy=Deep"], env={})
    cfg = parse_config(None, ["encoder.profile=large", "htpc.strategy=Deep"], force_deep=True, env={})
    assert cfg.htpc.force_deep


@pytest.mark.parametrize("line,key", [
    ("lsea.dropout=0.1", "lsea.dropout"),
    ("lsea.beta=1.5", "lsea.beta"),
    ("train.epochs=many", "train.epochs"),
    ("htpc.strategy=Medium", "strategy"),
])
def test_bad_keys_name_the_key(line, key):
    with pytest.raises(ConfigurationError, match=key.replace(".", r"\.")):
        parse_config(None, [line], env={})


def test_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("train.seed = 3\ntrain.lr = 0.01\n")
    cfg = parse_config(path, ["train.lr=0.02"], env={"DUSE_SEED": "11"})
    assert cfg.train.lr == 0.02 and cfg.train.seed == 11


def test_header_tracks_config():
    a, b = RunConfig(), RunConfig().replace(**{"lsea.beta": 0.5})
    assert a.header().startswith("# duse config=") and a.header().endswith("seed=7")
    assert a.config_hash() != b.config_hash()
    assert a.config_hash() == RunConfig().replace(**{"paths.out": "elsewhere"}).config_hash()


# -- checkpoint ------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path, rng):
    tensors = {"a": rng.normal(size=(2, 3)), "b.c": rng.normal(size=4), "s": np.array(1.5)}
    save_checkpoint(tmp_path / "x.bin", tensors, "# duse config=abc seed=1", {"k": "v"})
    back, manifest = load_checkpoint(tmp_path / "x.bin")
    assert set(back) == set(tensors)
    assert all(back[k].tobytes() == np.asarray(v).tobytes() for k, v in tensors.items())
    assert manifest["meta"] == {"k": "v"} and "config=abc" in manifest["header"]


def test_checkpoint_errors(tmp_path):
    with pytest.raises(ContractError):
        load_checkpoint(tmp_path / "missing.bin")
    (tmp_path / "junk.bin").write_text("hello\n")
    with pytest.raises(ContractError):
        load_checkpoint(tmp_path / "junk.bin")


def test_json_artifact_is_valid(tmp_path):
    write_json(tmp_path / "m.json", "# duse config=abc seed=1", {"war": 0.5})
    text = (tmp_path / "m.json").read_text()
    assert text.splitlines()[0].startswith('{"header": "# duse config=abc seed=1"')
    assert json.loads(text) == {"header": "# duse config=abc seed=1", "war": 0.5}


# -- cli -------------------------------------------------------------------------

def small_args(cfg):
    return [f"--set={k}={v}" for k, v in (
        ("train.clips_per_class", cfg.train.clips_per_class),
        ("train.eval_clips_per_class", cfg.train.eval_clips_per_class),
        ("train.epochs", cfg.train.epochs),
        ("train.frames", cfg.train.frames),
        ("train.batch", cfg.train.batch),
    )] + ["--out", cfg.paths.out]


def test_train_then_eval(small_run_cfg, capsys):
    args = small_args(small_run_cfg)
    assert main(["train", *args]) == 0
    header, rows = read_csv(f"{small_run_cfg.paths.out}/metrics.csv")
    assert header == small_run_cfg.header()
    capsys.readouterr()
    assert main(["eval", *args]) == 0
    war = float(capsys.readouterr().out.split("war=")[1].split()[0])
    assert war == float(rows[-1]["war"])
    metrics = json.loads(open(f"{small_run_cfg.paths.out}/metrics.json").read())
    assert metrics["header"] == header and metrics["final"]["war"] == war


def test_train_artifacts_deterministic(small_run_cfg, tmp_path):
    args = small_args(small_run_cfg)
    main(["train", *args])
    first = {n: open(f"{small_run_cfg.paths.out}/{n}", "rb").read()
             for n in ("metrics.csv", "metrics.json", "confusion.csv", "checkpoint.bin")}
    other = str(tmp_path / "again")
    main(["train", *args[:-1], other])
    for name, data in first.items():
        assert open(f"{other}/{name}", "rb").read() == data, name


def test_ablate_beta_csv(small_run_cfg):
    args = small_args(small_run_cfg)
    assert main(["ablate", "--grid", "beta", *args]) == 0
    header, rows = read_csv(f"{small_run_cfg.paths.out}/ablation.csv")
    assert header.startswith("# duse config=")
    assert [r["variant"] for r in rows] == ["beta=0.3", "beta=0.5", "beta=0.7", "beta=0.9"]


def test_dump_writes_traces(small_run_cfg):
    args = small_args(small_run_cfg)
    main(["train", *args])
    assert main(["dump", *args]) == 0
    lines = open(f"{small_run_cfg.paths.out}/trace.csv").read().splitlines()
    assert lines[0].startswith("# duse config=") and lines[1] == "clip_id,frame,w"
    assert "clip_id,head,class,alpha" in lines
    header, rows = read_csv(f"{small_run_cfg.paths.out}/embed.csv")
    assert len(rows) == 4 * small_run_cfg.train.eval_clips_per_class


def test_eval_missing_checkpoint(tmp_path, capsys):
    assert main(["eval", "--out", str(tmp_path / "nothing")]) != 0
    assert "does not exist" in capsys.readouterr().err


def test_cli_config_error_exit(capsys):
    assert main(["train", "--set", "lsea.beta=2"]) != 0
    assert "lsea.beta" in capsys.readouterr().err


def test_cli_deep_large_needs_force(tmp_path):
    args = ["--set", "encoder.profile=large", "--set", "htpc.strategy=Deep", "--out", str(tmp_path)]
    assert main(["eval", *args]) == 2


def test_gradcheck_command(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out
