import subprocess
import sys

import pytest

from ugcem import cli
from ugcem.config import format_config, load_config

TINY = {
    "collect_steps": "300",
    "ensemble_size": "2",
    "epochs": "2",
    "hidden_layers": "2",
    "hidden_size": "16",
    "horizon": "3",
    "iterations": "2",
    "population": "10",
    "particles": "4",
    "beta": "0,1",
    "seeds": "0",
    "episodes": "1",
    "max_steps": "3",
    "heatmap_res1": "2",
    "heatmap_res2": "2",
    "heatmap_actions": "10",
}


def write_config(path, **extra):
    values = dict(TINY)
    values.update({k: str(v) for k, v in extra.items()})
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
    return str(path)


@pytest.fixture()
def workspace(tmp_path):
    cfg = write_config(
        tmp_path / "run.cfg",
        dataset=tmp_path / "cartpole.dataset",
        model=tmp_path / "cartpole.ensemble",
        out=tmp_path / "out",
    )
    return tmp_path, cfg


def test_collect_writes_header_and_is_deterministic(workspace):
    tmp, cfg = workspace
    assert cli.main(["collect", "--config", cfg]) == 0
    header = (tmp / "cartpole.dataset").read_text().splitlines()[0]
    assert header.startswith("#ugcem-v1 env=cartpole obs_dim=4 act_dim=1")
    first = (tmp / "cartpole.dataset").read_bytes()
    assert cli.main(["collect", "--config", cfg]) == 0
    assert (tmp / "cartpole.dataset").read_bytes() == first


def test_collect_filter_disabled_keeps_everything(workspace, tmp_path):
    tmp, _ = workspace
    cfg = write_config(
        tmp_path / "nofilter.cfg",
        dataset=tmp_path / "raw.dataset",
        model=tmp_path / "m.ensemble",
        out=tmp_path / "out2",
        filter_enabled="false",
    )
    assert cli.main(["collect", "--config", cfg]) == 0
    n_lines = len((tmp_path / "raw.dataset").read_text().splitlines())
    assert n_lines == 1 + 300


def test_train_eval_sweep_heatmap_trace_pipeline(workspace):
    tmp, cfg = workspace
    assert cli.main(["collect", "--config", cfg]) == 0
    assert cli.main(["train", "--config", cfg]) == 0
    loss_lines = (tmp / "out" / "loss_history.csv").read_text().splitlines()
    assert loss_lines[0] == "member,epoch,nll"
    assert len(loss_lines) == 1 + 2 * 2  # members x epochs
    assert (tmp / "cartpole.ensemble").exists()

    assert cli.main(["eval", "--config", cfg, "--beta", "0"]) == 0
    results = (tmp / "out" / "results.csv").read_text().splitlines()
    assert results[0] == "env,beta,seed,episode,return,cost"
    assert len(results) == 2  # one seed, one episode

    assert cli.main(["sweep", "--config", cfg]) == 0
    agg = (tmp / "out" / "aggregate.csv").read_text().splitlines()
    assert len(agg) == 1 + 2  # two betas in the tiny grid

    assert cli.main(["heatmap", "--config", cfg]) == 0
    heat = (tmp / "out" / "heatmap.csv").read_text().splitlines()
    assert heat[0] == "dim1,dim2,omega"
    assert len(heat) == 1 + 4

    assert cli.main(["trace", "--config", cfg]) == 0
    trace = (tmp / "out" / "trace.csv").read_text().splitlines()
    assert len(trace) == 1 + 2 * 10  # iterations x population


def test_sweep_default_beta_grid_has_five_rows(workspace, tmp_path):
    tmp, cfg = workspace
    assert cli.main(["collect", "--config", cfg]) == 0
    assert cli.main(["train", "--config", cfg]) == 0
    cfg5 = write_config(
        tmp_path / "grid5.cfg",
        dataset=tmp / "cartpole.dataset",
        model=tmp / "cartpole.ensemble",
        out=tmp_path / "out5",
        beta="0,0.5,1,2,5",
        max_steps="1",
    )
    assert cli.main(["sweep", "--config", cfg5]) == 0
    agg = (tmp_path / "out5" / "aggregate.csv").read_text().splitlines()
    assert len(agg) == 1 + 5


def test_eval_beta_zero_equals_pets_baseline(workspace, tmp_path):
    tmp, cfg = workspace
    assert cli.main(["collect", "--config", cfg]) == 0
    assert cli.main(["train", "--config", cfg]) == 0
    assert cli.main(["eval", "--config", cfg, "--beta", "0", "--out", str(tmp / "beta0")]) == 0
    pets_cfg = write_config(
        tmp_path / "pets.cfg",
        dataset=tmp / "cartpole.dataset",
        model=tmp / "cartpole.ensemble",
        out=tmp / "pets",
        pets_baseline="true",
        beta="0",
    )
    assert cli.main(["eval", "--config", pets_cfg]) == 0
    a = (tmp / "beta0" / "results.csv").read_bytes()
    b = (tmp / "pets" / "results.csv").read_bytes()
    assert a == b


def test_echo_reproduces_outputs_byte_for_byte(workspace, tmp_path):
    tmp, cfg = workspace
    assert cli.main(["collect", "--config", cfg]) == 0
    dataset = (tmp / "cartpole.dataset").read_bytes()
    echo = tmp / "out" / "config_echo.cfg"
    assert echo.exists()
    assert cli.main(["collect", "--config", str(echo)]) == 0
    assert (tmp / "cartpole.dataset").read_bytes() == dataset
    # echo parses to the identical effective config
    assert format_config(load_config(str(echo))) == echo.read_text()


def test_unknown_config_key_rejected(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("populaton = 100\n")  # typo
    assert cli.main(["sweep", "--config", str(bad)]) == 2


def test_bad_value_rejected(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("population = many\n")
    assert cli.main(["sweep", "--config", str(bad)]) == 2


def test_unknown_env_rejected(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("env = lunarlander\n")
    assert cli.main(["collect", "--config", str(bad)]) == 2


def test_missing_dataset_exit_code(workspace):
    _, cfg = workspace
    assert cli.main(["train", "--config", cfg]) == 3


def test_missing_model_exit_code(workspace):
    _, cfg = workspace
    assert cli.main(["eval", "--config", cfg]) == 3


def test_malformed_model_exit_code(workspace, tmp_path):
    tmp, cfg = workspace
    (tmp / "cartpole.ensemble").write_text("garbage\n")
    assert cli.main(["sweep", "--config", cfg]) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
def test_numerical_failure_exit_code(workspace, tmp_path):
    tmp, cfg = workspace
    assert cli.main(["collect", "--config", cfg]) == 0
    blowup = write_config(
        tmp_path / "blowup.cfg",
        dataset=tmp / "cartpole.dataset",
        model=tmp_path / "blown.ensemble",
        out=tmp_path / "blowout",
        lr="1e9",
        epochs="3",
    )
    assert cli.main(["train", "--config", blowup]) == 4


def test_pendulum_preset_pipeline(tmp_path):
    cfg = write_config(
        tmp_path / "pendulum.cfg",
        env="pendulum",
        dataset=tmp_path / "pendulum.dataset",
        model=tmp_path / "pendulum.ensemble",
        out=tmp_path / "out",
        heatmap_dim2="1",
        heatmap_lo2="-1",
        heatmap_hi2="1",
    )
    assert cli.main(["collect", "--config", cfg]) == 0
    header = (tmp_path / "pendulum.dataset").read_text().splitlines()[0]
    assert "env=pendulum obs_dim=3 act_dim=1" in header
    assert cli.main(["train", "--config", cfg]) == 0
    assert cli.main(["eval", "--config", cfg, "--beta", "1"]) == 0
    results = (tmp_path / "out" / "results.csv").read_text().splitlines()
    assert results[1].startswith("pendulum,1,")


def test_config_round_trip_through_format():
    cfg = load_config(None, {"beta": (0.0, 2.5), "env": "pendulum"})
    text = format_config(cfg)
    assert "beta = 0,2.5" in text
    assert "env = pendulum" in text


def test_console_script_runs():
    out = subprocess.run(
        [sys.executable, "-m", "ugcem.cli", "collect", "--help"],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0
    assert "--config" in out.stdout
