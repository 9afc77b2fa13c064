import json
import pathlib

import numpy as np
import pytest

from camdot import modelio
from camdot.cli import COST_TABLE_ENV, main
from camdot.modelio import Dataset

from conftest import tiny_conv_model


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv(COST_TABLE_ENV, raising=False)


@pytest.fixture(scope="module")
def cli_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(31)
    model = tiny_conv_model(rng)
    model_path = root / "tiny.dcam"
    modelio.write_model(model, str(model_path))
    images = rng.random((10, 1, 8, 8)).astype(np.float32)
    labels = rng.integers(0, 4, 10).astype(np.int64)
    data_path = root / "tiny.dcds"
    modelio.write_dataset(Dataset(images=images, labels=labels, num_classes=4),
                          str(data_path))
    return {"root": root, "model": str(model_path), "data": str(data_path)}


def _run_args(cli_files, prefix, *extra):
    return ["run", "--model", cli_files["model"], "--data", cli_files["data"],
            "--hash", "uniform:256", "--out-prefix", str(prefix), *extra]


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def test_run_happy_path(cli_files, tmp_path, capsys):
    prefix = tmp_path / "out"
    assert main(_run_args(cli_files, prefix)) == 0
    out = capsys.readouterr().out
    assert "top-1" in out and "speedup" in out
    summary = json.loads((tmp_path / "out_summary.json").read_text())
    assert summary["images"] == 10
    assert 0.0 <= summary["top1_percent"] <= 100.0
    assert summary["dataflow"] == "activation_stationary"
    assert summary["hash_lengths"] == {"0": 256, "2": 256}
    csv_text = (tmp_path / "out_cost.csv").read_text()
    assert csv_text.startswith("layer,dataflow,rows,word_bits,searches,writes,"
                               "cycles,utilization,energy_pj,baseline_cycles")
    assert csv_text.strip().split("\n")[-1].startswith("total,")


def test_run_outputs_reproducible(cli_files, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(_run_args(cli_files, a)) == 0
    assert main(_run_args(cli_files, b)) == 0
    assert (tmp_path / "a_cost.csv").read_bytes() == \
        (tmp_path / "b_cost.csv").read_bytes()
    assert (tmp_path / "a_summary.json").read_bytes() == \
        (tmp_path / "b_summary.json").read_bytes()


def test_run_limit_and_threads(cli_files, tmp_path):
    one = tmp_path / "one"
    assert main(_run_args(cli_files, one, "--limit", "3")) == 0
    assert json.loads((tmp_path / "one_summary.json").read_text())["images"] == 3
    four = tmp_path / "four"
    assert main(_run_args(cli_files, four, "--limit", "3",
                          "--threads", "4")) == 0
    a = json.loads((tmp_path / "one_summary.json").read_text())
    b = json.loads((tmp_path / "four_summary.json").read_text())
    assert a == b                                  # thread count is invisible


def test_run_exact_dataflows_agree(cli_files, tmp_path):
    ws, as_ = tmp_path / "ws", tmp_path / "as"
    assert main(_run_args(cli_files, ws, "--exact", "--dataflow", "ws")) == 0
    assert main(_run_args(cli_files, as_, "--exact", "--dataflow", "as")) == 0
    top_ws = json.loads((tmp_path / "ws_summary.json").read_text())["top1_percent"]
    top_as = json.loads((tmp_path / "as_summary.json").read_text())["top1_percent"]
    assert top_ws == top_as
    # schedules differ though: WS stores kernels, AS stores patches
    ws_sum = json.loads((tmp_path / "ws_summary.json").read_text())
    as_sum = json.loads((tmp_path / "as_summary.json").read_text())
    assert ws_sum["writes"] != as_sum["writes"]


def test_cost_matches_run_accounting(cli_files, tmp_path):
    run_prefix = tmp_path / "r"
    assert main(_run_args(cli_files, run_prefix, "--limit", "4")) == 0
    cost_out = tmp_path / "c.csv"
    assert main(["cost", "--model", cli_files["model"], "--hash", "uniform:256",
                 "--limit", "4", "--out", str(cost_out)]) == 0
    assert cost_out.read_text() == (tmp_path / "r_cost.csv").read_text()


def test_run_rejects_mismatched_dataset(cli_files, tmp_path):
    rng = np.random.default_rng(1)
    bad = tmp_path / "bad.dcds"
    modelio.write_dataset(
        Dataset(images=rng.random((2, 1, 5, 5)).astype(np.float32),
                labels=np.zeros(2, dtype=np.int64), num_classes=4), str(bad))
    code = main(["run", "--model", cli_files["model"], "--data", str(bad),
                 "--hash", "uniform:256", "--out-prefix",
                 str(tmp_path / "x")])
    assert code == 1


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------

def test_exit_codes(cli_files, tmp_path, capsys):
    model, data = cli_files["model"], cli_files["data"]
    px = str(tmp_path / "p")
    assert main([]) == 1                                        # no subcommand
    assert main(["frobnicate"]) == 1
    assert main(["run", "--model", model, "--data", data,
                 "--hash", "uniform:abc", "--out-prefix", px]) == 1
    assert main(["run", "--model", model, "--data", data,
                 "--hash", "list:256", "--out-prefix", px]) == 1  # 1 of 2 layers
    assert main(["run", "--model", model, "--data", data,
                 "--hash", "uniform:300", "--out-prefix", px]) == 1
    assert main(["run", "--model", model, "--data", data,
                 "--rows", "100", "--out-prefix", px]) == 1
    assert main(["run", "--model", model, "--data", data, "--limit", "0",
                 "--hash", "uniform:256", "--out-prefix", px]) == 1
    assert main(["run", "--model", str(tmp_path / "ghost.dcam"),
                 "--data", data, "--out-prefix", px]) == 2
    assert main(["run", "--model", model, "--data", str(tmp_path / "g.dcds"),
                 "--out-prefix", px]) == 2
    assert main(["run", "--model", model, "--data", data,
                 "--hash", "tune:" + str(tmp_path / "ghost.json"),
                 "--out-prefix", px]) == 2
    capsys.readouterr()                                         # drain stderr


def test_corrupt_model_is_usage_error(cli_files, tmp_path):
    bad = tmp_path / "corrupt.dcam"
    bad.write_bytes(b"DCAMxxxxgarbage")
    assert main(["run", "--model", str(bad), "--data", cli_files["data"],
                 "--out-prefix", str(tmp_path / "p")]) == 1


def test_version_and_help(capsys):
    assert main(["--version"]) == 0
    assert "camdot" in capsys.readouterr().out
    assert main(["--help"]) == 0
    assert "dotbench" in capsys.readouterr().out


# ---------------------------------------------------------------------------
# cost table plumbing
# ---------------------------------------------------------------------------

def test_cost_table_env_and_flag(cli_files, tmp_path, monkeypatch):
    env_table = tmp_path / "env.cfg"
    env_table.write_text("search_energy_pj.64.256 = 1.5\n")
    flag_table = tmp_path / "flag.cfg"
    flag_table.write_text("search_energy_pj.64.256 = 2.0\n")

    base = tmp_path / "base"
    assert main(_run_args(cli_files, base)) == 0
    energy_default = json.loads(
        (tmp_path / "base_summary.json").read_text())["energy_pj"]

    monkeypatch.setenv(COST_TABLE_ENV, str(env_table))
    enved = tmp_path / "env"
    assert main(_run_args(cli_files, enved)) == 0
    energy_env = json.loads(
        (tmp_path / "env_summary.json").read_text())["energy_pj"]
    searches = json.loads(
        (tmp_path / "env_summary.json").read_text())["searches"]
    assert energy_env == pytest.approx(
        energy_default + searches * (1.5 - 1.28))

    flagged = tmp_path / "flag"
    assert main(_run_args(cli_files, flagged,
                          "--cost-table", str(flag_table))) == 0
    energy_flag = json.loads(
        (tmp_path / "flag_summary.json").read_text())["energy_pj"]
    assert energy_flag == pytest.approx(
        energy_default + searches * (2.0 - 1.28))   # flag wins over env


def test_bad_cost_table_is_usage_error(cli_files, tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("search_energy_pj.64.256 = 9999\n")
    assert main(_run_args(cli_files, tmp_path / "p",
                          "--cost-table", str(bad))) == 1


# ---------------------------------------------------------------------------
# dotbench
# ---------------------------------------------------------------------------

def test_dotbench_writes_csv(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    assert main(["dotbench", "--lengths", "64,128", "--trials", "50",
                 "--dim", "8", "--out", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0].startswith("label,hash_length,cosine,trials")
    # 2 lengths x 2 cosines + 2 reference rows
    assert len(lines) == 1 + 4 + 2
    assert sum(1 for l in lines if l.startswith("reference,")) == 2
    assert "reference pair" in capsys.readouterr().out


def test_dotbench_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["dotbench", "--lengths", "64", "--trials", "40",
                     "--dim", "8", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_dotbench_zero_trials_header_only(tmp_path):
    out = tmp_path / "empty.csv"
    assert main(["dotbench", "--trials", "0", "--out", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert len(lines) == 1


def test_dotbench_rejects_bad_args(tmp_path):
    out = str(tmp_path / "x.csv")
    assert main(["dotbench", "--trials", "-1", "--out", out]) == 1
    assert main(["dotbench", "--lengths", "64,abc", "--out", out]) == 1
    assert main(["dotbench", "--dim", "0", "--out", out]) == 1


# ---------------------------------------------------------------------------
# tune
# ---------------------------------------------------------------------------

def test_tune_then_run_pipeline(cli_files, tmp_path, capsys):
    tune_out = tmp_path / "tune.json"
    sens_out = tmp_path / "sens.csv"
    assert main(["tune", "--model", cli_files["model"], "--data",
                 cli_files["data"], "--tolerance", "100", "--calibration", "8",
                 "--limit", "8", "--out", str(tune_out),
                 "--sensitivity-csv", str(sens_out)]) == 0
    payload = json.loads(tune_out.read_text())
    assert payload["hash_lengths"] == {"0": 256, "2": 256}  # huge tolerance
    assert sens_out.read_text().startswith("layer,hash_length,accuracy")
    capsys.readouterr()

    prefix = tmp_path / "tuned"
    assert main(["run", "--model", cli_files["model"], "--data",
                 cli_files["data"], "--hash", "tune:" + str(tune_out),
                 "--out-prefix", str(prefix)]) == 0
    summary = json.loads((tmp_path / "tuned_summary.json").read_text())
    assert summary["hash_lengths"] == {"0": 256, "2": 256}


def test_tune_result_rejected_for_other_model(cli_files, tmp_path):
    mismatched = tmp_path / "wrong.json"
    mismatched.write_text(json.dumps({
        "hash_lengths": {"0": 256},                # model has dot layers 0, 2
        "baseline_accuracy": 1.0, "achieved_accuracy": 1.0,
        "holdout_accuracy": None, "tolerance": 1.0,
        "total_bits": 256, "uniform_max_bits": 1024,
    }))
    assert main(["run", "--model", cli_files["model"], "--data",
                 cli_files["data"], "--hash", "tune:" + str(mismatched),
                 "--out-prefix", str(tmp_path / "p")]) == 1


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------

def test_plot_outputs(cli_files, tmp_path):
    pytest.importorskip("matplotlib")
    plot_dir = tmp_path / "plots"
    assert main(_run_args(cli_files, tmp_path / "p",
                          "--plot", str(plot_dir))) == 0
    assert (plot_dir / "run_cost.png").stat().st_size > 0
    assert main(["dotbench", "--lengths", "64,128", "--trials", "30",
                 "--dim", "8", "--out", str(tmp_path / "b.csv"),
                 "--plot", str(plot_dir)]) == 0
    assert (plot_dir / "dotbench_error.png").stat().st_size > 0
