import csv
import io
import json

import pytest

from pudqueue.cli import cli
from pudqueue.run_data import LOG_FILE_NAME, OUTPUT_DIR_ENV, read_rows


@pytest.fixture(autouse=True)
def _output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))


def _exit_code(args):
    with pytest.raises(SystemExit) as e:
        cli(args)
    return e.value.code


def test_analyze_json(tmp_path, capsys):
    cli(["analyze", "--model", "mg1", "--lambda", "0.5", "--mu", "1"])
    data = json.loads(capsys.readouterr().out)
    assert data["model"] == "mg1"
    assert data["p_correct"] == pytest.approx(2 / 3)
    assert data["total_pud"] == pytest.approx(6 - 4 / 27)
    assert (tmp_path / LOG_FILE_NAME).exists()


def test_analyze_csv(capsys):
    cli(
        [
            "analyze",
            "--model",
            "mg11",
            "--lambda",
            "1",
            "--service",
            "exp:mu=1",
            "--format",
            "csv",
        ]
    )
    (row,) = csv.DictReader(io.StringIO(capsys.readouterr().out))
    assert float(row["p_missed"]) == pytest.approx(0.5)
    assert "missed_by_class_I1" in row


def test_analyze_log_dir(tmp_path, capsys):
    out = tmp_path / "logs"
    cli(["analyze", "--model", "mm1k", "--lambda", "1", "--mu", "1", "--k", "3",
         "--out", str(out)])
    assert json.loads(capsys.readouterr().out)["p_missed"] == pytest.approx(0.25)
    assert (out / LOG_FILE_NAME).exists()


def test_unstable_exits_2(capsys):
    args = ["analyze", "--model", "mg1", "--lambda", "1.5", "--service", "exp:mu=1"]
    assert _exit_code(args) == 2
    assert "ERROR" in capsys.readouterr().err
    assert _exit_code(["simulate", "--lambda", "1.5", "--mu", "1"]) == 2


@pytest.mark.parametrize(
    "args",
    [
        ["analyze", "--lambda", "0.5"],
        ["analyze", "--lambda", "0.5", "--service", "weibull:k=2"],
        ["analyze", "--lambda", "0.5", "--mu", "1", "--policy", "delay"],
        ["analyze", "--model", "mm1k", "--lambda", "0.5", "--mu", "1"],
        ["analyze", "--lambda", "0.5", "--mu", "-1"],
        ["simulate", "--lambda", "0.5", "--mu", "1", "--packets", "0"],
        ["sweep", "--model", "mg1", "--vary", "K", "--from", "1", "--to", "3",
         "--steps", "3"],
        ["figure", "--id", "num7"],
        ["bogus"],
    ],
)
def test_invalid_arguments_exit_1(args):
    assert _exit_code(args) == 1


def test_simulate_json(capsys):
    cli(["simulate", "--model", "mg11", "--lambda", "1", "--mu", "1",
         "--packets", "2000", "--batches", "10", "--policy", "power:k=2"])
    data = json.loads(capsys.readouterr().out)
    assert data["generated"] == 2000
    assert data["policy"] == "power:k=2"
    assert data["residual"] == 0


def test_simulate_csv(capsys):
    cli(["simulate", "--lambda", "0.5", "--mu", "1", "--packets", "2000",
         "--batches", "10", "--format", "csv"])
    (row,) = csv.DictReader(io.StringIO(capsys.readouterr().out))
    assert row["model"] == "mg1"
    assert "stderr_p_correct" in row


def test_compare_csv(capsys):
    cli(["compare", "--model", "mg11", "--lambda", "1", "--mu", "1",
         "--packets", "5000", "--batches", "10"])
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert rows[0]["metric"] == "p_correct"
    assert {row["status"] for row in rows} <= {"pass", "fail", "not-applicable"}
    assert rows[-1]["metric"] == "missed_I4"


def test_compare_json(capsys):
    cli(["compare", "--model", "mm1k", "--lambda", "1", "--mu", "1", "--k", "3",
         "--packets", "5000", "--batches", "10", "--format", "json"])
    rows = json.loads(capsys.readouterr().out)["rows"]
    status = {row["metric"]: row["status"] for row in rows}
    assert status["mean_pumd"] == "analytic-gap"


def test_sweep_default_target(tmp_path, capsys):
    cli(["sweep", "--model", "mg11", "--vary", "lambda", "--from", "0.5", "--to",
         "1.5", "--steps", "3", "--mu", "1", "--analytic-only"])
    rows = read_rows(tmp_path / "sweep.csv")
    assert [row["lambda"] for row in rows] == [0.5, 1.0, 1.5]
    assert all(row["source"] == "analytic" for row in rows)
    assert "3" in capsys.readouterr().out


def test_sweep_with_simulation(tmp_path):
    target = tmp_path / "sims" / "mm1k.csv"
    cli(["sweep", "--model", "mm1k", "--vary", "K", "--from", "1", "--to", "3",
         "--steps", "3", "--lambda", "0.5", "--mu", "1", "--packets", "2000",
         "--batches", "10", "--jobs", "1", "--out", str(target)])
    rows = read_rows(target)
    assert [row["source"] for row in rows] == ["analytic", "sim"] * 3
    assert [row["K"] for row in rows] == [1, 1, 2, 2, 3, 3]
    assert rows[1]["stderr_p_M"] is not None
    assert (tmp_path / "sims" / LOG_FILE_NAME).exists()


def test_figure_analytic_only(tmp_path):
    cli(["figure", "--id", "num1", "--analytic-only"])
    rows = read_rows(tmp_path / "num1.csv")
    assert len(rows) == 19
    assert rows[0]["lambda"] == pytest.approx(0.05)


def test_sweep_unwritable_target(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("x")
    args = ["sweep", "--vary", "lambda", "--from", "0.1", "--to", "0.5",
            "--steps", "2", "--mu", "1", "--analytic-only",
            "--out", str(blocker / "out.csv")]
    assert _exit_code(args) == 1


def test_figure_is_reproducible(tmp_path):
    base = ["figure", "--id", "num4-draft", "--packets", "2000", "--batches", "10"]
    cli([*base, "--jobs", "1", "--out", str(tmp_path / "a.csv")])
    cli([*base, "--jobs", "2", "--out", str(tmp_path / "b.csv")])
    first = (tmp_path / "a.csv").read_bytes()
    assert first == (tmp_path / "b.csv").read_bytes()
    rows = read_rows(tmp_path / "a.csv")
    assert [row["alpha"] for row in rows[::2]] == [0.5, 1.0, 1.5, 2.0, 2.5]
