import json

import pytest
from click.testing import CliRunner

from hierlearn.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def new_session(runner, tmp_path, *extra):
    result = runner.invoke(
        main,
        [
            "session", "new",
            "--concepts", "apple,fruit,food",
            "--budget", "10",
            "--m", "500",
            "--policy", "random",
            "--data-dir", str(tmp_path),
            *extra,
        ],
    )
    assert result.exit_code == 0, result.output
    return result.output.strip()


def test_session_new_and_report(runner, tmp_path):
    sid = new_session(runner, tmp_path)
    result = runner.invoke(
        main, ["report", "--session", sid, "--data-dir", str(tmp_path)]
    )
    assert result.exit_code == 0, result.output
    payload = json.loads(result.output)
    assert payload["labels"] == ["root", "apple", "fruit", "food"]


def test_report_dot_format(runner, tmp_path):
    sid = new_session(runner, tmp_path)
    result = runner.invoke(
        main,
        ["report", "--session", sid, "--format", "dot", "--data-dir", str(tmp_path)],
    )
    assert result.exit_code == 0
    assert "digraph" in result.output


def test_import_and_insert(runner, tmp_path):
    sid = new_session(runner, tmp_path)
    votes = tmp_path / "votes.csv"
    votes.write_text("path,fruit,apple,1;1;1\n")
    result = runner.invoke(
        main,
        ["import", str(votes), "--session", sid, "--data-dir", str(tmp_path)],
    )
    assert result.exit_code == 0, result.output
    assert "imported 1 answers" in result.output

    result = runner.invoke(
        main, ["insert", "drink", "--session", sid, "--data-dir", str(tmp_path)]
    )
    assert result.exit_code == 0, result.output
    assert "4 concepts" in result.output


def test_interactive_ask(runner, tmp_path):
    sid = new_session(runner, tmp_path)
    result = runner.invoke(
        main,
        ["ask", "--session", sid, "--data-dir", str(tmp_path)],
        input="y\nn\nq\n",
    )
    assert result.exit_code == 0, result.output
    assert "Is " in result.output
    assert "recorded answer=1" in result.output
    assert "recorded answer=0" in result.output


def test_experiment_recovery_small(runner, tmp_path):
    result = runner.invoke(
        main,
        [
            "experiment", "recovery",
            "--n", "3", "--noise", "0", "--strategy", "random",
            "--budget", "4", "--m", "300", "--trials", "2", "--seed", "1",
            "--out", str(tmp_path / "rec"),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "mean final AUC" in result.output
    assert (tmp_path / "rec.csv").exists()
    assert (tmp_path / "rec.json").exists()


def test_experiment_weights_small(runner, tmp_path):
    result = runner.invoke(
        main,
        [
            "experiment", "weights",
            "--n", "3", "--m-grid", "100", "--beta-grid", "0.05",
            "--trials", "1", "--seed", "1", "--held-out", "100",
            "--out", str(tmp_path / "wt"),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "median ll fit" in result.output
    assert (tmp_path / "wt.csv").exists()


def test_concepts_file_input(runner, tmp_path):
    concepts = tmp_path / "concepts.txt"
    concepts.write_text("cat\ndog\nbird\n")
    result = runner.invoke(
        main,
        [
            "session", "new",
            "--concepts-file", str(concepts),
            "--data-dir", str(tmp_path),
        ],
    )
    assert result.exit_code == 0, result.output


def test_missing_concepts_errors(runner, tmp_path):
    result = runner.invoke(main, ["session", "new", "--data-dir", str(tmp_path)])
    assert result.exit_code != 0
