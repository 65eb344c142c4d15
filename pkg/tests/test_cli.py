import json

import pytest
from click.testing import CliRunner

from crqrisk.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def _generate(runner, tmp_path, name="corpus.jsonl", n=2000, extra=()):
    out = tmp_path / name
    result = runner.invoke(main, [
        "generate", "--n", str(n), "--prevalence", "0.05", "--seed", "5",
        "--out", str(out), *extra,
    ])
    assert result.exit_code == 0, result.output
    return out, tmp_path / f"{name}.labels.csv"


def test_generate_writes_corpus_and_labels(runner, tmp_path):
    out = tmp_path / "x.jsonl"
    result = runner.invoke(main, ["generate", "--n", "50", "--out", str(out)])
    assert result.exit_code == 0
    summary = json.loads(result.output)
    assert summary["records"] == 50
    assert len(out.read_text().splitlines()) == 50
    labels = tmp_path / "x.jsonl.labels.csv"
    assert labels.read_text().splitlines()[0] == "id,label"


def test_generate_is_deterministic(runner, tmp_path):
    a, _ = _generate(runner, tmp_path, "a.jsonl")
    b, _ = _generate(runner, tmp_path, "b.jsonl")
    assert a.read_text() == b.read_text()


def test_generate_rejects_malformed_drift_spec(runner, tmp_path):
    result = runner.invoke(main, [
        "generate", "--n", "100", "--out", str(tmp_path / "c.jsonl"),
        "--drift", "description_severity-oops",
    ])
    assert result.exit_code == 2


def test_generate_domain_error_exits_one(runner, tmp_path):
    # onset beyond the corpus is a domain error, not a usage error
    result = runner.invoke(main, [
        "generate", "--n", "100", "--out", str(tmp_path / "c.jsonl"),
        "--drift", "description_severity:mean_shift:500:2.0",
    ])
    assert result.exit_code == 1
    assert "error: InvalidConfig" in result.output


def test_missing_required_option_exits_two(runner):
    assert runner.invoke(main, ["generate"]).exit_code == 2
    assert runner.invoke(main, ["no-such-command"]).exit_code == 2


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """corpus + labels + model document produced through the CLI."""
    tmp_path = tmp_path_factory.mktemp("cli-train")
    runner = CliRunner()
    corpus, labels = _generate(runner, tmp_path)
    model = tmp_path / "model.json"
    result = runner.invoke(main, [
        "train", "--corpus", str(corpus), "--labels", str(labels),
        "--out", str(model), "--n-trees", "25", "--max-depth", "3",
    ])
    assert result.exit_code == 0, result.output
    return tmp_path, corpus, labels, model, json.loads(result.output)


def test_train_reports_validation_metrics(trained):
    _, _, _, model, summary = trained
    assert model.exists()
    assert {"tpr", "fpr", "plr"} <= set(summary["metrics"])
    assert 0.0 <= summary["operating_threshold"] <= 1.0
    # a trained model must do far better than flag-everything (plr == 1)
    assert summary["metrics"]["plr"] > 2.0


def test_train_fails_cleanly_on_missing_labels(runner, tmp_path, trained):
    _, corpus, _, _, _ = trained
    bad = tmp_path / "bad-labels.csv"
    bad.write_text("id,label\ncrq-00000000,risky\n")
    result = runner.invoke(main, [
        "train", "--corpus", str(corpus), "--labels", str(bad),
        "--out", str(tmp_path / "m.json"),
    ])
    assert result.exit_code == 1
    assert "error:" in result.output


def test_score_stdout_and_file_agree(runner, tmp_path, trained):
    _, corpus, _, model, _ = trained
    batch = tmp_path / "batch.jsonl"
    batch.write_text("".join(corpus.read_text().splitlines(True)[:25]))
    to_stdout = runner.invoke(main, ["score", "--model", str(model), "--in", str(batch)])
    assert to_stdout.exit_code == 0
    out_path = tmp_path / "scores.jsonl"
    to_file = runner.invoke(main, [
        "score", "--model", str(model), "--in", str(batch), "--out", str(out_path),
    ])
    assert to_file.exit_code == 0
    assert out_path.read_text().strip() == to_stdout.output.strip()
    first = json.loads(out_path.read_text().splitlines()[0])
    assert {"change_id", "probability", "flagged", "uncertainty", "model_version"} <= set(first)


def test_drift_check_flags_shifted_window(runner, tmp_path):
    # a mechanism whose importance concentrates on the drifting feature
    corpus, labels = _generate(runner, tmp_path, extra=["--mechanism", "linear"])
    model = tmp_path / "model.json"
    assert runner.invoke(main, [
        "train", "--corpus", str(corpus), "--labels", str(labels),
        "--out", str(model), "--n-trees", "20", "--max-depth", "3",
    ]).exit_code == 0
    drifted, _ = _generate(
        runner, tmp_path, "drifted.jsonl",
        extra=["--mechanism", "linear", "--drift", "description_severity:mean_shift:0:2.0"],
    )
    clean = runner.invoke(main, [
        "drift-check", "--ref", str(corpus), "--cur", str(corpus), "--model", str(model),
    ])
    shifted = runner.invoke(main, [
        "drift-check", "--ref", str(corpus), "--cur", str(drifted), "--model", str(model),
    ])
    assert clean.exit_code == 0 and shifted.exit_code == 0
    d_clean = json.loads(clean.output)["d_final"]
    d_shift = json.loads(shifted.output)["d_final"]
    assert d_clean == pytest.approx(0.0, abs=1e-12)
    assert d_shift > 0.15
    assert json.loads(shifted.output)["alarm"] is True


def test_metrics_on_empty_service(runner, tmp_path):
    result = runner.invoke(main, ["metrics", "--data-dir", str(tmp_path / "svc")])
    assert result.exit_code == 0
    snapshot = json.loads(result.output)
    assert snapshot["active_version"] is None
    assert snapshot["n_pending_reviews"] == 0


def test_reviews_list_empty(runner, tmp_path):
    result = runner.invoke(main, ["reviews", "list", "--data-dir", str(tmp_path / "svc")])
    assert result.exit_code == 0
    assert json.loads(result.output) == {"reviews": []}


def test_reviews_verdict_without_queue_exits_one(runner, tmp_path):
    result = runner.invoke(main, [
        "reviews", "verdict", "--data-dir", str(tmp_path / "svc"),
        "--change-id", "crq-0", "--label", "risky",
    ])
    assert result.exit_code == 1
    assert "NoPendingItem" in result.output


def test_simulate_produces_monthly_csv(runner, tmp_path):
    data_dir = tmp_path / "sim"
    out_csv = tmp_path / "monthly.csv"
    result = runner.invoke(main, [
        "simulate", "--months", "2", "--month-size", "400",
        "--prevalence", "0.05", "--seed", "3",
        "--data-dir", str(data_dir), "--out", str(out_csv),
    ])
    assert result.exit_code == 0, result.output
    rows = json.loads(result.output)["months"]
    assert [r["month"] for r in rows] == [1, 2]
    assert (data_dir / "monthly.csv").exists()
    header = out_csv.read_text().splitlines()[0]
    assert header.startswith("month,n_crq,majors_per_10k,man_machine_agreement,d_final")
