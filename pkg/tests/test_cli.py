"""
Tests for the command line: outputs and exit codes
"""

import pytest

import cli
from cli import EXIT_DATA, EXIT_METRIC, EXIT_OK, EXIT_USAGE, main

SMALL_DATA = [
    "n_users=40", "n_source_categories=3", "n_target_categories=3", "news_per_category=4",
    "ads_per_category=3", "n_tags=5", "max_tags_per_news=2", "mean_source_seq=2",
    "mean_target_seq=1", "source_instances_per_user=2", "target_instances_per_user=3",
]
SMALL_MODEL = [
    "embedding_dim=2", "transfer_rank=2", "attention_hidden=4", "fc_dims=8,4",
    "epochs=1", "batch_source=16", "batch_target=16",
]


def _sets(assignments):
    return [arg for a in assignments for arg in ("--set", a)]


def _values(output):
    return dict(line.split("=", 1) for line in output.splitlines() if "=" in line and "\t" not in line)


@pytest.fixture
def data_dir(temp_dir, capsys):
    out = temp_dir / "data"
    assert main(["generate", "--out", str(out), "--seed", "3", *_sets(SMALL_DATA)]) == EXIT_OK
    capsys.readouterr()
    return out


@pytest.fixture
def checkpoint(data_dir, temp_dir, capsys):
    out = temp_dir / "run"
    assert main(["train", "--data-dir", str(data_dir), "--out", str(out), *_sets(SMALL_MODEL)]) == EXIT_OK
    values = _values(capsys.readouterr().out)
    return values["checkpoint"]


def test_generate_lists_files(temp_dir, capsys):
    out = temp_dir / "gen"
    assert main(["generate", "--out", str(out), *_sets(SMALL_DATA)]) == EXIT_OK
    values = _values(capsys.readouterr().out)
    assert set(values) == {"train", "validation", "test", "metadata"}
    assert (out / "schema.tsv").is_file()


def test_train_writes_checkpoint_and_records(data_dir, temp_dir, capsys):
    out = temp_dir / "run"
    assert main(["train", "--data-dir", str(data_dir), "--out", str(out), *_sets(SMALL_MODEL)]) == EXIT_OK
    output = capsys.readouterr().out
    assert output.splitlines()[0].split("\t")[0] == "epoch"
    values = _values(output)
    assert values["checkpoint"] == str(out / cli.CHECKPOINT_FILE)
    assert int(values["best_epoch"]) in (0, 1)


def test_train_validates_on_validation_split(data_dir, temp_dir, mocker, capsys):
    spy = mocker.spy(cli, "train")
    main(["train", "--data-dir", str(data_dir), "--out", str(temp_dir / "m.bin"), *_sets(SMALL_MODEL)])
    capsys.readouterr()
    assert len(spy.call_args.kwargs["validation"]) == 40
    assert (temp_dir / "m.bin").is_file()


def test_evaluate_prints_metrics(checkpoint, data_dir, capsys):
    assert main(["evaluate", "--checkpoint", checkpoint, "--data-file", str(data_dir / "test.tsv")]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert [line.split("=")[0] for line in lines] == ["auc", "logloss", "n_pos", "n_neg"]
    values = _values("\n".join(lines))
    assert int(values["n_pos"]) + int(values["n_neg"]) == 40
    assert 0.0 <= float(values["auc"]) <= 1.0


def test_ablate_prints_every_variant(data_dir, capsys):
    from training.experiments import ABLATION_VARIANTS

    code = main(["ablate", "--data-dir", str(data_dir), *_sets(SMALL_MODEL), "--set", "n_seeds=2"])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["variant", "mean_auc", "std", "logloss", "p_vs_full"]
    rows = [line.split() for line in lines[1:]]
    assert [row[0] for row in rows] == [v.name for v in ABLATION_VARIANTS]
    assert rows[0][-1] == "nan"
    assert all(0.0 <= float(row[1]) <= 1.0 for row in rows)


def test_inspect_attention(checkpoint, data_dir, capsys):
    args = ["inspect-attention", "--checkpoint", checkpoint, "--data-file", str(data_dir / "test.tsv"), "-n", "3"]
    assert main(args) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    assert all(line.startswith("instance_id=") and "\talpha=[" in line for line in lines)


def test_inspect_attention_rejects_non_positive_n(checkpoint, data_dir, capsys):
    args = ["inspect-attention", "--checkpoint", checkpoint, "--data-file", str(data_dir / "test.tsv"), "-n", "0"]
    assert main(args) == EXIT_USAGE
    assert "error:" in capsys.readouterr().err


def test_single_class_file_exits_with_metric_code(checkpoint, data_dir, temp_dir, capsys):
    lines = (data_dir / "test.tsv").read_text(encoding="utf-8").splitlines()
    negatives = [line for line in lines if line.split("\t")[:2] == ["target", "0"]]
    assert negatives
    path = temp_dir / "negatives.tsv"
    path.write_text("\n".join(negatives) + "\n", encoding="utf-8")
    assert main(["evaluate", "--checkpoint", checkpoint, "--data-file", str(path)]) == EXIT_METRIC


def test_missing_split_is_usage_error(temp_dir, capsys):
    (temp_dir / "empty").mkdir()
    code = main(["train", "--data-dir", str(temp_dir / "empty"), "--out", str(temp_dir / "x")])
    assert code == EXIT_USAGE
    assert "missing dataset files" in capsys.readouterr().err


def test_corrupt_checkpoint_is_data_error(data_dir, temp_dir, capsys):
    bad = temp_dir / "bad.bin"
    bad.write_bytes(b"garbage")
    assert main(["evaluate", "--checkpoint", str(bad), "--data-file", str(data_dir / "test.tsv")]) == EXIT_DATA


def test_malformed_data_file_is_data_error(checkpoint, temp_dir, capsys):
    bad = temp_dir / "bad.tsv"
    bad.write_text("target\t1\tonly-three-columns\n", encoding="utf-8")
    assert main(["evaluate", "--checkpoint", checkpoint, "--data-file", str(bad)]) == EXIT_DATA


@pytest.mark.parametrize("argv", [
    [],
    ["fly"],
    ["train", "--data-dir", "x"],
    ["generate", "--out", "x", "--set", "no_equals_sign"],
    ["generate", "--out", "x", "--set", "unknown_key=1"],
    ["generate", "--out", "x", "--set", "kappa=2.0"],
    ["generate", "--out", "x", "--set", "n_tags=2"],
    ["train", "--data-dir", "x", "--out", "y", "--set", "n_tags=1"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert "error:" in capsys.readouterr().err


def test_exit_code_mapping():
    from errors import CheckpointError, ConfigurationError, UndefinedMetricError

    assert cli.exit_code(UndefinedMetricError("x")) == EXIT_METRIC
    assert cli.exit_code(CheckpointError("x")) == EXIT_DATA
    assert cli.exit_code(FileNotFoundError("x")) == EXIT_DATA
    assert cli.exit_code(ConfigurationError("x")) == EXIT_USAGE


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
