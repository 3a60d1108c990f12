"""
Tests for the snmt command line: scoring, config display, error exits and
tiny end-to-end runs on the bracket task and their reproducibility.
"""

import shutil
from pathlib import Path

import pytest
from click.testing import CliRunner

from backend.app.core.config import settings
from scripts.cli.snmt import cli

RULES_FILE = Path(__file__).resolve().parent.parent / "config" / "construct_rules.tsv"


@pytest.fixture
def runner():
    return CliRunner(mix_stderr=False)


@pytest.fixture
def text_files(tmp_path):
    refs = ["the cat sat on the mat", "a dog barked at the mailman today"]
    ref = tmp_path / "ref.txt"
    ref.write_text("\n".join(refs) + "\n", encoding="utf-8")
    worse = tmp_path / "worse.txt"
    worse.write_text("the cat sat on a mat\na dog barked at mailman today\n", encoding="utf-8")
    return ref, worse


def _sets(assignments):
    args = []
    for item in assignments:
        args.extend(["--set", item])
    return args


def test_score_identical_files(runner, text_files):
    ref, _ = text_files
    result = runner.invoke(cli, ["score", str(ref), str(ref)])
    assert result.exit_code == 0, result.output
    assert result.output.startswith("BLEU = 100.00")


def test_score_against_baseline(runner, text_files):
    ref, worse = text_files
    result = runner.invoke(cli, ["score", str(ref), str(ref), "--baseline", str(worse), "--resamples", "100"])
    assert result.exit_code == 0, result.output
    lines = result.output.splitlines()
    assert lines[1].startswith("baseline BLEU = ")
    assert lines[2].startswith("delta +") and "100 resamples" in lines[2]


def test_show_config_round_trip(runner, tmp_path):
    first = runner.invoke(cli, ["show-config", "--set", "train.batch_size=8", "--set", "strategy.mode=multitask"])
    assert first.exit_code == 0, first.output
    assert "train.batch_size = 8" in first.output
    assert "strategy.mode = multitask" in first.output

    config = tmp_path / "experiment.conf"
    config.write_text(first.output, encoding="utf-8")
    second = runner.invoke(cli, ["show-config", "-c", str(config)])
    assert second.exit_code == 0, second.output
    assert second.output == first.output


def test_bracket_task_defaults_to_the_data_dir(runner, tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "DATA_DIR", str(tmp_path))
    result = runner.invoke(cli, [
        "bracket-task", "--seed", "1", "--train-size", "3", "--dev-size", "2", "--test-size", "2",
    ])
    assert result.exit_code == 0, result.output
    for split in ("train", "dev", "test"):
        for kind in ("src", "tgt", "tags"):
            assert (tmp_path / "bracket" / f"{split}.{kind}").is_file()
    assert len((tmp_path / "bracket" / "train.src").read_text(encoding="utf-8").splitlines()) == 3


def test_unknown_subcommand_is_a_usage_error(runner):
    result = runner.invoke(cli, ["frobnicate"])
    assert result.exit_code == 2


def test_configuration_errors_exit_with_status_1(runner, text_files):
    ref, _ = text_files
    result = runner.invoke(cli, ["score", str(ref), str(ref), "--set", "train.no_such_key=1"])
    assert result.exit_code == 1
    assert "CONFIG_ERROR" in result.output or "unknown config key" in result.output


def test_train_without_preprocessing_fails_cleanly(runner, tmp_path):
    result = runner.invoke(cli, ["train", "--set", f"paths.output_dir={tmp_path / 'exp'}"])
    assert result.exit_code == 1
    assert "preprocess" in result.output


def _pipeline_overrides(data, exp):
    return _sets([
        f"paths.{split}_{kind}={data / f'{split}.{kind}'}"
        for split in ("train", "dev", "test") for kind in ("src", "tgt", "tags")
    ] + [
        f"paths.output_dir={exp}",
        "data.bpe_merges=10",
        "strategy.mode=interleaved",
        "model.hidden_size=16",
        "model.embedding_size=16",
        "model.target_embedding_size=16",
        "model.attention_size=16",
        "model.output_size=16",
        "train.batch_size=10",
        "train.max_steps=4",
        "train.validate_every=2",
        "train.best_k=2",
        "decode.beam=2",
        "decode.interleaved_max_len=30",
        f"evaluation.rule_file={RULES_FILE}",
        "seed=5",
    ])


def _run_pipeline(runner, data, exp):
    overrides = _pipeline_overrides(data, exp)
    for command in (["preprocess"], ["train"], ["translate"]):
        result = runner.invoke(cli, command + overrides)
        assert result.exit_code == 0, result.output
    hyp = exp / "test.src.hyp"
    result = runner.invoke(cli, ["analyze", str(hyp), "--baseline", str(hyp), "--resamples", "100"] + overrides)
    assert result.exit_code == 0, result.output
    return hyp


def _snapshot(directory):
    return {
        str(path.relative_to(directory)): path.read_bytes()
        for path in sorted(directory.rglob("*")) if path.is_file()
    }


@pytest.fixture
def bracket_data(runner, tmp_path):
    data = tmp_path / "data"
    result = runner.invoke(cli, [
        "bracket-task", str(data), "--seed", "3",
        "--train-size", "40", "--dev-size", "5", "--test-size", "6",
    ])
    assert result.exit_code == 0, result.output
    return data


def test_end_to_end_pipeline(runner, tmp_path, bracket_data):
    exp = tmp_path / "exp"
    hyp = _run_pipeline(runner, bracket_data, exp)

    assert (exp / "data" / "manifest.yaml").is_file()
    assert (exp / "model" / "train.log.tsv").is_file()
    assert (exp / "model" / "model.last.ckpt").is_file()
    assert len(hyp.read_text(encoding="utf-8").splitlines()) == 6
    assert Path(f"{hyp}.tags").is_file() and Path(f"{hyp}.annotated").is_file()

    result = runner.invoke(cli, ["score", str(hyp), str(bracket_data / "test.tgt")])
    assert result.exit_code == 0, result.output
    assert result.output.startswith("BLEU = ")

    report = Path(f"{hyp}.analysis.tsv").read_text(encoding="utf-8").splitlines()
    assert report[0].startswith("subset\tkind\tcount")
    assert report[1].startswith("all\tcorpus\t6\t")


def test_pipeline_reruns_are_byte_identical(runner, tmp_path, bracket_data):
    exp = tmp_path / "exp"
    _run_pipeline(runner, bracket_data, exp)
    first = _snapshot(exp)
    shutil.rmtree(exp)
    _run_pipeline(runner, bracket_data, exp)
    second = _snapshot(exp)

    expected = {
        "data/manifest.yaml",
        "model/model.last.ckpt",
        "model/train.report.yaml",
        "model/train.log.tsv",
        "test.src.hyp",
        "test.src.hyp.tags",
        "test.src.hyp.annotated",
        "test.src.hyp.analysis.tsv",
    }
    assert expected <= set(first)
    assert any(name.startswith("model/model.step") for name in first)
    assert sorted(first) == sorted(second)
    for name in first:
        assert first[name] == second[name], name
