"""
Tests for the optimizer and the training loop: Adam, clipping, best-k
retention, early stopping and determinism.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from backend.app.core.exceptions import NonFiniteError, TrainingError
from backend.app.modules.inference import Translator
from backend.app.modules.strategies import encode_target
import backend.app.modules.training.trainer as trainer_module
from backend.app.modules.training import (
    LOG_FILE,
    AdamState,
    Trainer,
    TrainingSchedule,
    adam_step,
    clip_gradients,
    train,
)


def _references(pairs):
    return [" ".join(p.tgt_units) for p in pairs]


@pytest.fixture
def make_trainer(tmp_path, toy_model):
    def build(mode="baseline", **schedule):
        model = toy_model(mode)
        options = {"batch_size": 4, "learning_rate": 0.01, "validate_every": 100, "best_k": 2}
        options.update(schedule)
        trainer = Trainer(model.params, model.strategy, model.vocabs, TrainingSchedule(**options),
                          tmp_path / "model", seed=3)
        return trainer, model
    return build


# ----------------------------------------------------------------------------
# Optimizer
# ----------------------------------------------------------------------------

def test_first_adam_step_moves_by_learning_rate(toy_model):
    params = toy_model().params
    state = AdamState(lr=0.01)
    grads = {name: np.ones_like(params[name]) for name in params}
    grads["enc.fwd.b"] = -2.0 * grads["enc.fwd.b"]
    updated = adam_step(params, grads, state)

    step = 0.01 / (1.0 + 1e-8)
    assert_allclose(updated["dec.main.out.Wo"], params["dec.main.out.Wo"] - step, rtol=0, atol=1e-15)
    assert_allclose(updated["enc.fwd.b"], params["enc.fwd.b"] + 0.01 * 2.0 / (2.0 + 1e-8), rtol=0, atol=1e-15)
    assert state.t == 1


def test_adam_leaves_input_parameters_untouched(toy_model):
    params = toy_model().params
    before = params["dec.main.emb"].copy()
    adam_step(params, {name: np.ones_like(params[name]) for name in params}, AdamState())
    assert_array_equal(params["dec.main.emb"], before)


def test_adam_rejects_non_finite_gradients(toy_model):
    params = toy_model().params
    grads = {name: np.zeros_like(params[name]) for name in params}
    grads["enc.bwd.U"][0, 0] = np.nan
    state = AdamState()
    with pytest.raises(NonFiniteError) as exc:
        adam_step(params, grads, state)
    assert exc.value.details["parameters"] == ["enc.bwd.U"]
    assert state.t == 0


def test_clip_gradients():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped, norm = clip_gradients(grads, 1.0)
    assert norm == 5.0
    assert_allclose(clipped["a"], [0.6])
    assert_allclose(clipped["b"], [0.8])
    assert clip_gradients(grads, 10.0)[0] is grads
    assert clip_gradients(grads, 0.0)[0] is grads


# ----------------------------------------------------------------------------
# Checkpoint retention
# ----------------------------------------------------------------------------

def test_best_k_retention(make_trainer):
    trainer, _ = make_trainer(best_k=2)
    saved = {}
    for step, bleu in ((1, 10.0), (2, 20.0), (3, 15.0), (4, 5.0)):
        trainer.step = step
        saved[step] = trainer.retain(bleu)

    assert saved[4] is None
    assert trainer.retained == [saved[2], saved[3]]
    assert not (trainer.output_dir / "model.step1.ckpt").exists()
    assert (trainer.output_dir / "model.step3.ckpt").exists()


def test_equal_bleu_prefers_the_earlier_checkpoint(make_trainer):
    trainer, _ = make_trainer(best_k=2)
    for step, bleu in ((2, 20.0), (3, 15.0), (5, 20.0)):
        trainer.step = step
        trainer.retain(bleu)
    assert [p.split("/")[-1] for p in trainer.retained] == ["model.step2.ckpt", "model.step5.ckpt"]


# ----------------------------------------------------------------------------
# Training loop
# ----------------------------------------------------------------------------

def test_empty_corpus_is_an_error(make_trainer):
    trainer, _ = make_trainer()
    with pytest.raises(TrainingError):
        trainer.train([])


def test_dev_references_must_align(make_trainer):
    trainer, model = make_trainer()
    with pytest.raises(TrainingError):
        trainer.train(model.pairs, model.pairs[:3], ["only one"])


def test_patience_stops_training(make_trainer, monkeypatch):
    trainer, model = make_trainer(batch_size=1, validate_every=1, patience=1, max_epochs=5)
    scores = iter([10.0, 12.0, 11.0, 11.0, 50.0])
    monkeypatch.setattr(trainer, "validate", lambda pairs, refs: next(scores))

    report = trainer.train(model.pairs[:10], model.pairs[:2], _references(model.pairs[:2]))
    assert report.stopped_early
    assert report.batches == 4
    assert report.best_bleu == 12.0
    assert [row.dev_bleu for row in report.log] == [10.0, 12.0, 11.0, 11.0]
    assert report.best_checkpoint.endswith("model.step2.ckpt")


def test_max_steps_and_training_log(make_trainer):
    trainer, model = make_trainer(max_steps=3)
    report = trainer.train(model.pairs)
    assert report.batches == 3
    assert report.epochs == 1
    assert report.best_bleu is None and report.checkpoints == []

    lines = (trainer.output_dir / LOG_FILE).read_text(encoding="utf-8").splitlines()
    assert lines[0] == "batch\tepoch\ttrain_loss\tdev_bleu\tcheckpoint"
    assert lines[1].startswith("3\t1\t") and lines[1].endswith("\t-\t-")
    assert (trainer.output_dir / "model.last.ckpt").exists()


def test_non_finite_batch_is_skipped(make_trainer, monkeypatch):
    trainer, model = make_trainer(max_steps=3)
    calls = []

    def failing_once(params, grads, state):
        calls.append(state.t)
        if len(calls) == 2:
            raise NonFiniteError("non-finite gradients, batch aborted", details={"parameters": ["enc.fwd.U"]})
        return adam_step(params, grads, state)

    monkeypatch.setattr(trainer_module, "adam_step", failing_once)
    report = trainer.train(model.pairs)

    assert report.batches == 3
    assert report.skipped_batches == 1
    assert len(calls) == 4
    assert trainer.state.t == 3
    assert (trainer.output_dir / "model.last.ckpt").exists()


def test_all_batches_non_finite_stops_after_one_epoch(make_trainer, monkeypatch):
    trainer, model = make_trainer(max_epochs=5)

    def always_failing(params, grads, state):
        raise NonFiniteError("non-finite gradients, batch aborted")

    monkeypatch.setattr(trainer_module, "adam_step", always_failing)
    report = trainer.train(model.pairs)

    assert report.batches == 0
    assert report.epochs == 1
    assert report.skipped_batches == -(-len(model.pairs) // 4)
    assert report.last_checkpoint.endswith("model.last.ckpt")


def test_validation_retains_checkpoints(make_trainer):
    trainer, model = make_trainer(validate_every=2, max_steps=6, best_k=2)
    dev = model.pairs[:3]
    report = trainer.train(model.pairs, dev, _references(dev))
    assert len(report.log) == 3
    assert all(0.0 <= row.dev_bleu <= 100.0 for row in report.log)
    assert 1 <= len(report.checkpoints) <= 2
    assert report.best_checkpoint == report.checkpoints[0]


def test_training_reduces_loss(tmp_path, toy_model):
    model = toy_model(size=5)
    schedule = TrainingSchedule(batch_size=5, max_epochs=150, learning_rate=0.01, validate_every=1000)
    trainer = Trainer(model.params, model.strategy, model.vocabs, schedule, tmp_path, seed=0)
    initial = trainer.train_batch(model.pairs, list(range(5)))
    report = trainer.train(model.pairs)
    assert report.final_loss < 0.5 * initial


def test_training_is_deterministic(tmp_path, toy_model):
    model = toy_model("interleaved")
    schedule = TrainingSchedule(batch_size=3, max_steps=4, learning_rate=0.01)
    runs = []
    for name in ("a", "b"):
        params, report = train(model.pairs, model.params, model.strategy, model.vocabs, schedule,
                               tmp_path / name, seed=11)
        runs.append((params, report))
    (first, _), (second, _) = runs
    for name in first:
        assert_array_equal(first[name], second[name])
    assert (tmp_path / "a" / "model.last.ckpt").read_bytes() == (tmp_path / "b" / "model.last.ckpt").read_bytes()


# ----------------------------------------------------------------------------
# Memorization
# ----------------------------------------------------------------------------

def test_small_steps_decrease_the_loss(tmp_path, toy_model):
    model = toy_model(size=1)
    schedule = TrainingSchedule(batch_size=1, learning_rate=0.002, clip_norm=0.0)
    trainer = Trainer(model.params, model.strategy, model.vocabs, schedule, tmp_path, seed=0)
    losses = [trainer.train_batch(model.pairs, [0]) for _ in range(50)]
    assert all(later < earlier for earlier, later in zip(losses, losses[1:]))


def test_single_interleaved_pair_is_memorized(tmp_path, toy_model):
    model = toy_model("interleaved", size=1)
    schedule = TrainingSchedule(batch_size=1, max_epochs=300, learning_rate=0.02, clip_norm=5.0,
                                validate_every=1000)
    trainer = Trainer(model.params, model.strategy, model.vocabs, schedule, tmp_path, seed=0)
    report = trainer.train(model.pairs)
    assert report.final_loss < 0.01

    translator = Translator([trainer.params], model.strategy, model.vocabs)
    result = translator.translate(model.pairs[0], beam=1)
    assert result.tokens == encode_target(model.pairs[0], model.strategy, model.vocabs)
    assert result.tags == model.pairs[0].tgt_tags
    assert result.alternation_violations == 0
