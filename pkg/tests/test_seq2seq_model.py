"""
Tests for the attentional encoder-decoder: parameter layout, shapes,
padding invariance, gradients and the checkpoint container.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from backend.app.core.exceptions import CheckpointError, ConfigError
from backend.app.modules.model import (
    EmbeddingSpec,
    ModelConfig,
    decoder_step,
    embed_source,
    encode,
    init_parameters,
    load_checkpoint,
    parameter_groups,
    save_checkpoint,
    sequence_loss,
    shape_table,
    shift_right,
    start_decoder,
)
from backend.app.modules.strategies import build_batch
from backend.app.modules.tensor import Tape, check_gradients


def _loss(model, pairs, tape=None):
    batch = build_batch(pairs, model.strategy, model.vocabs)
    tape = tape or Tape()
    nodes = model.params.on_tape(tape)
    return sequence_loss(nodes, model.params.spec, batch.src_ids, batch.src_mask, batch.tgt_ids, batch.tgt_mask)


# ----------------------------------------------------------------------------
# Layout
# ----------------------------------------------------------------------------

def test_embedding_allocation_gives_words_the_remainder():
    spec = EmbeddingSpec.allocate(32, {"word": 50, "iob": 7, "dep": 12}, {"iob": 4, "dep": 8})
    assert [(f.name, f.width) for f in spec.features] == [("word", 20), ("iob", 4), ("dep", 8)]
    assert spec.total_width == 32


def test_embedding_allocation_needs_room_for_words():
    with pytest.raises(ValueError):
        EmbeddingSpec.allocate(8, {"word": 50, "iob": 7}, {"iob": 8})
    with pytest.raises(ValueError):
        EmbeddingSpec.allocate(8, {"word": 50, "iob": 7})


def test_dropout_is_rejected():
    with pytest.raises(ValidationError):
        ModelConfig(dropout=0.2)


def test_shape_table_and_initialization(toy_model):
    model = toy_model("multitask")
    params = model.params
    table = shape_table(params.config, params.spec, params.decoders)
    assert list(table) == params.names()
    assert table["enc.fwd.W"] == (16, 48)
    assert table["dec.word.att.U"] == (32, 16)
    assert table["dec.tag.out.Wo"] == (16, len(model.vocabs.tags))
    assert not params["enc.bwd.b"].any()
    assert np.abs(params["dec.word.emb"]).max() <= params.config.init_scale


def test_initialization_is_seeded(toy_model):
    first, second = toy_model(seed=5), toy_model(seed=5)
    for name in first.params:
        assert_array_equal(first.params[name], second.params[name])


def test_parameter_groups_cover_every_array(toy_model):
    params = toy_model("multitask").params
    groups = parameter_groups(params)
    names = [n for group in groups.values() for n in group]
    assert sorted(names) == sorted(params.names())
    assert "dec.tag.att.v" in groups["tag.attention"]
    assert "dec.word.emb" in groups["embeddings"]


# ----------------------------------------------------------------------------
# Forward pass
# ----------------------------------------------------------------------------

def test_encoder_and_decoder_shapes(toy_model):
    model = toy_model()
    batch = model.batch(3)
    tape = Tape()
    nodes = model.params.on_tape(tape)
    encoded = encode(nodes, embed_source(nodes, model.params.spec, batch.src_ids), batch.src_mask)
    batch_size, length = batch.src_mask.shape
    assert encoded.states.shape == (batch_size, length, 32)

    ctx, s0 = start_decoder(nodes, encoded, "main")
    state = decoder_step(nodes, ctx, batch.tgt_ids[:, 0], s0)
    assert state.logits.shape == (batch_size, len(model.vocabs.target))
    assert state.alpha.shape == (batch_size, length)
    assert_allclose(state.alpha.value.sum(axis=1), 1.0)
    assert_array_equal(state.alpha.value[batch.src_mask == 0], 0.0)


def test_decoder_step_can_skip_the_output_projection(toy_model):
    model = toy_model()
    batch = model.batch(3)
    tape = Tape()
    nodes = model.params.on_tape(tape)
    encoded = encode(nodes, embed_source(nodes, model.params.spec, batch.src_ids), batch.src_mask)
    ctx, s0 = start_decoder(nodes, encoded, "main")

    before = len(tape.entries)
    full = decoder_step(nodes, ctx, batch.tgt_ids[:, 0], s0)
    full_ops = len(tape.entries) - before
    before = len(tape.entries)
    bare = decoder_step(nodes, ctx, batch.tgt_ids[:, 0], s0, with_logits=False)

    assert bare.logits is None
    assert len(tape.entries) - before == full_ops - 1
    assert_array_equal(bare.t.value, full.t.value)
    assert_array_equal(bare.s.value, full.s.value)


def test_relabeling_target_ids_leaves_the_loss_unchanged(toy_model):
    model = toy_model()
    batch = build_batch(model.pairs[:3], model.strategy, model.vocabs)
    size = len(model.vocabs.target)
    perm = np.arange(size)
    perm[3:] = 3 + np.random.default_rng(0).permutation(size - 3)
    inverse = np.argsort(perm)
    assert not np.array_equal(perm, np.arange(size))

    relabeled = model.params.replace({
        "dec.main.emb": model.params["dec.main.emb"][inverse],
        "dec.main.out.Wo": model.params["dec.main.out.Wo"][:, inverse],
    })

    def loss(params, tgt_ids):
        nodes = params.on_tape(Tape())
        return sequence_loss(nodes, params.spec, batch.src_ids, batch.src_mask, tgt_ids, batch.tgt_mask).value

    assert_allclose(loss(relabeled, perm[batch.tgt_ids]), loss(model.params, batch.tgt_ids), rtol=0, atol=1e-12)


def test_loss_bookkeeping(toy_model):
    model = toy_model()
    batch = model.batch(3)
    result = _loss(model, model.pairs[:3])
    assert result.token_count == int(batch.tgt_mask.sum())
    assert result.value > 0
    assert_allclose(-result.token_log_probs.sum(), result.value)
    assert_array_equal(result.token_log_probs[batch.tgt_mask == 0], 0.0)


def test_padding_does_not_change_sentence_losses(toy_model):
    model = toy_model()
    short = min(model.pairs, key=lambda p: len(p.src_units))
    long = max(model.pairs, key=lambda p: len(p.src_units))
    together = _loss(model, [short, long]).value
    apart = _loss(model, [short]).value + _loss(model, [long]).value
    assert_allclose(together, apart, rtol=1e-10)


def test_shift_right_starts_with_eos():
    assert_array_equal(shift_right(np.array([[5, 6, 2], [7, 2, 0]])), [[2, 5, 6], [2, 7, 2]])


def test_unknown_source_stream(toy_model):
    model = toy_model()
    batch = model.batch(2)
    nodes = model.params.on_tape(Tape())
    with pytest.raises(ConfigError):
        embed_source(nodes, model.params.spec, {**batch.src_ids, "dep": batch.src_ids["word"]})


def test_baseline_loss_gradients(toy_model):
    model = toy_model(hidden=16)
    pairs = model.pairs[:3]

    def loss(tape, nodes):
        batch = build_batch(pairs, model.strategy, model.vocabs)
        return sequence_loss(nodes, model.params.spec, batch.src_ids, batch.src_mask,
                             batch.tgt_ids, batch.tgt_mask).loss

    error = check_gradients(loss, model.params.arrays, floor=1e-4, max_elements=3)
    assert error < 1e-4


# ----------------------------------------------------------------------------
# Checkpoints
# ----------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path, toy_model):
    model = toy_model("interleaved")
    path = save_checkpoint(tmp_path / "m.ckpt", model.params, model.vocabs.hashes(), "interleaved", 7, 12.5)
    params, header = load_checkpoint(path, model.vocabs.hashes())
    for name in model.params:
        assert_array_equal(params[name], model.params[name])
    assert (header.mode, header.step, header.dev_bleu) == ("interleaved", 7, 12.5)
    assert header.decoders == model.params.decoders
    assert params.spec == model.params.spec


def test_identical_parameters_give_identical_bytes(tmp_path, toy_model):
    model = toy_model()
    a = save_checkpoint(tmp_path / "a.ckpt", model.params, model.vocabs.hashes())
    b = save_checkpoint(tmp_path / "b.ckpt", model.params.copy(), model.vocabs.hashes())
    assert a.read_bytes() == b.read_bytes()


def test_checkpoint_rejects_other_vocabulary(tmp_path, toy_model):
    model = toy_model()
    path = save_checkpoint(tmp_path / "m.ckpt", model.params, model.vocabs.hashes())
    with pytest.raises(CheckpointError):
        load_checkpoint(path, {"target": "0" * 64})


@pytest.mark.parametrize("corrupt", [
    lambda data: b"NOTACKPT" + data[8:],
    lambda data: data[:8] + bytes([99]) + data[9:],
    lambda data: data[:-5],
    lambda data: data + b"\x00",
])
def test_corrupt_checkpoints(tmp_path, toy_model, corrupt):
    model = toy_model()
    path = save_checkpoint(tmp_path / "m.ckpt", model.params)
    path.write_bytes(corrupt(path.read_bytes()))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_initialized_model_matches_layout(toy_model):
    model = toy_model()
    again = init_parameters(model.params.config, model.params.spec, model.params.decoders, seed=1)
    assert again.names() == model.params.names()
