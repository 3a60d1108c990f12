"""
Attentional encoder-decoder

Feature-concatenating source embeddings, a bidirectional GRU encoder and
conditional-GRU decoders with additive attention and a deep output layer,
all expressed as tensor-core primitives on a tape.

Per decoder step j with previous token y, previous state s:
    s'  = GRU1(E[y], s)
    c   = ATT(H, s')
    s_j = GRU2(c, s')
    t_j = tanh(E[y] Wy + s_j Ws + c Wc + b)
    p   = softmax(t_j Wo)

Batches are batch-first: ids (B, T), encoder states (B, T, 2H).
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Tuple

import numpy as np

from backend.app.core.exceptions import ConfigError, ShapeError
from backend.app.modules.data.vocabulary import EOS
from backend.app.modules.model.schemas import DecoderState, EmbeddingSpec, EncoderStates, LossResult
from backend.app.modules.tensor import (
    Tape,
    Tensor,
    add,
    concat,
    embedding_lookup,
    expand,
    gather_rows,
    log_softmax_rows,
    matmul,
    mul,
    reshape,
    scale,
    sigmoid,
    slice_,
    softmax_rows,
    sub,
    sum_,
    tanh,
)

logger = logging.getLogger(__name__)

Nodes = Mapping[str, Tensor]


def gru_cell(x_proj: Tensor, h: Tensor, U: Tensor) -> Tensor:
    """
    One GRU update from a precomputed input projection.

    Args:
        x_proj: (B, 3H) x W + b, gate blocks [r, z, n]
        h: (B, H) previous state
        U: (H, 3H) recurrent weights

    Returns:
        h + z * (n - h)
    """
    hidden = h.shape[-1]
    h_proj = matmul(h, U)
    r = sigmoid(add(slice_(x_proj, 0, hidden), slice_(h_proj, 0, hidden)))
    z = sigmoid(add(slice_(x_proj, hidden, 2 * hidden), slice_(h_proj, hidden, 2 * hidden)))
    n = tanh(add(slice_(x_proj, 2 * hidden, 3 * hidden), mul(r, slice_(h_proj, 2 * hidden, 3 * hidden))))
    return add(h, mul(z, sub(n, h)))


def _masked_update(tape: Tape, h_prev: Tensor, h_new: Tensor, mask_column: np.ndarray) -> Tensor:
    """Keep h_prev where the mask is 0"""
    m = tape.constant(np.repeat(mask_column[:, None], h_prev.shape[-1], axis=1))
    return add(h_prev, mul(m, sub(h_new, h_prev)))


def _time_step(x: Tensor, t: int) -> Tensor:
    batch, _, width = x.shape
    return reshape(slice_(x, t, t + 1, axis=1), (batch, width))


def _stack_steps(steps: List[Tensor]) -> Tensor:
    batch, width = steps[0].shape
    return concat([reshape(s, (batch, 1, width)) for s in steps], axis=1)


def embed_source(nodes: Nodes, spec: EmbeddingSpec, src_ids: Mapping[str, np.ndarray]) -> Tensor:
    """
    Concatenate per-feature embeddings in spec order.

    Args:
        nodes: Parameter tensors on the active tape
        spec: Embedding layout
        src_ids: (B, T) id arrays per feature name

    Returns:
        (B, T, spec.total_width) embedded source

    Raises:
        ConfigError: A feature stream is not in the spec, or a spec feature has no stream
        ShapeError: Feature streams differ in shape
    """
    unknown = sorted(set(src_ids) - set(spec.names))
    missing = sorted(set(spec.names) - set(src_ids))
    if unknown or missing:
        raise ConfigError(
            "source feature streams do not match the embedding spec",
            details={"unknown": unknown, "missing": missing}
        )
    shapes = {name: tuple(np.shape(ids)) for name, ids in src_ids.items()}
    if len(set(shapes.values())) != 1:
        raise ShapeError("source feature streams differ in length", details={"shapes": shapes})

    parts = [embedding_lookup(nodes[f"src.emb.{name}"], src_ids[name]) for name in spec.names]
    return concat(parts, axis=-1)


def encode(nodes: Nodes, embedded: Tensor, src_mask: np.ndarray) -> EncoderStates:
    """
    Bidirectional GRU encoder.

    Padding is right-aligned: the forward direction carries its state over
    padded steps and the backward direction starts from zero until the first
    real token.

    Args:
        nodes: Parameter tensors on the active tape
        embedded: (B, T, E) source embeddings
        src_mask: (B, T) padding mask

    Returns:
        Encoder states (B, T, 2H)
    """
    tape = embedded.tape
    batch, length, _ = embedded.shape
    if length == 0:
        raise ShapeError("cannot encode an empty source", details={"shape": list(embedded.shape)})
    mask = np.asarray(src_mask, dtype=np.float64)

    outputs = {}
    for direction in ("fwd", "bwd"):
        U = nodes[f"enc.{direction}.U"]
        x_proj = add(matmul(embedded, nodes[f"enc.{direction}.W"]), nodes[f"enc.{direction}.b"])
        h = tape.constant(np.zeros((batch, U.shape[0])))
        steps: List[Tensor] = [None] * length
        order = range(length) if direction == "fwd" else range(length - 1, -1, -1)
        for t in order:
            h = _masked_update(tape, h, gru_cell(_time_step(x_proj, t), h, U), mask[:, t])
            steps[t] = h
        outputs[direction] = _stack_steps(steps)

    return EncoderStates(states=concat([outputs["fwd"], outputs["bwd"]], axis=-1), mask=mask)


@dataclass
class DecoderContext:
    """
    Per-decoder view of the encoder output.

    Attributes:
        prefix: Decoder prefix ("main", "word", "tag")
        states: (B, T, 2H) encoder states
        mask: (B, T) source padding mask
        projected: (B, T, A) H U + b, computed once per sentence batch
    """
    prefix: str
    states: Tensor
    mask: np.ndarray
    projected: Tensor

    def param(self, nodes: Nodes, name: str) -> Tensor:
        return nodes[f"dec.{self.prefix}.{name}"]


def start_decoder(nodes: Nodes, encoded: EncoderStates, prefix: str) -> Tuple[DecoderContext, Tensor]:
    """
    Attention context and initial state s_0 = tanh(mean(H) W_init + b_init).

    The mean runs over real source positions only.
    """
    tape = encoded.states.tape
    batch, length, _ = encoded.states.shape
    lengths = encoded.mask.sum(axis=1, keepdims=True)
    weights = tape.constant((encoded.mask / lengths).reshape(batch, 1, length))
    mean = reshape(matmul(weights, encoded.states), (batch, encoded.width))

    p = f"dec.{prefix}"
    s0 = tanh(add(matmul(mean, nodes[f"{p}.init.W"]), nodes[f"{p}.init.b"]))
    projected = add(matmul(encoded.states, nodes[f"{p}.att.U"]), nodes[f"{p}.att.b"])
    return DecoderContext(prefix, encoded.states, encoded.mask, projected), s0


def attention(nodes: Nodes, ctx: DecoderContext, s_prime: Tensor) -> Tuple[Tensor, Tensor]:
    """
    Additive attention e_i = v . tanh(U h_i + W s' + b), masked softmax.

    Args:
        nodes: Parameter tensors on the active tape
        ctx: Decoder context
        s_prime: (B, H) query state

    Returns:
        (context (B, 2H), weights (B, T))
    """
    batch, length, width = ctx.states.shape
    query = matmul(s_prime, ctx.param(nodes, "att.W"))
    query = expand(reshape(query, (batch, 1, query.shape[-1])), axis=1, size=length)
    hidden = tanh(add(ctx.projected, query))
    scores = reshape(matmul(hidden, ctx.param(nodes, "att.v")), (batch, length))
    alpha = softmax_rows(scores, mask=ctx.mask)
    context = reshape(matmul(reshape(alpha, (batch, 1, length)), ctx.states), (batch, width))
    return context, alpha


def decoder_step(
    nodes: Nodes,
    ctx: DecoderContext,
    y_prev: np.ndarray,
    s_prev: Tensor,
    with_logits: bool = True
) -> DecoderState:
    """
    One conditional-GRU step for a batch of previous tokens.

    Args:
        nodes: Parameter tensors on the active tape
        ctx: Decoder context
        y_prev: (B,) previous target ids (EOS doubles as the start symbol)
        s_prev: (B, H) previous decoder state
        with_logits: Project to the (B, V) output logits; the training loss
            skips this and projects all steps at once

    Returns:
        Decoder state (logits None when with_logits is False)
    """
    emb = embedding_lookup(ctx.param(nodes, "emb"), y_prev)
    gru1_in = add(matmul(emb, ctx.param(nodes, "gru1.W")), ctx.param(nodes, "gru1.b"))
    s_prime = gru_cell(gru1_in, s_prev, ctx.param(nodes, "gru1.U"))

    context, alpha = attention(nodes, ctx, s_prime)

    gru2_in = add(matmul(context, ctx.param(nodes, "gru2.W")), ctx.param(nodes, "gru2.b"))
    s = gru_cell(gru2_in, s_prime, ctx.param(nodes, "gru2.U"))

    pre = add(matmul(emb, ctx.param(nodes, "out.Wy")), matmul(s, ctx.param(nodes, "out.Ws")))
    pre = add(pre, matmul(context, ctx.param(nodes, "out.Wc")))
    t = tanh(add(pre, ctx.param(nodes, "out.b")))
    logits = matmul(t, ctx.param(nodes, "out.Wo")) if with_logits else None
    return DecoderState(s_prime=s_prime, context=context, s=s, t=t, alpha=alpha, logits=logits)


def step_log_probs(state: DecoderState) -> Tensor:
    """(B, V) log-distribution of a decoder step"""
    return log_softmax_rows(state.logits)


def shift_right(tgt_ids: np.ndarray) -> np.ndarray:
    """Previous-token inputs for teacher forcing: EOS then tgt[:, :-1]"""
    tgt_ids = np.asarray(tgt_ids, dtype=np.int64)
    prev = np.full_like(tgt_ids, EOS)
    prev[:, 1:] = tgt_ids[:, :-1]
    return prev


def decoder_loss(
    nodes: Nodes,
    encoded: EncoderStates,
    prefix: str,
    tgt_ids: np.ndarray,
    tgt_mask: np.ndarray
) -> LossResult:
    """
    Teacher-forced negative log-likelihood of one decoder.

    Step j consumes the gold token j-1; padded positions are excluded.

    Args:
        nodes: Parameter tensors on the active tape
        encoded: Encoder states
        prefix: Decoder prefix
        tgt_ids: (B, T) gold ids, each row ending in EOS before padding
        tgt_mask: (B, T) target padding mask

    Returns:
        Loss result
    """
    tgt_ids = np.asarray(tgt_ids, dtype=np.int64)
    mask = np.asarray(tgt_mask, dtype=np.float64)
    tape = encoded.states.tape
    ctx, s = start_decoder(nodes, encoded, prefix)

    y_prev = shift_right(tgt_ids)
    outputs: List[Tensor] = []
    for j in range(tgt_ids.shape[1]):
        state = decoder_step(nodes, ctx, y_prev[:, j], s, with_logits=False)
        s = _masked_update(tape, s, state.s, mask[:, j])
        outputs.append(state.t)

    logits = matmul(_stack_steps(outputs), ctx.param(nodes, "out.Wo"))
    gold = gather_rows(log_softmax_rows(logits), tgt_ids)
    masked = mul(gold, tape.constant(mask))
    loss = scale(sum_(masked), -1.0)
    return LossResult(loss=loss, token_log_probs=np.array(masked.value), token_count=int(mask.sum()))


def sequence_loss(
    nodes: Nodes,
    spec: EmbeddingSpec,
    src_ids: Mapping[str, np.ndarray],
    src_mask: np.ndarray,
    tgt_ids: np.ndarray,
    tgt_mask: np.ndarray,
    prefix: str = "main"
) -> LossResult:
    """Embed, encode and score one target stream"""
    embedded = embed_source(nodes, spec, src_ids)
    encoded = encode(nodes, embedded, src_mask)
    return decoder_loss(nodes, encoded, prefix, tgt_ids, tgt_mask)


def padded(rows: List[List[int]], pad: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Right-pad id rows into (ids, mask) arrays"""
    width = max((len(r) for r in rows), default=0)
    ids = np.full((len(rows), width), pad, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=np.float64)
    for i, row in enumerate(rows):
        ids[i, : len(row)] = row
        mask[i, : len(row)] = 1.0
    return ids, mask


def source_arrays(
    rows: Dict[str, List[List[int]]]
) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """Pad every source feature stream; all streams share one mask"""
    arrays: Dict[str, np.ndarray] = {}
    mask = None
    for name, feature_rows in rows.items():
        arrays[name], feature_mask = padded(feature_rows)
        if mask is None:
            mask = feature_mask
        elif feature_mask.shape != mask.shape or not np.array_equal(feature_mask, mask):
            raise ShapeError(f"source feature '{name}' is not aligned with the other streams")
    return arrays, mask
