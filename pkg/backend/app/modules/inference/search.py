"""
Beam search over an ensemble of decoders

Each member scores the live hypotheses; member log-probabilities are
averaged per step. Finished hypotheses compete on length-normalized score.
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from backend.app.core.exceptions import CheckpointError
from backend.app.modules.data.vocabulary import EOS, PAD
from backend.app.modules.inference.schemas import EnsembleSpec, Hypothesis
from backend.app.modules.model.checkpoint import CheckpointHeader, load_checkpoint
from backend.app.modules.model.network import (
    DecoderContext,
    decoder_step,
    embed_source,
    encode,
    start_decoder,
    step_log_probs,
)
from backend.app.modules.model.parameters import ModelParameters
from backend.app.modules.tensor import Tape

logger = logging.getLogger(__name__)


class ModelScorer:
    """
    Step-wise scoring with one model for one source sentence.

    Runs on a non-recording tape; not shared across threads.
    """

    def __init__(self, params: ModelParameters, prefix: str = "main"):
        self.params = params
        self.prefix = prefix
        self.tape = Tape(record=False)
        self.nodes = params.on_tape(self.tape)
        self._states: Optional[np.ndarray] = None
        self._projected: Optional[np.ndarray] = None
        self._mask: Optional[np.ndarray] = None
        self._tiled: Dict[int, DecoderContext] = {}

    def start(self, src_ids: Mapping[str, np.ndarray], src_mask: np.ndarray) -> np.ndarray:
        """
        Encode one sentence.

        Args:
            src_ids: (1, T) ids per source stream
            src_mask: (1, T) mask

        Returns:
            Initial decoder state (H,)
        """
        embedded = embed_source(self.nodes, self.params.spec, src_ids)
        encoded = encode(self.nodes, embedded, src_mask)
        ctx, s0 = start_decoder(self.nodes, encoded, self.prefix)
        self._states = np.array(ctx.states.value)
        self._projected = np.array(ctx.projected.value)
        self._mask = np.array(ctx.mask)
        self._tiled = {}
        return np.array(s0.value[0])

    def _context(self, k: int) -> DecoderContext:
        if k not in self._tiled:
            self._tiled[k] = DecoderContext(
                prefix=self.prefix,
                states=self.tape.constant(np.repeat(self._states, k, axis=0)),
                mask=np.repeat(self._mask, k, axis=0),
                projected=self.tape.constant(np.repeat(self._projected, k, axis=0)),
            )
        return self._tiled[k]

    def step(self, y_prev: np.ndarray, states: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Score the next token for K hypotheses.

        Args:
            y_prev: (K,) previous ids
            states: (K, H) decoder states

        Returns:
            ((K, V) log-probabilities, (K, H) new states)
        """
        if self._states is None:
            raise RuntimeError("start() must be called before step()")
        ctx = self._context(len(y_prev))
        state = decoder_step(self.nodes, ctx, np.asarray(y_prev, dtype=np.int64), self.tape.constant(states))
        return np.array(step_log_probs(state).value), np.array(state.s.value)


def combine_log_probs(member_log_probs: Sequence[np.ndarray]) -> np.ndarray:
    """
    Arithmetic mean of member log-probabilities.

    Written as first + mean deviation so that identical members reproduce
    the single-model values exactly.
    """
    first = member_log_probs[0]
    if len(member_log_probs) == 1:
        return first
    deviation = sum(lp - first for lp in member_log_probs[1:])
    return first + deviation / len(member_log_probs)


def _candidate_order(total: float, tokens: List[int]):
    return (-total, tokens)


def beam_search(
    scorers: Sequence[ModelScorer],
    src_ids: Mapping[str, np.ndarray],
    src_mask: np.ndarray,
    beam: int = 5,
    max_len: int = 50,
    trace: Optional[List[List[Hypothesis]]] = None
) -> Hypothesis:
    """
    Ensemble beam search for one sentence.

    Every step the top `beam` continuations by cumulative log-probability
    (ties broken by token ids) are kept; those ending in EOS are finished.
    Search stops when `beam` hypotheses have finished or no live hypothesis
    remains. At step max_len every live hypothesis is closed with EOS.

    Args:
        scorers: One scorer per ensemble member
        src_ids: (1, T) ids per source stream
        src_mask: (1, T) mask
        beam: Beam width (>= 1)
        max_len: Maximum tokens including EOS
        trace: When given, receives the live beam after every step

    Returns:
        Finished hypothesis with the best length-normalized score
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")

    start_states = [scorer.start(src_ids, src_mask) for scorer in scorers]
    live = [Hypothesis(tokens=[], log_prob=0.0, states=start_states)]
    finished: List[Hypothesis] = []

    for step in range(1, max_len + 1):
        y_prev = np.array([h.tokens[-1] if h.tokens else EOS for h in live], dtype=np.int64)
        outputs = [
            scorer.step(y_prev, np.stack([h.states[m] for h in live]))
            for m, scorer in enumerate(scorers)
        ]
        combined = combine_log_probs([lp for lp, _ in outputs])

        if step == max_len:
            for k, hyp in enumerate(live):
                lp = float(combined[k, EOS])
                finished.append(Hypothesis(
                    tokens=hyp.tokens + [EOS],
                    log_prob=hyp.log_prob + lp,
                    step_log_probs=hyp.step_log_probs + [lp]
                ))
            break

        candidates = []
        for k, hyp in enumerate(live):
            for token_id in range(combined.shape[1]):
                if token_id == PAD:
                    continue
                total = hyp.log_prob + float(combined[k, token_id])
                candidates.append((_candidate_order(total, hyp.tokens + [token_id]), k, token_id))
        candidates.sort(key=lambda c: c[0])

        next_live: List[Hypothesis] = []
        for (_, tokens), k, token_id in candidates[:beam]:
            lp = float(combined[k, token_id])
            hyp = Hypothesis(
                tokens=tokens,
                log_prob=live[k].log_prob + lp,
                states=[new_states[k] for _, new_states in outputs],
                step_log_probs=live[k].step_log_probs + [lp]
            )
            (finished if token_id == EOS else next_live).append(hyp)

        if trace is not None:
            trace.append(list(next_live))
        live = next_live
        if len(finished) >= beam or not live:
            break

    best = min(finished, key=Hypothesis.sort_key)
    best.states = []
    return best


def greedy_decode(
    scorers: Sequence[ModelScorer],
    src_ids: Mapping[str, np.ndarray],
    src_mask: np.ndarray,
    max_len: int = 50
) -> Hypothesis:
    """Arg-max decoding (lowest id on ties), EOS forced at max_len"""
    states = [scorer.start(src_ids, src_mask) for scorer in scorers]
    hyp = Hypothesis(tokens=[], log_prob=0.0)
    for step in range(1, max_len + 1):
        y_prev = np.array([hyp.tokens[-1] if hyp.tokens else EOS], dtype=np.int64)
        outputs = [scorer.step(y_prev, states[m][None, :]) for m, scorer in enumerate(scorers)]
        combined = combine_log_probs([lp for lp, _ in outputs])[0].copy()
        combined[PAD] = -np.inf
        token_id = EOS if step == max_len else int(np.argmax(combined))
        lp = float(combined[token_id])
        hyp.tokens.append(token_id)
        hyp.log_prob += lp
        hyp.step_log_probs.append(lp)
        states = [new_states[0] for _, new_states in outputs]
        if token_id == EOS:
            break
    return hyp


def load_ensemble(
    spec: EnsembleSpec,
    expected_hashes: Optional[Dict[str, str]] = None
) -> List[Tuple[ModelParameters, CheckpointHeader]]:
    """
    Load every member checkpoint.

    Raises:
        CheckpointError: Members were trained with different vocabularies or layouts
    """
    members = [load_checkpoint(Path(path), expected_hashes) for path in spec.checkpoints]
    reference = members[0][1]
    for path, (_, header) in zip(spec.checkpoints[1:], members[1:]):
        if header.vocab_hashes != reference.vocab_hashes:
            raise CheckpointError(
                f"{path}: ensemble members use different vocabularies",
                details={"member": path, "first": spec.checkpoints[0]}
            )
        if header.mode != reference.mode or header.decoders != reference.decoders:
            raise CheckpointError(
                f"{path}: ensemble members have different decoder layouts",
                details={"member": path}
            )
    logger.info(f"✓ Loaded ensemble of {len(members)} checkpoint(s)")
    return members


def make_scorers(members: Sequence[Union[ModelParameters, Tuple[ModelParameters, CheckpointHeader]]],
                 prefix: str = "main") -> List[ModelScorer]:
    """Fresh scorers (one per member) for decoding one sentence"""
    scorers = []
    for member in members:
        params = member[0] if isinstance(member, tuple) else member
        scorers.append(ModelScorer(params, prefix))
    return scorers
