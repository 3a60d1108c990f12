"""
Trainer

Shuffled minibatch training with Adam, periodic greedy validation scored
by BLEU on tag-stripped output, early stopping on dev BLEU, and retention
of the k best checkpoints.
"""

import heapq
import logging
import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from backend.app.core.config import derive_seed
from backend.app.core.exceptions import NonFiniteError, TrainingError
from backend.app.modules.data.schemas import SegmentedPair
from backend.app.modules.evaluation.bleu import corpus_bleu
from backend.app.modules.inference.schemas import DecodeConfig
from backend.app.modules.inference.service import Translator
from backend.app.modules.model.checkpoint import save_checkpoint
from backend.app.modules.model.parameters import ModelParameters
from backend.app.modules.strategies.schemas import StrategyConfig, Vocabularies
from backend.app.modules.strategies.service import batch_loss, build_batch
from backend.app.modules.tensor import Tape
from backend.app.modules.training.optimizer import adam_step, clip_gradients
from backend.app.modules.training.schemas import AdamState, TrainingLogRow, TrainingReport, TrainingSchedule

logger = logging.getLogger(__name__)

LOG_FILE = "train.log.tsv"
LOG_HEADER = "batch\tepoch\ttrain_loss\tdev_bleu\tcheckpoint"


class Trainer:
    """
    Owns the parameters, optimizer state and checkpoint heap of one run.

    Only this object writes parameters; validation decodes a snapshot.
    """

    def __init__(
        self,
        params: ModelParameters,
        strategy: StrategyConfig,
        vocabs: Vocabularies,
        schedule: TrainingSchedule,
        output_dir: Union[str, Path],
        seed: int,
        decode: Optional[DecodeConfig] = None
    ):
        self.params = params
        self.strategy = strategy
        self.vocabs = vocabs
        self.schedule = schedule
        self.output_dir = Path(output_dir)
        self.seed = seed
        self.decode = decode or DecodeConfig()
        self.state = AdamState(
            lr=schedule.learning_rate,
            beta1=schedule.beta1,
            beta2=schedule.beta2,
            eps=schedule.eps
        )
        self.step = 0
        self._heap: List[Tuple[float, int, str]] = []

    # ------------------------------------------------------------------
    # Updates
    # ------------------------------------------------------------------

    def train_batch(self, pairs: Sequence[SegmentedPair], indices: Sequence[int]) -> float:
        """
        Forward, backward and one Adam update on a fresh tape.

        Returns:
            Per-token loss of the batch
        """
        batch = build_batch(pairs, self.strategy, self.vocabs, indices)
        tape = Tape()
        nodes = self.params.on_tape(tape)
        result = batch_loss(nodes, self.params, batch, self.strategy)
        grads = tape.backward(result.loss).named()
        grads, norm = clip_gradients(grads, self.schedule.clip_norm)
        self.params = adam_step(self.params, grads, self.state)
        self.step += 1
        logger.debug(f"batch {self.step}: loss {result.value:.4f}, grad norm {norm:.4f}")
        return result.value / max(result.token_count, 1)

    # ------------------------------------------------------------------
    # Validation and checkpoints
    # ------------------------------------------------------------------

    def validate(self, dev_pairs: Sequence[SegmentedPair], dev_references: Sequence[str]) -> float:
        """Greedy-decode the dev set and score the stripped output"""
        decode = self.decode.model_copy(update={"decode_tags": False})
        translator = Translator([self.params], self.strategy, self.vocabs, decode)
        results = translator.translate_corpus(dev_pairs, beam=1)
        return corpus_bleu([r.text for r in results], dev_references).score

    def _save(self, name: str, dev_bleu: Optional[float]) -> str:
        path = self.output_dir / name
        save_checkpoint(
            path,
            self.params,
            vocab_hashes=self.vocabs.hashes(),
            mode=self.strategy.mode.value,
            step=self.step,
            dev_bleu=dev_bleu
        )
        return str(path)

    def retain(self, dev_bleu: float) -> Optional[str]:
        """
        Keep a checkpoint if it ranks among the best k seen so far.

        Ranking is by dev BLEU, earlier steps first on ties. Evicted
        checkpoint files are deleted.

        Returns:
            Path of the saved checkpoint, or None when it did not qualify
        """
        key = (dev_bleu, -self.step)
        if len(self._heap) >= self.schedule.best_k and key <= self._heap[0][:2]:
            return None
        path = self._save(f"model.step{self.step}.ckpt", dev_bleu)
        heapq.heappush(self._heap, (dev_bleu, -self.step, path))
        if len(self._heap) > self.schedule.best_k:
            _, _, evicted = heapq.heappop(self._heap)
            Path(evicted).unlink(missing_ok=True)
            logger.debug(f"Evicted checkpoint {evicted}")
        return path

    @property
    def retained(self) -> List[str]:
        """Retained checkpoints, best first"""
        return [path for _, _, path in sorted(self._heap, reverse=True)]

    # ------------------------------------------------------------------
    # Loop
    # ------------------------------------------------------------------

    def train(
        self,
        corpus: Sequence[SegmentedPair],
        dev_pairs: Optional[Sequence[SegmentedPair]] = None,
        dev_references: Optional[Sequence[str]] = None
    ) -> TrainingReport:
        """
        Run the schedule.

        A batch whose forward pass or gradients turn non-finite is skipped
        with a warning and counted in the report.

        Args:
            corpus: Training pairs, preprocessed for the strategy
            dev_pairs: Validation sources (None disables validation)
            dev_references: Validation reference strings

        Returns:
            Training report

        Raises:
            TrainingError: Empty corpus
        """
        if not corpus:
            raise TrainingError("training corpus is empty")
        if dev_pairs is not None and (dev_references is None or len(dev_references) != len(dev_pairs)):
            raise TrainingError("dev references must align with dev pairs")

        self.output_dir.mkdir(parents=True, exist_ok=True)
        log_path = self.output_dir / LOG_FILE
        rows: List[TrainingLogRow] = []
        rng = np.random.default_rng(derive_seed(self.seed, "shuffle"))
        schedule = self.schedule
        started = time.monotonic()

        best_bleu: Optional[float] = None
        bad_validations = 0
        stopped_early = False
        losses: List[float] = []
        last_loss = 0.0
        epoch = 0
        skipped = 0

        with open(log_path, "w", encoding="utf-8") as log_file:
            log_file.write(LOG_HEADER + "\n")

            def run_validation() -> bool:
                nonlocal best_bleu, bad_validations
                mean_loss = float(np.mean(losses)) if losses else last_loss
                losses.clear()
                bleu = path = None
                stop = False
                if dev_pairs:
                    bleu = self.validate(dev_pairs, dev_references)
                    path = self.retain(bleu)
                    if best_bleu is None or bleu > best_bleu:
                        best_bleu, bad_validations = bleu, 0
                    else:
                        bad_validations += 1
                        stop = bad_validations > schedule.patience
                row = TrainingLogRow(batch=self.step, epoch=epoch, train_loss=mean_loss,
                                     dev_bleu=bleu, checkpoint=path)
                rows.append(row)
                log_file.write(row.to_tsv() + "\n")
                log_file.flush()
                logger.info(
                    f"Validation at batch {self.step} (epoch {epoch}): loss {mean_loss:.4f}, "
                    f"dev BLEU {'-' if bleu is None else f'{bleu:.2f}'}"
                )
                return stop

            done = False
            while epoch < schedule.max_epochs and not done:
                epoch += 1
                order = rng.permutation(len(corpus))
                updated = False
                for start in range(0, len(order), schedule.batch_size):
                    indices = [int(i) for i in order[start: start + schedule.batch_size]]
                    try:
                        last_loss = self.train_batch([corpus[i] for i in indices], indices)
                    except NonFiniteError as e:
                        skipped += 1
                        logger.warning(
                            f"✗ Skipped batch in epoch {epoch} after update {self.step}: {e.message} {e.details}"
                        )
                        continue
                    updated = True
                    losses.append(last_loss)
                    if self.step % schedule.validate_every == 0 and run_validation():
                        stopped_early = done = True
                        logger.info(f"✓ Early stop after {bad_validations} validations without improvement")
                        break
                    if schedule.max_steps is not None and self.step >= schedule.max_steps:
                        done = True
                        break
                if not updated:
                    logger.error(f"✗ Every batch of epoch {epoch} was non-finite; stopping")
                    done = True

            if self.step % schedule.validate_every != 0 and not stopped_early:
                run_validation()

        last_checkpoint = self._save("model.last.ckpt", None)
        retained = self.retained
        report = TrainingReport(
            batches=self.step,
            epochs=epoch,
            best_bleu=best_bleu,
            best_checkpoint=retained[0] if retained else None,
            checkpoints=retained,
            last_checkpoint=last_checkpoint,
            final_loss=last_loss,
            stopped_early=stopped_early,
            skipped_batches=skipped,
            elapsed_seconds=time.monotonic() - started,
            log=rows
        )
        logger.info(
            f"✓ Training finished: {report.batches} batches, {report.epochs} epochs, "
            f"best dev BLEU {'-' if best_bleu is None else f'{best_bleu:.2f}'}"
        )
        return report


def train(
    corpus: Sequence[SegmentedPair],
    params: ModelParameters,
    strategy: StrategyConfig,
    vocabs: Vocabularies,
    schedule: TrainingSchedule,
    output_dir: Union[str, Path],
    seed: int,
    dev_pairs: Optional[Sequence[SegmentedPair]] = None,
    dev_references: Optional[Sequence[str]] = None,
    decode: Optional[DecodeConfig] = None
) -> Tuple[ModelParameters, TrainingReport]:
    """
    Train from initialized parameters.

    Returns:
        (final parameters, report)
    """
    trainer = Trainer(params, strategy, vocabs, schedule, output_dir, seed, decode)
    report = trainer.train(corpus, dev_pairs, dev_references)
    return trainer.params, report
