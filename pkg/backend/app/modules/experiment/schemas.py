"""
Experiment Models
The experiment configuration tree, the preprocessing manifest and step results
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from backend.app.core.config import settings
from backend.app.modules.data.schemas import CorpusStatistics
from backend.app.modules.inference.schemas import DecodeConfig
from backend.app.modules.model.schemas import ModelConfig
from backend.app.modules.strategies.schemas import StrategyConfig
from backend.app.modules.training.schemas import TrainingSchedule

SPLITS = ("train", "dev", "test")


class PathsConfig(BaseModel):
    """
    Corpus files and the experiment directory.

    Word-level source feature files sit next to the source file of their
    split, named '<source file>.<feature>' (e.g. train.src.dep).
    """
    model_config = ConfigDict(extra="forbid")

    train_src: Optional[str] = Field(None, description="Training source sentences")
    train_tgt: Optional[str] = Field(None, description="Training target sentences")
    train_tags: Optional[str] = Field(None, description="Training target supertags")
    dev_src: Optional[str] = Field(None, description="Validation source sentences")
    dev_tgt: Optional[str] = Field(None, description="Validation references")
    dev_tags: Optional[str] = Field(None, description="Validation target supertags")
    test_src: Optional[str] = Field(None, description="Test source sentences")
    test_tgt: Optional[str] = Field(None, description="Test references")
    test_tags: Optional[str] = Field(None, description="Test reference supertags")
    output_dir: str = Field("experiment", description="Directory for every artifact of the run")
    checkpoints: List[str] = Field(
        default_factory=list,
        description="Checkpoints decoded as an ensemble (default: best checkpoint of training)"
    )

    def split_files(self, split: str) -> Dict[str, Optional[str]]:
        return {kind: getattr(self, f"{split}_{kind}") for kind in ("src", "tgt", "tags")}


class DataConfig(BaseModel):
    """BPE, vocabulary and length-filter settings"""
    model_config = ConfigDict(extra="forbid")

    bpe_merges: int = Field(1000, ge=0, description="Joint BPE merge operations")
    bpe_min_frequency: int = Field(1, ge=1, description="Stop merging below this pair frequency (1: no floor)")
    word_cap: Optional[int] = Field(None, gt=0, description="Maximum word entries per vocabulary")
    tag_cap: Optional[int] = Field(None, gt=0, description="Maximum supertag entries")
    joint_vocab: bool = Field(False, description="One subword vocabulary for both sides")
    max_len: int = Field(50, gt=0, description="Length limit for source and plain targets")
    interleaved_max_len: int = Field(100, gt=0, description="Length limit for interleaved targets")
    strict_alignment: bool = Field(True, description="Fail on misaligned annotation lines")


class EvaluationConfig(BaseModel):
    """Significance testing and construct analysis settings"""
    model_config = ConfigDict(extra="forbid")

    resamples: int = Field(1000, ge=100, description="Paired bootstrap resamples")
    rule_file: str = Field("config/construct_rules.tsv", description="Construct rule file")


class ExperimentConfig(BaseModel):
    """Everything a run depends on; sections map to dotted key prefixes"""
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    paths: PathsConfig = Field(default_factory=PathsConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    strategy: StrategyConfig = Field(default_factory=StrategyConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainingSchedule = Field(default_factory=TrainingSchedule)
    decode: DecodeConfig = Field(default_factory=DecodeConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0, description="Experiment seed")


class SplitSummary(BaseModel):
    """Per-split counts written to the manifest"""
    read: int = Field(..., description="Lines in the corpus files")
    unparsed: int = Field(0, description="Pairs dropped for empty text or annotation")
    misaligned: int = Field(0, description="Pairs dropped for misaligned annotations")
    filtered: int = Field(0, description="Pairs dropped by the length filter")
    retained: int = Field(..., description="Pairs written")
    statistics: CorpusStatistics = Field(default_factory=CorpusStatistics)


class Manifest(BaseModel):
    """Bookkeeping of one preprocessing run"""
    mode: str
    seed: int
    merges: int
    vocabulary_sizes: Dict[str, int] = Field(default_factory=dict)
    vocabulary_hashes: Dict[str, str] = Field(default_factory=dict)
    splits: Dict[str, SplitSummary] = Field(default_factory=dict)


class TranslationSummary(BaseModel):
    """Files written by one translation run"""
    output: str
    tags_output: Optional[str] = None
    annotated_output: Optional[str] = None
    sentences: int = 0
    empty: int = Field(0, description="Outputs with no words")
    alternation_violations: int = 0
    checkpoints: List[str] = Field(default_factory=list)


class SubcommandResult(BaseModel):
    """
    Outcome of one pipeline step.

    artifacts holds what the step produced: the Manifest, the
    TrainingReport, the TranslationSummary, the (system, baseline,
    significance) scores, or the (EvaluationReport, TSV path) pair.
    """
    name: str
    status: int = 0
    artifacts: Any = None
