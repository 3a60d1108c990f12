"""
Experiment Service

Config-driven pipeline steps: preprocess, train, translate, score, analyze.
All randomness comes from the config seed through named sub-seeds, so a
step rerun on identical inputs rewrites identical artifacts.

Layout of an experiment directory:
    data/   merge table, vocabularies, id-encoded corpora, manifest.yaml
    model/  checkpoints, train.log.tsv, train.report.yaml, experiment.conf
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import yaml

from backend.app.core.config import derive_seed
from backend.app.core.exceptions import AlignmentError, ConfigError
from backend.app.modules.data.bpe import MergeTable, learn_bpe, segment_words
from backend.app.modules.data.corpus_io import (
    CorpusReadResult,
    read_lines,
    read_parallel_corpus,
    write_id_corpus,
    write_lines,
)
from backend.app.modules.data.schemas import AnnotatedSentencePair, SegmentedPair, TargetMode
from backend.app.modules.data.service import (
    build_feature_vocabulary,
    build_tag_vocabulary,
    build_vocabularies,
    corpus_statistics,
    filter_corpus,
    segment_pair,
)
from backend.app.modules.data.vocabulary import Vocabulary
from backend.app.modules.evaluation.analysis import (
    breakdown_report,
    load_construct_rules,
    render_tsv,
    standard_subsets,
    tag_accuracy,
)
from backend.app.modules.evaluation.bleu import bootstrap_significance, corpus_bleu
from backend.app.modules.evaluation.schemas import BleuScore, EvaluationReport, SignificanceResult
from backend.app.modules.experiment.config_file import feature_file, serialize_config, word_level_features
from backend.app.modules.experiment.schemas import (
    ExperimentConfig,
    Manifest,
    SplitSummary,
    SubcommandResult,
    TranslationSummary,
)
from backend.app.modules.inference.schemas import EnsembleSpec, TranslationResult
from backend.app.modules.inference.search import load_ensemble
from backend.app.modules.inference.service import Translator
from backend.app.modules.model.parameters import init_parameters
from backend.app.modules.strategies.schemas import WORD_FEATURE, IntegrationMode, Vocabularies
from backend.app.modules.strategies.service import (
    check_vocabularies,
    embedding_spec,
    encode_source,
    encode_tag_target,
    encode_target,
    model_decoders,
)
from backend.app.modules.training.schemas import TrainingReport
from backend.app.modules.training.trainer import train

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.yaml"
MERGES_FILE = "merges.txt"
REPORT_FILE = "train.report.yaml"
CONFIG_COPY = "experiment.conf"

SUBCOMMANDS = ("preprocess", "train", "translate", "score", "analyze")

PathLike = Union[str, Path]


def data_dir(config: ExperimentConfig) -> Path:
    return Path(config.paths.output_dir) / "data"


def model_dir(config: ExperimentConfig) -> Path:
    return Path(config.paths.output_dir) / "model"


def _dump_yaml(path: Path, data: Dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, sort_keys=False, allow_unicode=True)


def _load_yaml(path: Path) -> Dict:
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


# ----------------------------------------------------------------------------
# Corpora
# ----------------------------------------------------------------------------

def read_split(config: ExperimentConfig, split: str) -> Optional[CorpusReadResult]:
    """
    Read one configured split; None when its files are not configured.

    Target supertags are read for the training split of syntax strategies
    only: decoding never needs them, and baseline runs ignore tag files.
    """
    files = config.paths.split_files(split)
    if files["src"] is None or files["tgt"] is None:
        return None
    tags = files["tags"] if split == "train" and config.strategy.needs_target_tags else None
    if split == "train" and config.strategy.needs_target_tags and tags is None:
        raise ConfigError(f"{config.strategy.mode.value} mode needs paths.train_tags")
    features = {name: feature_file(files["src"], name) for name in word_level_features(config)}
    return read_parallel_corpus(
        files["src"], files["tgt"], tags, features, strict=config.data.strict_alignment
    )


def segment_corpus(
    pairs: Sequence[AnnotatedSentencePair],
    merges: MergeTable,
    config: ExperimentConfig
) -> List[SegmentedPair]:
    return [segment_pair(pair, merges, config.strategy.source_features) for pair in pairs]


def _target_limit(config: ExperimentConfig) -> int:
    if config.strategy.target_mode == TargetMode.INTERLEAVED:
        return config.data.interleaved_max_len
    return config.data.max_len


def training_pairs(config: ExperimentConfig, merges: MergeTable) -> Tuple[CorpusReadResult, List[SegmentedPair], int]:
    """
    Read, segment and length-filter the training split.

    Returns:
        (read result, retained pairs, pairs dropped by the filter)
    """
    read = read_split(config, "train")
    if read is None:
        raise ConfigError("paths.train_src and paths.train_tgt are required")
    segmented = segment_corpus(read.pairs, merges, config)
    kept = filter_corpus(segmented, config.data.max_len, config.strategy.target_mode, _target_limit(config))
    return read, kept.pairs, kept.dropped


# ----------------------------------------------------------------------------
# Vocabularies
# ----------------------------------------------------------------------------

def build_experiment_vocabularies(pairs: Sequence[SegmentedPair], config: ExperimentConfig) -> Vocabularies:
    """Every vocabulary the configured strategy needs, from the training pairs"""
    source, target = build_vocabularies(
        pairs, config.strategy.target_mode, config.data.word_cap, config.data.tag_cap, config.data.joint_vocab
    )
    features = {name: build_feature_vocabulary(pairs, name) for name in config.strategy.source_features}
    tags = None
    if config.strategy.mode == IntegrationMode.MULTITASK:
        tags = build_tag_vocabulary(pairs, config.data.tag_cap)
    return Vocabularies(source=source, target=target, features=features, tags=tags)


def _vocab_files(directory: Path, role: str) -> Tuple[Path, Path]:
    return directory / f"vocab.{role}.txt", directory / f"vocab.{role}.tags"


def _roles(config: ExperimentConfig) -> List[str]:
    roles = ["src", "tgt"] + [f"feat.{name}" for name in config.strategy.source_features]
    if config.strategy.mode == IntegrationMode.MULTITASK:
        roles.append("tag")
    return roles


def save_vocabularies(vocabs: Vocabularies, directory: Path) -> None:
    vocabs.source.save(*_vocab_files(directory, "src"))
    vocabs.target.save(*_vocab_files(directory, "tgt"))
    for name, vocab in vocabs.features.items():
        vocab.save(*_vocab_files(directory, f"feat.{name}"))
    if vocabs.tags is not None:
        vocabs.tags.save(*_vocab_files(directory, "tag"))


def load_vocabularies(config: ExperimentConfig, directory: Optional[Path] = None) -> Vocabularies:
    """
    Raises:
        ConfigError: A vocabulary file is missing (preprocess has not run)
    """
    directory = directory or data_dir(config)
    loaded: Dict[str, Vocabulary] = {}
    for role in _roles(config):
        path, tag_path = _vocab_files(directory, role)
        if not path.is_file():
            raise ConfigError(
                f"vocabulary {path} not found; run preprocess for this config first",
                details={"path": str(path)}
            )
        loaded[role] = Vocabulary.load(path, tag_path)
    return Vocabularies(
        source=loaded["src"],
        target=loaded["tgt"],
        features={name: loaded[f"feat.{name}"] for name in config.strategy.source_features},
        tags=loaded.get("tag")
    )


def load_merges(config: ExperimentConfig) -> MergeTable:
    path = data_dir(config) / MERGES_FILE
    if not path.is_file():
        raise ConfigError(f"merge table {path} not found; run preprocess first", details={"path": str(path)})
    return MergeTable.load(path)


# ----------------------------------------------------------------------------
# preprocess
# ----------------------------------------------------------------------------

def _write_split(
    directory: Path,
    split: str,
    pairs: Sequence[SegmentedPair],
    config: ExperimentConfig,
    vocabs: Vocabularies,
    with_targets: bool
) -> None:
    sources = [encode_source(pair, config.strategy, vocabs) for pair in pairs]
    write_id_corpus(directory / f"{split}.src.ids", (rows[WORD_FEATURE] for rows in sources))
    for name in config.strategy.source_features:
        write_id_corpus(directory / f"{split}.feat.{name}.ids", (rows[name] for rows in sources))
    if not with_targets:
        return
    write_id_corpus(directory / f"{split}.tgt.ids", (encode_target(p, config.strategy, vocabs) for p in pairs))
    if config.strategy.mode == IntegrationMode.MULTITASK:
        write_id_corpus(directory / f"{split}.tag.ids", (encode_tag_target(p, vocabs) for p in pairs))
    if all(p.tgt_interleaved is not None for p in pairs) and config.strategy.needs_target_tags:
        write_lines(directory / f"{split}.tgt.interleaved", (" ".join(p.tgt_interleaved.tokens) for p in pairs))


def preprocess(config: ExperimentConfig) -> Manifest:
    """
    Learn BPE and vocabularies on the training split and write every
    model-facing artifact of the configured splits.

    Dev and test sources are encoded but not length-filtered, so their
    line numbers stay aligned with the references.

    Returns:
        The manifest written to data/manifest.yaml

    Raises:
        AlignmentError: Misaligned annotation lines (strict mode)
        ConfigError: Training files missing from the config
    """
    directory = data_dir(config)
    directory.mkdir(parents=True, exist_ok=True)

    read = read_split(config, "train")
    if read is None:
        raise ConfigError("paths.train_src and paths.train_tgt are required")
    words = [w for pair in read.pairs for w in pair.src_words + pair.tgt_words]
    merges = learn_bpe(words, config.data.bpe_merges, config.data.bpe_min_frequency)
    merges.save(directory / MERGES_FILE)

    segmented = segment_corpus(read.pairs, merges, config)
    kept = filter_corpus(segmented, config.data.max_len, config.strategy.target_mode, _target_limit(config))
    if not kept.pairs:
        raise ConfigError("no training pairs left after filtering", details={"read": len(read.pairs)})

    vocabs = build_experiment_vocabularies(kept.pairs, config)
    save_vocabularies(vocabs, directory)

    splits: Dict[str, SplitSummary] = {}
    _write_split(directory, "train", kept.pairs, config, vocabs, with_targets=True)
    splits["train"] = _summary(read, kept.pairs, kept.dropped)

    for split in ("dev", "test"):
        result = read_split(config, split)
        if result is None:
            continue
        pairs = segment_corpus(result.pairs, merges, config)
        _write_split(directory, split, pairs, config, vocabs, with_targets=False)
        splits[split] = _summary(result, pairs, 0)

    manifest = Manifest(
        mode=config.strategy.mode.value,
        seed=config.seed,
        merges=len(merges),
        vocabulary_sizes={role: len(vocab) for role, vocab in _by_role(vocabs).items()},
        vocabulary_hashes=vocabs.hashes(),
        splits=splits
    )
    _dump_yaml(directory / MANIFEST_FILE, manifest.model_dump(mode="json"))
    logger.info(
        f"✓ Preprocessed {splits['train'].retained} training pairs into {directory} "
        f"({len(merges)} merges, target vocabulary {len(vocabs.target)})"
    )
    return manifest


def _summary(read: CorpusReadResult, pairs: Sequence[SegmentedPair], filtered: int) -> SplitSummary:
    return SplitSummary(
        read=len(read.pairs) + len(read.unparsed_lines) + len(read.misaligned_lines),
        unparsed=len(read.unparsed_lines),
        misaligned=len(read.misaligned_lines),
        filtered=filtered,
        retained=len(pairs),
        statistics=corpus_statistics(pairs)
    )


def _by_role(vocabs: Vocabularies) -> Dict[str, Vocabulary]:
    roles = {"source": vocabs.source, "target": vocabs.target}
    roles.update({f"feature:{name}": vocab for name, vocab in vocabs.features.items()})
    if vocabs.tags is not None:
        roles["tag"] = vocabs.tags
    return roles


def load_manifest(config: ExperimentConfig) -> Manifest:
    path = data_dir(config) / MANIFEST_FILE
    if not path.is_file():
        raise ConfigError(f"{path} not found; run preprocess first", details={"path": str(path)})
    return Manifest.model_validate(_load_yaml(path))


# ----------------------------------------------------------------------------
# train
# ----------------------------------------------------------------------------

def run_train(config: ExperimentConfig) -> TrainingReport:
    """
    Train on the preprocessed training split, validating on the dev split.

    Raises:
        ConfigError: Preprocessing is missing or does not match this config
    """
    manifest = load_manifest(config)
    merges = load_merges(config)
    vocabs = load_vocabularies(config)
    if manifest.mode != config.strategy.mode.value or manifest.vocabulary_hashes != vocabs.hashes():
        raise ConfigError(
            "preprocessed data does not match this config; rerun preprocess",
            details={"manifest_mode": manifest.mode, "config_mode": config.strategy.mode.value}
        )
    check_vocabularies(config.strategy, vocabs)

    _, pairs, _ = training_pairs(config, merges)
    expected = manifest.splits["train"].retained
    if len(pairs) != expected:
        raise ConfigError(
            f"training split now yields {len(pairs)} pairs, manifest records {expected}; rerun preprocess",
            details={"pairs": len(pairs), "manifest": expected}
        )

    dev_pairs = dev_references = None
    dev = read_split(config, "dev")
    if dev is not None and dev.pairs:
        dev_pairs = segment_corpus(dev.pairs, merges, config)
        dev_references = [" ".join(pair.tgt_words) for pair in dev.pairs]

    spec = embedding_spec(config.strategy, config.model, vocabs)
    params = init_parameters(
        config.model, spec, model_decoders(config.strategy, vocabs), derive_seed(config.seed, "init")
    )
    out = model_dir(config)
    _, report = train(
        pairs, params, config.strategy, vocabs, config.train, out, config.seed,
        dev_pairs=dev_pairs, dev_references=dev_references, decode=config.decode
    )
    (out / CONFIG_COPY).write_text(serialize_config(config), encoding="utf-8")
    _dump_yaml(out / REPORT_FILE, report.model_dump(mode="json", exclude={"elapsed_seconds", "log"}))
    return report


def trained_checkpoints(config: ExperimentConfig) -> List[str]:
    """Configured ensemble, else the best (or last) checkpoint of training"""
    if config.paths.checkpoints:
        return list(config.paths.checkpoints)
    path = model_dir(config) / REPORT_FILE
    if not path.is_file():
        raise ConfigError(
            "no checkpoints configured and no training report found; train first or set paths.checkpoints",
            details={"report": str(path)}
        )
    report = _load_yaml(path)
    best = report.get("best_checkpoint") or report.get("last_checkpoint")
    return [best]


# ----------------------------------------------------------------------------
# translate
# ----------------------------------------------------------------------------

def read_sources(config: ExperimentConfig, path: PathLike) -> List[Optional[AnnotatedSentencePair]]:
    """
    Source sentences to translate, one entry per input line (None for blank lines).

    Raises:
        AlignmentError: A feature file does not line up with the input
    """
    lines = read_lines(path)
    features = {name: read_lines(feature_file(path, name)) for name in word_level_features(config)}
    for name, rows in features.items():
        if len(rows) != len(lines):
            raise AlignmentError(
                f"feature file for '{name}' has {len(rows)} lines, input has {len(lines)}",
                details={"feature": name}
            )

    sources: List[Optional[AnnotatedSentencePair]] = []
    misaligned: List[int] = []
    for index, line in enumerate(lines):
        words = line.split()
        row_features = {name: rows[index].split() for name, rows in features.items()}
        if not words:
            sources.append(None)
        elif any(len(values) != len(words) for values in row_features.values()):
            misaligned.append(index + 1)
            sources.append(None)
        else:
            sources.append(AnnotatedSentencePair(src_words=words, src_features=row_features, tgt_words=[]))
    if misaligned:
        raise AlignmentError(
            f"{len(misaligned)} feature lines are not token-aligned with the input",
            details={"lines": misaligned}
        )
    return sources


def load_translator(config: ExperimentConfig, checkpoints: Optional[Sequence[str]] = None) -> Tuple[Translator, List[str]]:
    """
    Raises:
        CheckpointError: Members do not match each other or the vocabularies
        ConfigError: Checkpoints trained for another strategy
    """
    checkpoints = list(checkpoints) if checkpoints else trained_checkpoints(config)
    vocabs = load_vocabularies(config)
    members = load_ensemble(EnsembleSpec(checkpoints=checkpoints), vocabs.hashes())
    mode = members[0][1].mode
    if mode != config.strategy.mode.value:
        raise ConfigError(
            f"checkpoints were trained in {mode} mode, config says {config.strategy.mode.value}",
            details={"checkpoint_mode": mode}
        )
    translator = Translator([params for params, _ in members], config.strategy, vocabs, config.decode)
    return translator, checkpoints


def run_translate(
    config: ExperimentConfig,
    input_path: Optional[PathLike] = None,
    output_path: Optional[PathLike] = None,
    checkpoints: Optional[Sequence[str]] = None,
    beam: Optional[int] = None,
    threads: Optional[int] = None
) -> TranslationSummary:
    """
    Translate a source file line by line; blank lines give blank outputs.

    Writes the translations, and for syntax strategies a '.tags' file of
    predicted supertags (plus '.annotated' word|TAG lines for interleaving).
    """
    input_path = input_path or config.paths.test_src
    if input_path is None:
        raise ConfigError("no input file: pass one or set paths.test_src")
    output_path = Path(output_path or Path(config.paths.output_dir) / f"{Path(input_path).name}.hyp")
    output_path.parent.mkdir(parents=True, exist_ok=True)

    translator, used = load_translator(config, checkpoints)
    merges = load_merges(config)
    sources = read_sources(config, input_path)
    present = [pair for pair in sources if pair is not None]
    results = iter(translator.translate_corpus(segment_corpus(present, merges, config), beam, threads))
    ordered: List[Optional[TranslationResult]] = [next(results) if pair is not None else None for pair in sources]

    write_lines(output_path, (r.text if r else "" for r in ordered))
    summary = TranslationSummary(
        output=str(output_path),
        sentences=len(ordered),
        empty=sum(1 for r in ordered if r is None or not r.text),
        alternation_violations=sum(r.alternation_violations for r in ordered if r),
        checkpoints=used
    )
    if config.strategy.mode != IntegrationMode.BASELINE:
        tags_path = Path(f"{output_path}.tags")
        write_lines(tags_path, (" ".join(r.tags) if r else "" for r in ordered))
        summary.tags_output = str(tags_path)
    if config.strategy.mode == IntegrationMode.INTERLEAVED:
        annotated_path = Path(f"{output_path}.annotated")
        write_lines(annotated_path, (r.annotated if r else "" for r in ordered))
        summary.annotated_output = str(annotated_path)
    logger.info(f"✓ Wrote {summary.sentences} translations to {output_path}")
    return summary


# ----------------------------------------------------------------------------
# score / analyze
# ----------------------------------------------------------------------------

def run_score(
    hypothesis_path: PathLike,
    reference_path: PathLike,
    baseline_path: Optional[PathLike] = None,
    resamples: int = 1000,
    seed: int = 0
) -> Tuple[BleuScore, Optional[BleuScore], Optional[SignificanceResult]]:
    """
    Corpus BLEU of a hypothesis file, optionally tested against a baseline.

    Returns:
        (system BLEU, baseline BLEU, significance of "system beats baseline")
    """
    hypotheses = read_lines(hypothesis_path)
    references = read_lines(reference_path)
    system = corpus_bleu(hypotheses, references)
    if baseline_path is None:
        return system, None, None
    baseline_lines = read_lines(baseline_path)
    baseline = corpus_bleu(baseline_lines, references)
    significance = bootstrap_significance(
        baseline_lines, hypotheses, references, resamples, derive_seed(seed, "bootstrap")
    )
    return system, baseline, significance


def source_bpe_lengths(config: ExperimentConfig, source_path: PathLike) -> List[int]:
    """
    Source lengths in BPE units under the experiment merge table (blank lines
    count as 1). Falls back to word counts when preprocess has not run.
    """
    path = data_dir(config) / MERGES_FILE
    merges = MergeTable.load(path) if path.is_file() else None
    if merges is None:
        logger.warning(f"✗ No merge table at {path}; length buckets use word counts")
    lengths = []
    for line in read_lines(source_path):
        words = line.split()
        units = len(words) if merges is None else sum(len(u) for u in segment_words(words, merges))
        lengths.append(max(units, 1))
    return lengths


def run_analyze(
    config: ExperimentConfig,
    hypothesis_path: PathLike,
    baseline_path: Optional[PathLike] = None,
    reference_path: Optional[PathLike] = None,
    source_path: Optional[PathLike] = None,
    reference_tags_path: Optional[PathLike] = None,
    hypothesis_tags_path: Optional[PathLike] = None,
    output_path: Optional[PathLike] = None,
    resamples: Optional[int] = None
) -> Tuple[EvaluationReport, Path]:
    """
    Construct and length breakdown of one system (against a baseline when given).

    Reference, source and reference-tag files default to the test split of
    the config. Predicted tags default to '<hypothesis>.tags' when it exists.

    Returns:
        (report, path of the TSV written)
    """
    reference_path = reference_path or config.paths.test_tgt
    source_path = source_path or config.paths.test_src
    reference_tags_path = reference_tags_path or config.paths.test_tags
    if reference_path is None:
        raise ConfigError("no reference file: pass one or set paths.test_tgt")
    if hypothesis_tags_path is None and Path(f"{hypothesis_path}.tags").is_file():
        hypothesis_tags_path = f"{hypothesis_path}.tags"

    hypotheses = read_lines(hypothesis_path)
    references = read_lines(reference_path)
    baseline = read_lines(baseline_path) if baseline_path is not None else None
    source_lengths = source_bpe_lengths(config, source_path) if source_path else None
    reference_tags = [line.split() for line in read_lines(reference_tags_path)] if reference_tags_path else None

    rules = []
    if reference_tags is not None:
        if not Path(config.evaluation.rule_file).is_file():
            raise ConfigError(
                f"construct rule file not found: {config.evaluation.rule_file}",
                details={"path": config.evaluation.rule_file}
            )
        rules = load_construct_rules(config.evaluation.rule_file)

    if resamples is None:
        resamples = config.evaluation.resamples
    subsets = standard_subsets(len(references), reference_tags, source_lengths, rules)
    report = breakdown_report(
        hypotheses, baseline, references, subsets,
        resamples=resamples if baseline is not None else 0,
        seed=derive_seed(config.seed, "bootstrap")
    )
    if hypothesis_tags_path is not None and reference_tags is not None:
        predicted = [line.split() for line in read_lines(hypothesis_tags_path)]
        report.tag_accuracy = tag_accuracy(predicted, reference_tags)

    output_path = Path(output_path or f"{hypothesis_path}.analysis.tsv")
    output_path.write_text(render_tsv(report), encoding="utf-8")
    logger.info(f"✓ Analysis of {len(references)} sentences written to {output_path}")
    return report, output_path


# ----------------------------------------------------------------------------
# Dispatch
# ----------------------------------------------------------------------------

def run_subcommand(name: str, config: ExperimentConfig, **options) -> SubcommandResult:
    """
    Run one pipeline step by name.

    Options left as None fall back to the step's defaults.

    Args:
        name: preprocess, train, translate, score or analyze
        config: Experiment config
        **options: Step arguments (file paths, beam, threads, ...)

    Returns:
        Exit status 0 and the step's artifacts

    Raises:
        ConfigError: Unknown subcommand
        SNMTError: Any failure of the step itself
    """
    options = {key: value for key, value in options.items() if value is not None}
    if name == "preprocess":
        artifacts = preprocess(config)
    elif name == "train":
        artifacts = run_train(config)
    elif name == "translate":
        artifacts = run_translate(config, **options)
    elif name == "score":
        options.setdefault("resamples", config.evaluation.resamples)
        options.setdefault("seed", config.seed)
        artifacts = run_score(**options)
    elif name == "analyze":
        artifacts = run_analyze(config, **options)
    else:
        raise ConfigError(
            f"unknown subcommand '{name}' (choose from {', '.join(SUBCOMMANDS)})",
            details={"subcommand": name}
        )
    return SubcommandResult(name=name, status=0, artifacts=artifacts)
