"""
Experiment Module

Config-driven pipeline: the experiment config file format and the
preprocess / train / translate / score / analyze steps.
"""

from .config_file import (
    build_config,
    check_paths,
    feature_file,
    load_config,
    parse_config,
    parse_overrides,
    serialize_config,
)
from .schemas import (
    DataConfig,
    EvaluationConfig,
    ExperimentConfig,
    Manifest,
    PathsConfig,
    SplitSummary,
    SubcommandResult,
    TranslationSummary,
)
from .service import (
    SUBCOMMANDS,
    data_dir,
    load_manifest,
    load_vocabularies,
    model_dir,
    preprocess,
    run_analyze,
    run_score,
    run_subcommand,
    run_train,
    run_translate,
)

__all__ = [
    # Config
    "DataConfig",
    "EvaluationConfig",
    "ExperimentConfig",
    "PathsConfig",
    "build_config",
    "check_paths",
    "feature_file",
    "load_config",
    "parse_config",
    "parse_overrides",
    "serialize_config",

    # Pipeline
    "Manifest",
    "SUBCOMMANDS",
    "SplitSummary",
    "SubcommandResult",
    "TranslationSummary",
    "data_dir",
    "load_manifest",
    "load_vocabularies",
    "model_dir",
    "preprocess",
    "run_analyze",
    "run_score",
    "run_subcommand",
    "run_train",
    "run_translate",
]
