"""
Experiment config files

Line-oriented 'section.key = value' text. '#' starts a comment line, lists
are comma-separated, mappings are 'name:value' items, and 'none' clears an
optional value. The top-level seed is written as 'seed = N'.
"""

import logging
import types
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union, get_args, get_origin

from pydantic import BaseModel, ValidationError

from backend.app.core.exceptions import ConfigError
from backend.app.modules.data.service import IOB_FEATURE
from backend.app.modules.experiment.schemas import SPLITS, ExperimentConfig

logger = logging.getLogger(__name__)

NONE_VALUES = ("", "none", "null")
UNION_TYPES = (Union, getattr(types, "UnionType", Union))


def _sections() -> Dict[str, type]:
    sections = {}
    for name, field in ExperimentConfig.model_fields.items():
        if isinstance(field.annotation, type) and issubclass(field.annotation, BaseModel):
            sections[name] = field.annotation
    return sections


def _field(key: str, line: Optional[int] = None):
    """Field info for a dotted key, or ConfigError for unknown keys"""
    where = {"key": key} if line is None else {"key": key, "line": line}
    if "." not in key:
        if key in ExperimentConfig.model_fields and key not in _sections():
            return ExperimentConfig.model_fields[key]
        raise ConfigError(f"unknown config key '{key}'", details=where)
    section, name = key.split(".", 1)
    model = _sections().get(section)
    if model is None or name not in model.model_fields:
        raise ConfigError(f"unknown config key '{key}'", details=where)
    return model.model_fields[name]


def _strip_optional(annotation: Any) -> Tuple[Any, bool]:
    if get_origin(annotation) in UNION_TYPES:
        args = [a for a in get_args(annotation) if a is not type(None)]
        if len(args) < len(get_args(annotation)):
            return args[0], True
    return annotation, False


def _coerce(annotation: Any, raw: str) -> Any:
    """Turn raw text into something pydantic can validate for this field"""
    annotation, optional = _strip_optional(annotation)
    raw = raw.strip()
    if optional and raw.lower() in NONE_VALUES:
        return None
    origin = get_origin(annotation)
    if origin is list:
        return [item.strip() for item in raw.split(",") if item.strip()]
    if origin is dict:
        mapping = {}
        for item in (i.strip() for i in raw.split(",")):
            if not item:
                continue
            name, sep, value = item.partition(":")
            if not sep:
                raise ValueError(f"expected 'name:value', got {item!r}")
            mapping[name.strip()] = value.strip()
        return mapping
    return raw


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format(v) for v in value)
    if isinstance(value, dict):
        return ",".join(f"{k}:{_format(v)}" for k, v in value.items())
    return str(value)


# ----------------------------------------------------------------------------
# Parsing
# ----------------------------------------------------------------------------

def parse_assignments(lines: Sequence[str], source: str = "<config>") -> Dict[str, str]:
    """
    Raw 'key = value' assignments of a config text.

    Raises:
        ConfigError: Malformed line, unknown key or duplicate key
    """
    assignments: Dict[str, str] = {}
    for line_no, line in enumerate(lines, 1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        key, sep, value = text.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value'", details={"line": line_no})
        _field(key, line_no)
        if key in assignments:
            raise ConfigError(f"{source}:{line_no}: duplicate key '{key}'", details={"line": line_no})
        assignments[key] = value.strip()
    return assignments


def parse_overrides(overrides: Sequence[str]) -> Dict[str, str]:
    """'key=value' command-line overrides; later ones win"""
    assignments: Dict[str, str] = {}
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not 'key=value'", details={"override": item})
        key = key.strip()
        _field(key)
        assignments[key] = value.strip()
    return assignments


def build_config(assignments: Dict[str, str]) -> ExperimentConfig:
    """
    Validate raw assignments into an ExperimentConfig.

    Raises:
        ConfigError: A value fails validation
    """
    tree: Dict[str, Any] = {}
    for key, raw in assignments.items():
        field = _field(key)
        try:
            value = _coerce(field.annotation, raw)
        except ValueError as e:
            raise ConfigError(f"bad value for '{key}': {e}", details={"key": key, "value": raw})
        if "." in key:
            section, name = key.split(".", 1)
            tree.setdefault(section, {})[name] = value
        else:
            tree[key] = value

    try:
        return ExperimentConfig.model_validate(tree)
    except ValidationError as e:
        errors = [
            {"key": ".".join(str(part) for part in err["loc"]), "message": err["msg"]}
            for err in e.errors()
        ]
        first = errors[0] if errors else {"key": "?", "message": str(e)}
        raise ConfigError(
            f"invalid config value for '{first['key']}': {first['message']}",
            details={"errors": errors}
        )


def parse_config(text: str, overrides: Sequence[str] = (), source: str = "<config>") -> ExperimentConfig:
    """Parse config text, then apply command-line overrides"""
    assignments = parse_assignments(text.splitlines(), source)
    assignments.update(parse_overrides(overrides))
    return build_config(assignments)


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Sequence[str] = (),
    check: bool = True
) -> ExperimentConfig:
    """
    Load an experiment config file (defaults only when path is None).

    Args:
        path: Config file
        overrides: 'key=value' overrides applied on top of the file
        check: Verify that every configured input file exists

    Raises:
        ConfigError: Missing file, bad key or value, missing input paths
    """
    text = ""
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}", details={"path": str(path)})
        text = path.read_text(encoding="utf-8")
    config = parse_config(text, overrides, source=str(path or "<defaults>"))
    if check:
        check_paths(config)
    logger.info(f"✓ Config loaded ({config.strategy.mode.value}, seed {config.seed})")
    return config


def serialize_config(config: ExperimentConfig) -> str:
    """Every field as 'section.key = value', in declaration order"""
    lines: List[str] = []
    for section in _sections():
        block = getattr(config, section)
        lines.append(f"# {section}")
        for name in type(block).model_fields:
            lines.append(f"{section}.{name} = {_format(getattr(block, name))}")
        lines.append("")
    lines.append(f"seed = {config.seed}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# Path checks
# ----------------------------------------------------------------------------

def feature_file(source_path: Union[str, Path], feature: str) -> Path:
    """Word-level feature file that accompanies a source file"""
    return Path(f"{source_path}.{feature}")


def word_level_features(config: ExperimentConfig) -> List[str]:
    """Configured source features read from files (everything but iob)"""
    return [name for name in config.strategy.source_features if name != IOB_FEATURE]


def check_paths(config: ExperimentConfig) -> None:
    """
    Every configured input file must exist; syntax strategies need training tags.

    Raises:
        ConfigError: Listing the missing files
    """
    paths = config.paths
    missing: List[str] = []
    for split in SPLITS:
        files = paths.split_files(split)
        for kind, value in files.items():
            if value is not None and not Path(value).is_file():
                missing.append(f"paths.{split}_{kind}: {value}")
        if files["src"] is not None:
            for name in word_level_features(config):
                if not feature_file(files["src"], name).is_file():
                    missing.append(f"feature '{name}' of paths.{split}_src: {feature_file(files['src'], name)}")
    for checkpoint in paths.checkpoints:
        if not Path(checkpoint).is_file():
            missing.append(f"paths.checkpoints: {checkpoint}")
    if missing:
        raise ConfigError(f"{len(missing)} configured file(s) not found", details={"missing": missing})

    if config.strategy.needs_target_tags and paths.train_src is not None and paths.train_tags is None:
        raise ConfigError(
            f"{config.strategy.mode.value} mode needs paths.train_tags",
            details={"mode": config.strategy.mode.value}
        )
