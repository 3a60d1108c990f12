"""
Error types for SyntaxNMT

Every error carries a machine-readable code, a message and optional details,
rendered by to_dict() in the same envelope the CLI prints.
"""

from typing import Any, Dict, Optional


class SNMTError(Exception):
    """Base error with code/message/details"""

    code = "SNMT_ERROR"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": {
                "code": self.code,
                "message": self.message,
                "details": self.details
            }
        }


class ShapeError(SNMTError):
    """Tensor primitive received inputs violating its shape contract"""
    code = "SHAPE_ERROR"


class TapeError(SNMTError):
    """Invalid use of a tape (non-scalar loss, foreign node)"""
    code = "TAPE_ERROR"


class NonFiniteError(SNMTError):
    """NaN or infinity produced by a forward op or found in a gradient"""
    code = "NON_FINITE"


class AlignmentError(SNMTError):
    """Token-aligned annotations disagree in length"""
    code = "ALIGNMENT_ERROR"


class VocabularyError(SNMTError):
    """Vocabulary construction or lookup problem"""
    code = "VOCABULARY_ERROR"


class CheckpointError(SNMTError):
    """Unreadable checkpoint or incompatible vocabularies"""
    code = "CHECKPOINT_ERROR"


class ConfigError(SNMTError):
    """Invalid experiment configuration"""
    code = "CONFIG_ERROR"


class TrainingError(SNMTError):
    """Training cannot proceed"""
    code = "TRAINING_ERROR"


class EvaluationError(SNMTError):
    """Scoring inputs are inconsistent"""
    code = "EVALUATION_ERROR"
