"""
Custom exception classes for the aesthetic enhancement engine.

This module defines a hierarchy of exceptions that provide clear error
semantics throughout the numerics, diffusion, data and training stack.
"""

from typing import Any, Dict, Optional, Sequence


class DiaeException(Exception):
    """Base exception for all aesthetic enhancement engine errors."""

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.error_code = error_code or self.__class__.__name__
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for diagnostics."""
        return {
            "error": self.error_code,
            "message": self.message,
            "details": self.details,
        }


# Configuration Errors


class ConfigurationError(DiaeException):
    """Raised when there's a configuration problem."""

    pass


class UnknownConfigKeyError(ConfigurationError):
    """Raised when a config file or flag names an unknown key."""

    def __init__(self, key: str, line: Optional[int] = None):
        details: Dict[str, Any] = {"key": key}
        if line is not None:
            details["line"] = line
        super().__init__(
            message=f"Unknown configuration key: {key}",
            error_code="UNKNOWN_CONFIG_KEY",
            details=details,
        )


# Numerics Errors


class NumericsError(DiaeException):
    """Base class for tensor engine errors."""

    pass


class ShapeMismatchError(NumericsError):
    """Raised when operand shapes are inconsistent."""

    def __init__(self, op: str, shapes: Sequence[Sequence[int]], reason: str = ""):
        super().__init__(
            message=f"Shape mismatch in {op}: {[tuple(s) for s in shapes]} {reason}".rstrip(),
            error_code="SHAPE_MISMATCH",
            details={"op": op, "shapes": [list(s) for s in shapes]},
        )


class UnsupportedOpError(NumericsError):
    """Raised when a primitive outside the supported set is requested."""

    def __init__(self, op: str):
        super().__init__(
            message=f"Unsupported primitive: {op}",
            error_code="UNSUPPORTED_OP",
            details={"op": op},
        )


class NonFiniteError(NumericsError):
    """Raised when a forward value or loss contains NaN or Inf."""

    def __init__(self, where: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"Non-finite value produced by {where}",
            error_code="NON_FINITE",
            details={"where": where, **(details or {})},
        )


class TapeStateError(NumericsError):
    """Raised when backpropagation is requested on an unusable tape."""

    pass


# Diffusion Errors


class DiffusionError(DiaeException):
    """Base class for diffusion-core errors."""

    pass


class ScheduleError(DiffusionError):
    """Raised when noise schedule bounds are invalid."""

    pass


class TimestepRangeError(DiffusionError):
    """Raised when a timestep lies outside [1, T]."""

    def __init__(self, t: int, T: int):
        super().__init__(
            message=f"Timestep {t} outside [1, {T}]",
            error_code="TIMESTEP_RANGE",
            details={"t": t, "T": T},
        )


class StepCountError(DiffusionError):
    """Raised when a sampler step count is invalid."""

    pass


# Conditioning Errors


class ConditioningError(DiaeException):
    """Base class for map-conditioning errors."""

    pass


class PixelRangeError(ConditioningError):
    """Raised when an image is not an RGB array with values in [0, 1]."""

    pass


class UnknownTokenError(ConditioningError):
    """Raised when an assessment token is not in the fixed vocabulary."""

    def __init__(self, token: str):
        super().__init__(
            message=f"Unknown assessment token: {token!r}",
            error_code="UNKNOWN_TOKEN",
            details={"token": token},
        )


class AdapterNotInitializedError(ConditioningError):
    """Raised when a control signal is injected without adapter parameters."""

    pass


class MissingComponentError(ConditioningError):
    """Raised when a control signal is assembled from incomplete parts."""

    pass


# Pairing Errors


class PairingError(DiaeException):
    """Base class for dataset and pairing errors."""

    pass


class SceneSpecError(PairingError):
    """Raised when a scene specification cannot be rendered."""

    pass


class ParameterRangeError(PairingError):
    """Raised when aesthetic parameters fall outside their ranges."""

    pass


class EmptyCorpusError(PairingError):
    """Raised when an operation requires a non-empty corpus."""

    pass


# Persistence Errors


class PersistenceError(DiaeException):
    """Base class for persistence-related errors."""

    pass


class CorpusIOError(PersistenceError):
    """Raised when corpus files cannot be read or written."""

    pass


class CheckpointFormatError(PersistenceError):
    """Raised when a checkpoint file is malformed."""

    pass


class CheckpointMismatchError(PersistenceError):
    """Raised when a checkpoint does not match the requested configuration."""

    pass


# Training Errors


class TrainingError(DiaeException):
    """Base class for training errors."""

    pass


class FoldPolicyError(TrainingError):
    """Raised when an unknown timestep fold policy is requested."""

    def __init__(self, policy: str):
        super().__init__(
            message=f"Unknown fold policy: {policy}",
            error_code="FOLD_POLICY",
            details={"policy": policy},
        )


class TrainingDivergedError(TrainingError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, step: int, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"Non-finite loss at step {step}",
            error_code="TRAINING_DIVERGED",
            details={"step": step, **(details or {})},
        )


# Evaluation Errors


class EvaluationError(DiaeException):
    """Base class for evaluation and ablation errors."""

    pass


class BudgetExceededError(EvaluationError):
    """Raised when an ablation grid exceeds its configured step cap."""

    def __init__(self, requested: int, cap: int):
        super().__init__(
            message=f"Ablation requires {requested} training steps, cap is {cap}",
            error_code="BUDGET_EXCEEDED",
            details={"requested": requested, "cap": cap},
        )
