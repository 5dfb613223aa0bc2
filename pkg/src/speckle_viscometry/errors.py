"""Exception hierarchy for speckle-viscometry.

Every error carries the exit code the ``speckle`` command line returns when
the error escapes a subcommand.
"""


class SpeckleError(Exception):
    """Base class for all speckle-viscometry errors."""

    exit_code = 1


class InvalidArgumentError(SpeckleError, ValueError):
    """An argument or configuration value is out of its allowed range."""

    exit_code = 2


class InvariantViolationError(InvalidArgumentError):
    """An input object breaks a structural invariant (e.g. mixed frame sizes)."""


class FrameStoreError(SpeckleError):
    """Base class for on-disk sequence errors."""

    exit_code = 2


class MissingMetadataError(FrameStoreError):
    """The sequence directory has no readable metadata.json."""


class MissingFrameError(FrameStoreError):
    """A frame file named by the metadata is absent."""

    def __init__(self, index: int, path: str) -> None:
        """Record the first missing frame index."""
        super().__init__(f"Missing frame {index}: {path}")
        self.index = index
        self.path = path


class MalformedFrameError(FrameStoreError):
    """A PGM/PPM file has a bad header, a truncated body or wrong dimensions."""

    def __init__(self, path: str, reason: str) -> None:
        """Record the offending file."""
        super().__init__(f"Malformed frame file {path}: {reason}")
        self.path = path
        self.reason = reason


class EmptySequenceError(FrameStoreError):
    """A sequence holds no frames."""


class SequenceTooShortError(FrameStoreError):
    """Trimming would leave fewer frames than the analysis needs."""

    def __init__(self, available: int, required: int) -> None:
        """Record how many frames remain and how many are required."""
        super().__init__(f"Sequence too short: {available} frames remain after trimming, at least {required} required")
        self.available = available
        self.required = required


class AnalysisError(SpeckleError):
    """Base class for failures of the numerical analysis."""

    exit_code = 3


class DegenerateTraceError(AnalysisError):
    """The intensity trace is constant and cannot be normalized."""


class DegenerateFrameError(AnalysisError):
    """A frame region has zero variance or zero mean."""

    def __init__(self, message: str, frame_index: int | None = None) -> None:
        """Record the offending frame index, if known."""
        if frame_index is not None:
            message = f"{message} (frame {frame_index})"
        super().__init__(message)
        self.frame_index = frame_index


class InsufficientPeaksError(AnalysisError):
    """Fewer usable peaks survived than the selection window needs."""

    def __init__(self, found: int, required: int) -> None:
        """Record how many peaks were found."""
        super().__init__(f"Insufficient peaks: found {found}, need {required}")
        self.found = found
        self.required = required


class RegionTooSmallError(AnalysisError):
    """The crop region is smaller than the feature grid; upsampling is not allowed."""


class CalibrationError(AnalysisError):
    """A calibration curve cannot be fitted."""


class TrainingError(AnalysisError):
    """An SVM sub-problem cannot be trained."""

    def __init__(self, message: str, pair: tuple[int, int] | None = None) -> None:
        """Record the class pair that failed."""
        if pair is not None:
            message = f"{message} (classes {pair[0]} vs {pair[1]})"
        super().__init__(message)
        self.pair = pair


class StageError(SpeckleError):
    """Wraps an error raised inside one stage of an experiment run."""

    def __init__(self, stage: str, sequence_id: str, cause: Exception) -> None:
        """Record the stage name and the sequence being processed."""
        super().__init__(f"Stage '{stage}' failed for sequence '{sequence_id}': {cause}")
        self.stage = stage
        self.sequence_id = sequence_id
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
