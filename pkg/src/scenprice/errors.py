"""Exception types raised by scenprice."""


class ScenpriceError(Exception):
    """Base class for all scenprice errors."""


class InvalidArgument(ScenpriceError):
    """An argument violates a precondition (wrong sign, range, or count)."""


class InvalidValue(ScenpriceError):
    """A numeric input is non-finite or otherwise unusable."""


class InvalidTimeGrid(ScenpriceError):
    """A time grid is empty, unsorted, or contains duplicates."""


class MalformedScenarioData(ScenpriceError):
    """Tabular scenario input is missing cells or structurally broken."""


class GridMismatch(ScenpriceError):
    """A requested time is not part of the relevant grid."""


class UninitializableForkState(ScenpriceError):
    """A forked path's initial state cannot be derived from physical data."""


class EmptySampleSet(ScenpriceError):
    """A fit was requested on zero samples."""


class InsufficientSamples(ScenpriceError):
    """A per-timestep fit has no active samples at a requested time."""

    def __init__(self, message: str, time_index: int | None = None):
        super().__init__(message)
        self.time_index = time_index


class UnsupportedTimestep(ScenpriceError):
    """Evaluation requested at a time the smoother was not fitted for."""


class ShapeError(ScenpriceError):
    """Array or tuple dimensions do not match the expected layout."""


class EmptyDistribution(ScenpriceError):
    """A risk measure was requested on an empty loss distribution."""


class InsufficientData(ScenpriceError):
    """Too few samples for the requested statistic."""


class IncompatibleArtifact(ScenpriceError):
    """A persisted run artifact has an unsupported version."""


class ConfigError(ScenpriceError):
    """A configuration document is invalid; the message names the field."""


class PipelineError(ScenpriceError):
    """A pipeline stage failed; `stage` identifies which one."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
