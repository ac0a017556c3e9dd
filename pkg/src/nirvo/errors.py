"""Exception hierarchy shared across the pipeline."""


class PipelineError(Exception):
    """Base class for every error raised by nirvo."""


# core
class TimestampOutOfRange(PipelineError):
    pass


class EmptyStream(PipelineError):
    pass


# preprocess
class NoVignette(PipelineError):
    pass


class DegenerateCrop(PipelineError):
    pass


# features
class KindMismatch(PipelineError):
    pass


# epipolar
class DegenerateSample(PipelineError):
    pass


class DecompositionFailure(PipelineError):
    pass


class InsufficientMatches(PipelineError):
    pass


class NoModelFound(PipelineError):
    pass


# metrics
class EmptyVideo(PipelineError):
    pass


class NoModelsFound(PipelineError):
    pass


# synth
class UnknownBand(PipelineError):
    pass


class WallOutOfView(PipelineError):
    pass


class IoError(PipelineError, OSError):
    pass


# harness
class ManifestError(PipelineError):
    pass


class MissingImu(PipelineError):
    pass


class ConfigError(PipelineError):
    pass


class MismatchedRuns(PipelineError):
    pass
