"""Error types shared across the package.

Every error carries a stable ``code`` string so CLI/service layers can map
failures to exit codes and HTTP responses without string-matching messages.
"""


class CoshandError(Exception):
    code = "internal"

    def __init__(self, message=""):
        super().__init__(message or self.code)


class ShapeMismatchError(CoshandError):
    code = "shape_mismatch"


class GenerationFailureError(CoshandError):
    code = "generation_failure"


class InvalidTargetError(CoshandError):
    code = "invalid_target"


class OutOfBoundsError(CoshandError):
    code = "out_of_bounds"


class IOFailureError(CoshandError):
    code = "io_failure"


class UnreadableVideoError(CoshandError):
    code = "unreadable_video"


class ZeroFramesError(CoshandError):
    code = "zero_frames"


class TooShortError(CoshandError):
    code = "too_short"


class AdapterUnavailableError(CoshandError):
    code = "adapter_unavailable"


class NoDetectionError(CoshandError):
    code = "no_detection"


class AllSamplesSkippedError(CoshandError):
    code = "all_samples_skipped"


class NonBinaryInputError(CoshandError):
    code = "nonbinary_input"


class CodecMismatchError(CoshandError):
    code = "codec_mismatch"


class InsufficientDataError(CoshandError):
    code = "insufficient_data"


class InvalidTimestepCountError(CoshandError):
    code = "invalid_T"


class TimestepOutOfRangeError(CoshandError):
    code = "timestep_out_of_range"


class IncompatibleCheckpointError(CoshandError):
    code = "incompatible_checkpoint"


class CheckpointMissingError(CoshandError):
    code = "checkpoint_missing"


class DivergedError(CoshandError):
    code = "diverged"


class EmptySplitError(CoshandError):
    code = "empty_split"


class TooSmallError(CoshandError):
    code = "too_small"


class BackendMissingError(CoshandError):
    code = "backend_missing"


class EmptyResultError(CoshandError):
    code = "empty_result"
