"""Exception taxonomy shared across the package.

Every error raised on purpose derives from GgsaError so callers (and the CLI)
can distinguish our diagnostics from genuine bugs.
"""


class GgsaError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(GgsaError):
    """Operand shapes or ranks are incompatible for the requested op."""


class ContractError(GgsaError):
    """An API contract was violated (non-scalar backward root, bad argument)."""


class ConfigError(GgsaError):
    """A configuration value is out of range or internally inconsistent."""


class DegenerateMaskError(GgsaError):
    """A mask left no valid entries where at least one was required."""


class InputError(GgsaError):
    """Input data is malformed (out-of-vocabulary token, bad file line)."""


class DataError(GgsaError):
    """A dataset violates its invariants (no positive candidate, empty split)."""


class TrainingDivergedError(GgsaError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class CheckpointError(GgsaError):
    """Base class for checkpoint read/write failures."""


class ChecksumMismatchError(CheckpointError):
    """Stored CRC32 does not match the file contents."""


class VersionMismatchError(CheckpointError):
    """Unsupported checkpoint format version."""


class TruncatedCheckpointError(CheckpointError):
    """File ended before a complete record could be read."""


class ConfigConflictError(CheckpointError):
    """Checkpoint config disagrees with the config requested by the caller."""
