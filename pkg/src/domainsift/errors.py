"""Exception types shared across the toolkit.

Every error raised on a documented failure path derives from
:class:`DomainSiftError`, so callers (and the CLI) can distinguish
our failures from programming errors.
"""


class DomainSiftError(Exception):
    """Base class for all toolkit errors."""


# --- corpus I/O ---

class MisalignedCorpus(DomainSiftError):
    def __init__(self, source_lines: int, target_lines: int):
        super().__init__(
            f"parallel corpus misaligned: source has {source_lines} lines, "
            f"target has {target_lines}"
        )
        self.source_lines = source_lines
        self.target_lines = target_lines


class InvalidEncoding(DomainSiftError):
    def __init__(self, path, byte_offset: int):
        super().__init__(f"{path}: invalid UTF-8 at byte offset {byte_offset}")
        self.path = path
        self.byte_offset = byte_offset


class SampleTooLarge(DomainSiftError):
    pass


# --- binary formats ---

class IoFailure(DomainSiftError):
    pass


class BadMagic(DomainSiftError):
    pass


class VersionMismatch(DomainSiftError):
    pass


class TruncatedFile(DomainSiftError):
    def __init__(self, path, expected_bytes: int, actual_bytes: int):
        super().__init__(
            f"{path}: truncated, expected {expected_bytes} payload bytes, "
            f"found {actual_bytes}"
        )
        self.path = path
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes


# --- numerics ---

class DimsMismatch(DomainSiftError):
    pass


class NonFiniteInput(DomainSiftError):
    pass


class DegenerateSample(DomainSiftError):
    pass


# --- search / selection ---

class InsufficientDocs(DomainSiftError):
    pass


class IndexOutOfRange(DomainSiftError):
    pass


class MissingTarget(DomainSiftError):
    pass


class MissingRankFile(DomainSiftError):
    pass


# --- diagnostics ---

class EmptyMatrix(DomainSiftError):
    pass


class LengthMismatch(DomainSiftError):
    pass


class EmptyCorpus(DomainSiftError):
    pass


# --- pipeline ---

class BackendUnavailable(DomainSiftError):
    pass


class StageFailed(DomainSiftError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
