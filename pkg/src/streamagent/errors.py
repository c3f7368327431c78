"""Exception taxonomy for the streaming agent runtime.

Every error that maps to a machine-readable code on the CLI surface carries a
``code`` attribute; the CLI serializes it into the error JSON on stderr.
"""


class StreamAgentError(Exception):
    """Base class for all package errors."""

    code = "Error"


# --- stream sources / ingestion ---

class MissingSource(StreamAgentError):
    code = "MissingSource"


class MalformedTimestamp(StreamAgentError):
    code = "MalformedTimestamp"


class EmptyStream(StreamAgentError):
    code = "EmptyStream"


class BackendUnavailable(StreamAgentError):
    """A perception backend (captioner gateway, detector) failed on the wire.

    Retriable from the caller's point of view; the ingestion loop treats it as
    fatal because a missing snapshot would silently break memory completeness.
    """

    code = "BackendUnavailable"


class StageDisabled(StreamAgentError):
    code = "StageDisabled"


# --- memory bank ---

class OutOfOrderCommit(StreamAgentError):
    code = "OutOfOrderCommit"


class EmbeddingDimMismatch(StreamAgentError):
    code = "EmbeddingDimMismatch"


class ModalityDisabled(StreamAgentError):
    code = "ModalityDisabled"


class MissingModalityField(StreamAgentError):
    code = "MissingModalityField"


# --- model gateway ---

class GatewayError(StreamAgentError):
    code = "GatewayError"


class ScriptMiss(GatewayError):
    code = "ScriptMiss"


class UnparseableOutput(StreamAgentError):
    """A trigger response had no recognizable affirmative/negative token.

    Never propagates out of the trigger engine: the decision fails closed to
    Defer and the condition is logged on the decision record.
    """

    code = "UnparseableOutput"


class UnparseableAnswer(StreamAgentError):
    code = "UnparseableAnswer"


# --- evaluation ---

class InvalidWindow(StreamAgentError):
    code = "InvalidWindow"


class SchemaViolation(StreamAgentError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line

    code = "SchemaViolation"


class UnknownVersion(StreamAgentError):
    code = "UnknownVersion"


class MissingAnswer(StreamAgentError):
    code = "MissingAnswer"


class DuplicateAnswer(StreamAgentError):
    code = "DuplicateAnswer"


# --- cli / service ---

class MissingInput(StreamAgentError):
    code = "MissingInput"


class ConfigError(StreamAgentError):
    code = "ConfigError"


class PortInUse(StreamAgentError):
    code = "PortInUse"
