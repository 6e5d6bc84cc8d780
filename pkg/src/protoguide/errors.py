"""Exception hierarchy shared across the engine."""


class ProtoguideError(Exception):
    """Base class for all errors raised by this package."""


# --- protocol documents ---

class ProtocolSyntaxError(ProtoguideError):
    """Malformed protocol document (not parseable at all)."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class SchemaError(ProtoguideError):
    """Structurally parseable document that violates the protocol schema."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


# --- gateway / sessions ---

class SessionNotFound(ProtoguideError):
    pass


class OutOfOrderSegment(ProtoguideError):
    pass


class OverlappingSegment(ProtoguideError):
    pass


class BackendFailure(ProtoguideError):
    pass


class TraceBoundsError(ProtoguideError):
    pass


# --- alignment ---

class NonMonotoneTimestamp(ProtoguideError):
    pass


class EmptySession(ProtoguideError):
    pass


class InstanceTooLarge(ProtoguideError):
    pass


# --- wire protocol / logs ---

class ProtocolViolation(ProtoguideError):
    pass


class UnknownProtocolId(ProtoguideError):
    pass


class CorruptLog(ProtoguideError):
    def __init__(self, message, last_valid_record=None):
        self.last_valid_record = last_valid_record
        super().__init__(message)


class ProtocolHashMismatch(ProtoguideError):
    pass


class SessionNotFinalized(ProtoguideError):
    pass
