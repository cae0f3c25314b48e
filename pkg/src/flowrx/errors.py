"""Exception hierarchy for the receive-path simulator."""


class FlowRxError(Exception):
    pass


# model / frames
class InvalidSpec(FlowRxError, ValueError):
    pass


class TruncatedFrame(FlowRxError, ValueError):
    pass


class MalformedHeader(FlowRxError, ValueError):
    pass


class TimestampOverflow(FlowRxError, OverflowError):
    pass


# classifier
class AlreadyBound(FlowRxError):
    pass


class TableFull(FlowRxError):
    pass


class UnknownHandle(FlowRxError, KeyError):
    pass


# flow queues
class DuplicateFlow(FlowRxError):
    pass


class UnknownFlow(FlowRxError, KeyError):
    pass


# rate limiter
class NonMonotonicTime(FlowRxError, ValueError):
    pass


# buffer pool
class RingEmpty(FlowRxError):
    pass


class UnknownBuffer(FlowRxError, KeyError):
    pass


class DoubleReturn(FlowRxError):
    pass


# workload / config / engine
class InvalidRate(FlowRxError, ValueError):
    pass


class ConfigError(FlowRxError, ValueError):
    """Configuration problem; ``field`` names the offending key when known."""

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class InvariantViolation(FlowRxError, AssertionError):
    pass


class InsufficientSamples(FlowRxError):
    pass
