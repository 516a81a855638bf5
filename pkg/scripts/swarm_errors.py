"""
Exception family shared by every swarm-lab script.

Each error subclasses both SwarmLabError and the builtin it specialises, so
callers may catch either the project root or the usual ValueError/OverflowError.
"""


class SwarmLabError(Exception):
    """Root of all errors raised deliberately by the swarm lab."""


class InvalidParameterError(SwarmLabError, ValueError):
    """A model parameter, config field or CLI flag is out of its domain."""


class BusyPeriodOverflowError(SwarmLabError, OverflowError):
    """The load exponent exceeds what double precision can represent."""

    def __init__(self, load: float, ceiling: float):
        super().__init__(
            f"load x={load:.9g} exceeds the exponent ceiling {ceiling:g}; "
            "the model predicts effectively permanent availability"
        )
        self.load = load
        self.ceiling = ceiling


class SimulationError(SwarmLabError, RuntimeError):
    """A simulation could not produce the requested statistics."""


class CausalityViolationError(SwarmLabError, ValueError):
    """A transfer sends a chunk its sender did not hold at the start of the round."""

    def __init__(self, transfer, message: str):
        super().__init__(message)
        self.transfer = transfer


class DivisionDomainError(SwarmLabError, ZeroDivisionError):
    """A ratio was requested against a zero denominator."""


class TraceError(SwarmLabError, ValueError):
    """Base for tracker trace ingestion problems."""


class TraceParseError(TraceError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TraceOrderError(TraceError):
    def __init__(self, timestamp, line: int):
        super().__init__(
            f"line {line}: timestamp {timestamp} is not strictly after the previous record"
        )
        self.timestamp = timestamp
        self.line = line


class NegativeCountError(TraceError):
    def __init__(self, line: int, column: str, value: int):
        super().__init__(f"line {line}: negative {column} count {value}")
        self.line = line
        self.column = column
        self.value = value


class EmptyTraceError(TraceError):
    """summarize() was handed no records."""
