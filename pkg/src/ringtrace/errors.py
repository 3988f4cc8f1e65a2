"""Exception hierarchy shared by every ringtrace module."""


class RingtraceError(Exception):
    """Base class; the CLI maps these to exit code 1."""


class InvalidChain(RingtraceError):
    pass


class NoSuchDenomination(RingtraceError):
    pass


class MissingGroundTruth(RingtraceError):
    pass


class ChainFormatError(RingtraceError):
    """Malformed chain or ground-truth file. Carries the offending line number."""

    def __init__(self, message, line=None, last_good_line=None):
        self.line = line
        self.last_good_line = last_good_line
        if line is not None:
            message = f"line {line}: {message} (last good line: {last_good_line})"
        super().__init__(message)


class InfeasibleConfig(RingtraceError):
    pass


class ConflictingChain(RingtraceError):
    pass


class InsufficientOutputs(RingtraceError):
    pass


class InsufficientBins(InsufficientOutputs):
    pass


class IndivisibleRing(RingtraceError):
    pass


class NonTerminating(RingtraceError):
    pass


class NonNormalized(RingtraceError):
    pass


class DegenerateRing(RingtraceError):
    pass


class DegenerateData(RingtraceError):
    pass


class SimulationError(RingtraceError):
    pass


__all__ = [
    "RingtraceError",
    "InvalidChain",
    "NoSuchDenomination",
    "MissingGroundTruth",
    "ChainFormatError",
    "InfeasibleConfig",
    "ConflictingChain",
    "InsufficientOutputs",
    "InsufficientBins",
    "IndivisibleRing",
    "NonTerminating",
    "NonNormalized",
    "DegenerateRing",
    "DegenerateData",
    "SimulationError",
]
