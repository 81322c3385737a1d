"""Exception types raised across the toolkit."""


class TrackCLError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(TrackCLError, ValueError):
    """A config or domain object violates its invariants."""


class BadConfig(ValidationError):
    pass


class DegenerateEmbedding(TrackCLError, ArithmeticError):
    """The pre-normalization embedding vanished."""


class DegenerateAggregate(TrackCLError, ArithmeticError):
    """The mean of unit embeddings vanished (e.g. an antipodal pair)."""


class EmptyBatch(ValidationError):
    pass


class BadLabel(ValidationError):
    pass


class NoTracks(TrackCLError):
    """The sampled segments contain no tracks."""


class OutOfOrderFrame(ValidationError):
    pass


class DivergenceDetected(TrackCLError, ArithmeticError):
    """Training loss became non-finite."""


class UnknownAblation(ValidationError):
    pass


class ParseError(TrackCLError, ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")
