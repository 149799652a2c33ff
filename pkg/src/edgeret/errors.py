"""Exception types raised across the package."""


class EdgeRetError(Exception):
    pass


# channel
class ZeroVector(EdgeRetError, ValueError):
    pass


class OddLength(EdgeRetError, ValueError):
    pass


# entropy model
class InvalidK(EdgeRetError, ValueError):
    pass


class BadSchedule(EdgeRetError, ValueError):
    pass


# arithmetic coder
class SupportTooWide(EdgeRetError, ValueError):
    pass


class SymbolOverflow(EdgeRetError, ValueError):
    pass


class TruncatedStream(EdgeRetError, ValueError):
    pass


# networks
class ShapeMismatch(EdgeRetError, ValueError):
    pass


class NoForwardCache(EdgeRetError, RuntimeError):
    pass


class LabelOutOfRange(EdgeRetError, ValueError):
    pass


class CheckpointError(EdgeRetError, ValueError):
    pass


# models / experiments
class BadSpec(EdgeRetError, ValueError):
    pass


class EmptyDataset(EdgeRetError, ValueError):
    pass


class EmptyFamily(EdgeRetError, ValueError):
    pass


class DimMismatch(EdgeRetError, ValueError):
    pass


class ParseError(EdgeRetError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DimInconsistent(EdgeRetError, ValueError):
    pass
