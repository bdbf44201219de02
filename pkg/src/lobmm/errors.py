"""Exception types shared across the package."""


class LobmmError(Exception):
    """Base class for all package errors."""


class NonMonotoneSeq(LobmmError):
    """Event sequence numbers went backwards or repeated."""


class UnknownOrderId(LobmmError):
    """Cancel referenced an order id that is not resting in the book."""


class CrossedBook(LobmmError):
    """Reconstruction produced best bid >= best ask; input is corrupt."""


class InvalidTrade(LobmmError):
    """Trade referenced an empty level or more volume than rests there."""


class InsufficientHistory(LobmmError):
    """Not enough snapshots/mids available for the requested window."""


class MalformedRow(LobmmError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class BadHeader(LobmmError):
    """Event file header is missing or unparseable."""


class StreamExhausted(LobmmError):
    """Not enough events remain for another episode."""


class EpisodeFinished(LobmmError):
    """step() called after the episode reported done."""


class ZeroSpread(LobmmError):
    """Metric denominator (average spread) is zero."""


class ProtocolError(LobmmError):
    """Malformed or out-of-order message on an environment session."""
