"""Exception hierarchy shared by every role."""


class PrismError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(PrismError, ValueError):
    """Invalid protocol parameters or out-of-range arguments."""


class ProtocolError(PrismError):
    """A message or share vector violates the round protocol."""


class IngestionError(PrismError, ValueError):
    """Malformed input data (CSV rows, domain declarations)."""


class VisibilityError(PrismError, AttributeError):
    """A role tried to read a parameter outside its view."""


class TamperAlarm(ProtocolError):
    """Result verification failed; ``cells`` lists the offending positions."""

    def __init__(self, cells, outcome=None):
        self.cells = tuple(int(c) for c in cells)
        self.outcome = outcome
        shown = ", ".join(str(c) for c in self.cells[:10])
        more = "" if len(self.cells) <= 10 else f" (+{len(self.cells) - 10} more)"
        super().__init__(f"verification failed at cells [{shown}]{more}")
