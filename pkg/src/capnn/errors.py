"""Exception and warning types shared across the package."""


class CapnnError(Exception):
    """Base class for all package errors."""


# --- circuit engine ---------------------------------------------------------

class NetlistError(CapnnError):
    pass


class NoGround(NetlistError):
    pass


class DisconnectedNode(NetlistError):
    pass


class SingularTopology(NetlistError):
    pass


class NewtonDivergence(CapnnError):
    def __init__(self, time, residual, message=None):
        self.time = time
        self.residual = residual
        super().__init__(message or
                         f"Newton iteration diverged at t={time:.6g}s "
                         f"(last residual {residual:.3e} A)")


class NonFiniteState(CapnnError):
    pass


class ShapeMismatch(CapnnError):
    pass


# --- cell library -----------------------------------------------------------

class WindowNotForwardConducting(CapnnError):
    pass


class EmptySearchRange(CapnnError):
    pass


# --- data pipeline ----------------------------------------------------------

class MalformedRow(CapnnError):
    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class ValueOutOfRange(CapnnError):
    pass


class MalformedLine(CapnnError):
    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class CountMismatch(CapnnError):
    pass


class IoError(CapnnError):
    pass


# --- learning ---------------------------------------------------------------

class NonFiniteLoss(CapnnError):
    pass


class SaturationWarning(UserWarning):
    """Most weight capacitors hit the supply rail before training finished."""
