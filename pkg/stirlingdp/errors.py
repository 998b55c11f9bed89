"""Exception hierarchy shared by every stirlingdp module"""


class StirlingDPError(Exception):
    """Base class for all errors raised by stirlingdp"""


class ParameterError(StirlingDPError, ValueError):
    """A parameter or argument lies outside its domain"""


class ConjugacyError(ParameterError):
    """A conjugate update was requested with reference size m != data size n"""


class DataFormatError(StirlingDPError, ValueError):
    """An input file could not be parsed"""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class NumericalError(StirlingDPError, ArithmeticError):
    """Base class for numerical failures"""


class ConvergenceError(NumericalError):
    """Adaptive quadrature did not reach its tolerance within the evaluation budget"""


class InstabilityError(NumericalError):
    """An alternating closed-form sum cancelled below the required precision"""


class RejectionBudgetError(NumericalError):
    """A rejection sampler exceeded its consecutive-rejection budget"""


class StateConsistencyError(NumericalError):
    """Cached sampler statistics disagree with a from-scratch recomputation"""


def exit_code_for(error):
    """
    Map an exception to the command-line exit code

    Args:
        error: Exception raised while running a command

    Returns:
        1 for validation and I/O failures, 2 for numerical failures
    """
    if isinstance(error, NumericalError):
        return 2
    return 1
