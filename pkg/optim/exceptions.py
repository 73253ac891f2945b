"""
Error hierarchy for the optim app
"""


class OptimError(Exception):
    """Base class for every error raised by the optim app"""


class ParameterError(OptimError, ValueError):
    """A numeric parameter lies outside its legal range"""


class DimensionError(ParameterError):
    """A vector does not match the variable dimension of a loss"""


class InsufficientSamplesError(ParameterError):
    """The dataset holds fewer samples than the requested partition"""


class ConnectivityError(OptimError):
    """The graph is disconnected, or no connected random draw was found"""


class LibsvmParseError(OptimError, ValueError):
    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ConvergenceError(OptimError):
    """An iterative oracle or fit did not reach its target"""


class BacktrackingError(OptimError):
    """The backtracking search shrank the trial stepsize to nothing"""


class DivergenceError(OptimError):
    def __init__(self, message, iteration=None):
        self.iteration = iteration
        super().__init__(message)


class LocalityError(OptimError):
    """A message or mixing weight does not follow an edge of the graph"""


class ConfigError(OptimError):
    def __init__(self, errors):
        self.errors = errors
        super().__init__(f"Invalid run config: {errors}")


class TuningError(OptimError):
    def __init__(self, statuses):
        self.statuses = statuses
        listing = ', '.join(f"{alpha:.3g}: {status}" for alpha, status in statuses.items())
        super().__init__(f"No stepsize of the grid converged ({listing})")
