"""Exception types raised across the package."""


class MetastableError(ValueError):
    """Invalid input to a construction or analysis routine."""


class InfeasibleGateError(MetastableError):
    """Requested gate does not fit inside the outermost cell.

    Attributes
    ----------
    max_alpha : float
        Largest mixture weight attainable at the requested gate scale.
    """

    def __init__(self, message, max_alpha):
        super().__init__(message)
        self.max_alpha = max_alpha


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap.

    Attributes
    ----------
    residual : float
        Residual of the last iterate.
    iterations : int
        Number of iterations performed.
    last : object
        Last iterate, so callers can keep partial results.
    """

    def __init__(self, message, residual, iterations, last=None):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations
        self.last = last
