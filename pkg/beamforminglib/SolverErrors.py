class FixedPointConvergenceError(RuntimeError):
    """
    Raised when the fixed-point equations of the deterministic equivalents do not converge within the iteration cap.
    Carries the residual and iteration count of the last iterate.
    """

    def __init__(self, residual: float, iterations: int):
        super().__init__("Fixed-point iteration did not converge after " + str(iterations)
                         + " iterations, last residual " + str(residual))
        self.residual = residual
        self.iterations = iterations


class InvalidRegimeError(RuntimeError):
    """
    Raised when the derivative system (I - J) e' = v of the deterministic equivalents is singular, i.e. the spectral
    radius of J is not below one.
    """
