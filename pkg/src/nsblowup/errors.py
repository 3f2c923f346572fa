"""Exception types raised by the evaluators and audits."""


class InvalidArgument(ValueError):
    """A precondition on an argument was violated."""


class InvalidConfiguration(ValueError):
    """An evaluator was used in a configuration it does not support."""


class AccuracyError(RuntimeError):
    """Quadrature did not reach the requested tolerance within its budget."""

    def __init__(self, message, estimate):
        super().__init__(f"{message} (achieved error estimate {estimate:.3e})")
        self.estimate = estimate


class CrossValidationError(RuntimeError):
    """Two independent computation paths disagree beyond tolerance."""

    def __init__(self, message, discrepancy, tolerance):
        super().__init__(f"{message}: discrepancy {discrepancy:.3e} > {tolerance:.3e}")
        self.discrepancy = discrepancy
        self.tolerance = tolerance


class PicardDivergence(RuntimeError):
    """Picard iterates left the ball they were supposed to stay in."""

    def __init__(self, delta, eta, x_norm):
        super().__init__(f"Picard iteration diverged at delta={delta:g}, eta={eta:g} "
                         f"(x_norm={x_norm:.3e})")
        self.delta = delta
        self.eta = eta
        self.x_norm = x_norm
