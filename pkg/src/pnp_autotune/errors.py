"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when arguments violate an operation's preconditions."""


class DivergenceError(RuntimeError):
    """Raised when a solver iterate becomes non-finite or blows up.

    Attributes
    ----------
    iteration : int
        The (1-based) iteration at which divergence was detected.
    reason : str
        Short description of the failed check.
    """

    def __init__(self, iteration: int, reason: str):
        self.iteration = iteration
        self.reason = reason
        super().__init__(f"diverged at iteration {iteration}: {reason}")
