"""Exception types shared across the package."""


class ChannelSpecError(ValueError):
    """A channel description failed to parse or validate."""


class InfeasibleBudgetError(ValueError):
    """The average-cost budget lies below the cheapest cycle of the chain."""

    def __init__(self, gamma: float, gamma_min: float):
        self.gamma = gamma
        self.gamma_min = gamma_min
        super().__init__(
            f"cost budget {gamma:g} is below the minimum average cycle cost {gamma_min:g}; "
            "no state sequence satisfies the constraint"
        )


class CycleLimitError(RuntimeError):
    """Cycle enumeration exceeded the configured cap."""


class InfiniteMetricError(ArithmeticError):
    """A branch metric diverges because the test distribution assigns zero
    probability to an output pair that has positive mass."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""


class DegenerateCostError(ValueError):
    """The two cycle costs coincide, so the budget does not constrain the cycle weight."""
