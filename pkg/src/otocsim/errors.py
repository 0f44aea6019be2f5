class ConfigError(ValueError):
    """Invalid or incomplete run configuration (CLI exit code 2)."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


class NumericalError(RuntimeError):
    """A numerical contract was violated (CLI exit code 3)."""


class NormDriftError(NumericalError):
    pass


class UnitarityError(NumericalError):
    pass


class TruncationInsufficient(NumericalError):
    def __init__(self, deficit: float, n_max: int):
        self.deficit = deficit
        self.n_max = n_max
        super().__init__(
            f"converged eigenstates capture 1 - {deficit:.3e} of the initial state "
            f"at n_max={n_max}; raise n_max"
        )


class EmptyWindow(NumericalError):
    pass


class NoGrowthWindow(NumericalError):
    pass
