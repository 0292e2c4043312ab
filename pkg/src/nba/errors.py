"""Exception taxonomy.  The CLI maps these onto exit codes."""


class NBAError(Exception):
    pass


class ContractViolation(NBAError, ValueError):
    """A precondition of an operation was broken by the caller."""


class ParameterError(NBAError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class ConfigError(NBAError, ValueError):
    """An experiment configuration failed validation."""


class ResourceError(NBAError, RuntimeError):
    """A size guard was exceeded (oracle bound, enumeration budget, output size)."""


class PotentialOverflowError(NBAError, ArithmeticError):
    def __init__(self, message: str, bin_rank: int | None = None):
        super().__init__(message)
        self.bin_rank = bin_rank
