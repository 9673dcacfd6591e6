"""Exception hierarchy shared by all modules."""


class BTHError(Exception):
    """Base class for every error raised by the package."""


class GridMismatch(BTHError):
    pass


class DomainError(BTHError):
    """Input outside the domain of an elementwise function (log of a nonpositive value, division by zero)."""


class SingularOperator(BTHError):
    def __init__(self, message, mode=None):
        super().__init__(message)
        self.mode = mode


class CompatibilityError(BTHError):
    """A stagewise solvability condition failed while recovering a dressing operator."""

    def __init__(self, message, stage=None, defect=None):
        super().__init__(message)
        self.stage = stage
        self.defect = defect


class BandExhausted(BTHError):
    """The reliable band of an expression does not cover the exponents a check needs."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class PostconditionError(BTHError):
    pass


class ConfigError(BTHError):
    pass


class Divergence(BTHError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
