"""Exception hierarchy shared by every module of the package."""


class OddArmError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(OddArmError, ValueError):
    pass


class DomainError(OddArmError, ValueError):
    pass


class NotErgodic(OddArmError, ValueError):
    pass


class InstanceError(OddArmError, ValueError):
    """A bandit instance violates one of the modelling assumptions.

    ``check`` names the violated assumption (``stochasticity``, ``support``,
    ``ergodicity``, ``distinct``, ``arms``, ``eta``, ``init_law``).
    """

    def __init__(self, check: str, message: str):
        super().__init__(f"{check}: {message}")
        self.check = check


class BadOddArm(OddArmError, ValueError):
    pass


class WrongClock(OddArmError, RuntimeError):
    pass


class EmptyTable(OddArmError, ValueError):
    pass


class CapTooSmall(OddArmError, ValueError):
    pass


class Infeasible(OddArmError, RuntimeError):
    pass


class NumericalFailure(OddArmError, RuntimeError):
    pass


class InsufficientData(OddArmError, ValueError):
    pass


class ConfigError(OddArmError, ValueError):
    pass
