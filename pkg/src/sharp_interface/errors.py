"""Exception hierarchy shared by all modules."""


class SharpInterfaceError(Exception):
    """Base class for every error raised by the package."""


class ModelError(SharpInterfaceError):
    pass


class RootCountError(ModelError):
    pass


class BalanceError(ModelError):
    pass


class PositivityError(ModelError):
    pass


class DominationError(ModelError):
    pass


class ProfileError(SharpInterfaceError):
    pass


class TailError(ProfileError):
    pass


class DomainError(ProfileError):
    pass


class UnderflowError(ProfileError):
    pass


class ConsistencyError(SharpInterfaceError):
    pass


class ShapeError(SharpInterfaceError, ValueError):
    pass


class SingularityError(SharpInterfaceError):
    pass


class FactorizationError(SharpInterfaceError):
    pass


class QuadratureError(SharpInterfaceError):
    pass


class CutLocusError(SharpInterfaceError):
    pass


class ResolutionError(SharpInterfaceError):
    pass


class RangeError(SharpInterfaceError):
    pass


class NewtonDivergence(SharpInterfaceError):
    def __init__(self, message, last_residual=float("nan"), iterations=0):
        super().__init__(message)
        self.last_residual = last_residual
        self.iterations = iterations


class StiffnessWarning(RuntimeWarning):
    pass


class ConfigError(SharpInterfaceError):
    pass
