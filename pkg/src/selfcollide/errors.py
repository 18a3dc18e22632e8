"""Exception types raised across the package."""


class SelfCollideError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SelfCollideError, ValueError):
    pass


class DegenerateTriangle(SelfCollideError, ValueError):
    pass


class EmptyMesh(SelfCollideError, ValueError):
    pass


class MismatchedBvh(SelfCollideError, ValueError):
    pass


class UnknownPreset(SelfCollideError, KeyError):
    def __str__(self):
        # KeyError quotes its argument; keep the message readable.
        return str(self.args[0]) if self.args else ""


class EmptyDataset(SelfCollideError, ValueError):
    pass


class SingleClassData(SelfCollideError, ValueError):
    pass


class SingularCovariance(SelfCollideError, ValueError):
    pass


class ClassStarvation(SelfCollideError, RuntimeError):
    pass


class NonFiniteLoss(SelfCollideError, ArithmeticError):
    pass


class FormatError(SelfCollideError, ValueError):
    pass
