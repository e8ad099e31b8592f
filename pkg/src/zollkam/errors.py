"""Exception hierarchy shared by every module."""


class ZkamError(Exception):
    """Base class for all engine errors."""


class InvalidTruncation(ZkamError):
    pass


class GapViolation(ZkamError):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class ModelError(ZkamError):
    pass


class ModelMismatch(ZkamError):
    pass


class ShapeMismatch(ZkamError):
    pass


class OutOfLattice(ZkamError):
    pass


class NonHermitian(ZkamError):
    def __init__(self, message, defect=float("nan")):
        super().__init__(message)
        self.defect = defect


class AliasingError(ZkamError):
    pass


class InverseDefect(ZkamError):
    def __init__(self, message, defect):
        super().__init__(message)
        self.defect = defect


class NonzeroMean(ZkamError):
    pass


class DivisorViolation(ZkamError):
    def __init__(self, message, l):
        super().__init__(message)
        self.l = tuple(int(x) for x in l)


class SingularWeight(ZkamError):
    pass


class ExcisionRequired(ZkamError):
    def __init__(self, message, where):
        super().__init__(message)
        self.where = where


class IncompleteTable(ZkamError):
    pass


class OracleCapExceeded(ZkamError):
    pass


class UndefinedOrder(ZkamError):
    pass


class Stagnation(ZkamError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


class EmptySurvivors(ZkamError):
    pass


class ContainerError(ZkamError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(ZkamError):
    pass


class MismatchedOmega(ZkamError):
    pass
