"""Exceptions - error hierarchy shared by solvers, loaders and the CLI"""
from typing import Optional


class RatingForgeError(Exception):
    """Base error; carries the offending field or operation name"""

    exit_code = 1

    def __init__(self, message: str, field: Optional[str] = None, operation: Optional[str] = None):
        self.field = field
        self.operation = operation
        where = field or operation
        super().__init__(f"{where}: {message}" if where else message)


class ConfigValidationError(RatingForgeError):
    """Invalid problem document or command parameters"""
    exit_code = 2


class MalformedDistribution(ConfigValidationError):
    """Density not positive, not normalisable or badly parametrised"""


class DownwardBiasViolation(ConfigValidationError):
    """Objective violates psi_q(q_f(theta), theta) >= 0 at some type"""

    def __init__(self, witness: float, value: float):
        self.witness = witness
        self.value = value
        super().__init__(f"psi_q(q_f(theta), theta) = {value:.3e} < 0 at theta = {witness:.6g}",
                         field="objective")


class SolverError(RatingForgeError):
    """A numerical routine could not produce a valid answer"""
    exit_code = 3


class BracketFailure(SolverError):
    """Root not bracketed even after geometric expansion"""


class DegenerateCost(SolverError):
    """c'' vanishes where psi_qq < 0 so the relative concavity is unbounded"""


class MalformedScheme(SolverError):
    """Segments out of order or IC jump conditions violated"""


class NoRootError(SolverError):
    """V' keeps one sign on the whole cutoff interval"""


class GridTooLargeError(SolverError):
    """Quality grid too large for exhaustive enumeration"""


class PreconditionViolated(SolverError):
    """Input outside the construction's hypothesis"""


class ValidityViolated(SolverError):
    """Result fails the validity check required by the construction"""


class DivergenceError(SolverError):
    """Integral equation has no finite solution"""
