"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line driver:
2 for invalid input, 3 for solver failures, 4 for a violated inequality.
"""


class MALabError(Exception):
    exit_code = 1


class ValidationError(MALabError, ValueError):
    exit_code = 2


class DegenerateBody(ValidationError):
    pass


class BoundaryStencil(ValidationError):
    pass


class UnknownName(ValidationError, KeyError):
    pass


class MixedSchema(ValidationError):
    pass


class InfeasibleMass(ValidationError):
    pass


class NonConvexInput(ValidationError):
    pass


class SolverError(MALabError):
    exit_code = 3


class NoConvergence(SolverError):
    def __init__(self, iterations, residual):
        super().__init__(f"no convergence after {iterations} iterations "
                         f"(residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class EscapesDomain(SolverError):
    """A section is not compactly contained in the domain."""


class NoPositiveHeight(SolverError):
    pass


class InequalityViolation(MALabError):
    exit_code = 4


class InclusionViolation(InequalityViolation):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NotCovered(InequalityViolation):
    def __init__(self, node):
        super().__init__(f"node {node} left uncovered by greedy selection")
        self.node = node


class EmptyContactSet(InequalityViolation):
    pass


class ShapeDegeneracy(InequalityViolation):
    pass
