"""Exception hierarchy.  Every class maps to one CLI exit code (see ``cli.EXIT``)."""


class KirchhoffError(Exception):
    """Root of all package errors."""


class ConfigError(KirchhoffError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = f"{path}:{line}: " if path is not None and line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)


class ModelError(KirchhoffError):
    """The coefficient or nonlinearity contradicts a hypothesis it relies on."""


class PrimitiveError(ModelError):
    """Evaluating the primitive M_r failed (non-finite sample or non-monotone knots)."""


class BracketError(PrimitiveError):
    """No root of M_r(t) = s inside [0, s/m_lower]: the declared lower bound is violated."""


class EstimationError(ModelError):
    """A limit of f(x, t)/t could not be estimated from monotone samples."""


class SolverError(KirchhoffError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class OperatorError(SolverError):
    """Non-positive curvature met by CG: the operator is not SPD."""


class PreconditionError(SolverError):
    """A local solver refused to run because its convergence guarantee fails."""


class SupersolutionError(PreconditionError):
    pass


class OrderingError(SolverError):
    """Monotone iteration left the sub/supersolution bracket."""


class TrivialProblemError(SolverError):
    pass


class FixedPointBracketError(SolverError):
    def __init__(self, message, samples=None):
        self.samples = samples or []
        super().__init__(message)
