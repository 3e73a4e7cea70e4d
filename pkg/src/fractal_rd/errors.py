"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
2 for configuration/precondition problems, 3 for runtime blow-up and
4 for numerical failures.
"""


class FractalRDError(Exception):
    exit_code = 4


class ConfigError(FractalRDError, ValueError):
    exit_code = 2


class DomainParameterError(ConfigError):
    pass


class ResourceLimitError(ConfigError):
    pass


class PreconditionError(ConfigError):
    pass


class HypothesisViolation(ConfigError):
    """The boundary measure is trivial: zero mass and no Dirichlet part."""


class GeometryError(FractalRDError, ValueError):
    exit_code = 2


class SelfContactError(GeometryError):
    pass


class AssemblyError(FractalRDError):
    pass


class ConsistencyError(FractalRDError):
    pass


class DegenerateInputError(FractalRDError, ValueError):
    exit_code = 2


class BasisError(FractalRDError):
    pass


class SolverError(FractalRDError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepError(SolverError):
    def __init__(self, message, residual=None, step=None):
        super().__init__(message, residual)
        self.step = step


class NonConvergenceError(SolverError):
    pass


class BlowUpError(FractalRDError):
    exit_code = 3

    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time
