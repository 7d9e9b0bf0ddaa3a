"""
Exception types raised by catmaxent.

User-data problems subclass ValueError, numerical and structural failures subclass RuntimeError,
so callers who only care about the builtin categories can keep catching those.
"""


class CatMaxEntError(Exception):
    pass


class SchemaMismatchError(CatMaxEntError, ValueError):
    pass


class EmptyInputError(CatMaxEntError, ValueError):
    pass


class ConstraintValidationError(CatMaxEntError, ValueError):
    pass


class IngestionError(CatMaxEntError, ValueError):

    def __init__(self, message: str, path=None, line=None, column=None):
        """
        Raised when an input file cannot be read.

        Args:
            message (str): what went wrong
            path (str, optional): file being read
            line (int, optional): 1-indexed line (or data row) of the problem
            column (str or int, optional): column name or 1-indexed character column
        """
        self.path = None if path is None else str(path)
        self.line = line
        self.column = column
        super().__init__(f'{self.location}: {message}')

    @property
    def location(self):
        parts = [self.path if self.path is not None else '<input>']
        if self.line is not None:
            parts.append(f'line {self.line}')
        if self.column is not None:
            parts.append(f'column {self.column}')
        return ', '.join(parts)


class FitError(CatMaxEntError, RuntimeError):
    pass


class NonConvergenceError(FitError):

    def __init__(self, message: str, residual=float('nan'), iterations=0, report=None):
        self.residual = residual
        self.iterations = iterations
        self.report = report  # partial FitReport, if available
        super().__init__(f'{message} (max residual {residual:.3e} after {iterations} sweeps)')


class StructuralInfeasibilityError(NonConvergenceError):
    # a constraint with positive target but no supporting mass under the model
    pass


class InternalConsistencyError(CatMaxEntError, RuntimeError):
    pass


class SamplingError(CatMaxEntError, RuntimeError):
    pass


class SelectionAbortedError(FitError):

    def __init__(self, message: str, trace=None):
        self.trace = trace
        super().__init__(message)
