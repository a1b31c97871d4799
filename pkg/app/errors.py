from typing import List, Optional, Tuple


class EmpathyToolkitError(Exception):
    """Base class for every error raised by the toolkit"""


class ConfigurationError(EmpathyToolkitError, ValueError):
    """Inconsistent dimensions, degenerate hyperparameters or unknown config keys"""


class ArgumentError(EmpathyToolkitError, ValueError):
    """A call received arguments outside its contract"""


class UndefinedCorrelationError(ArgumentError):
    """Pearson correlation requested for a constant vector"""


class TrainingError(EmpathyToolkitError, RuntimeError):
    """Numerical failure during optimization"""

    def __init__(self, message: str, parameter: Optional[str] = None):
        super().__init__(message)
        self.parameter = parameter


class StateError(EmpathyToolkitError, RuntimeError):
    """An object was used before it was fitted or trained"""


class UsageError(EmpathyToolkitError):
    """Bad command line usage"""


class DataError(EmpathyToolkitError, ValueError):
    """Problems with input data; collects every offending row"""

    def __init__(self, message: str, issues: Optional[List[Tuple[int, str, str]]] = None):
        self.issues = issues or []
        if self.issues:
            details = "; ".join(f"row {row} column {column}: {problem}" for row, column, problem in self.issues[:10])
            more = f" (+{len(self.issues) - 10} more)" if len(self.issues) > 10 else ""
            message = f"{message}: {details}{more}"
        super().__init__(message)


class SchemaError(DataError):
    """A mapped column is missing from the file header"""
