"""
Exception hierarchy for the L-SPECT toolkit
Each error class maps to a CLI exit code
"""

from typing import Any, Dict, Optional


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3


class LSpectError(Exception):
    """Base class for all toolkit errors"""

    exit_code = EXIT_FAILURE


class DomainError(LSpectError, ValueError):
    """Input outside the domain of an equation or operation"""

    exit_code = EXIT_CONFIG


class ConfigError(LSpectError, ValueError):
    """Experiment config could not be parsed or validated"""

    exit_code = EXIT_CONFIG

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PreconditionError(LSpectError, RuntimeError):
    """A stage was asked to run without its inputs"""

    exit_code = EXIT_PRECONDITION


class FingerprintMismatchError(PreconditionError):
    """Artifacts were produced by a different scan plan"""


class FitError(LSpectError, RuntimeError):
    """Gaussian fit did not converge"""

    def __init__(self, message: str, best_params: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.best_params = best_params or {}
