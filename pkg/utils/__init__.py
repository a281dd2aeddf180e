"""
Shared utilities for the L-SPECT toolkit
"""

from .errors import (
    LSpectError,
    DomainError,
    ConfigError,
    PreconditionError,
    FingerprintMismatchError,
    FitError,
)
from .responses import create_error_response, create_success_response
from .validators import (
    validate_positive,
    validate_non_negative,
    validate_positive_int,
    validate_vector3,
    validate_axis,
)
from .fingerprint import fingerprint

__all__ = [
    'LSpectError',
    'DomainError',
    'ConfigError',
    'PreconditionError',
    'FingerprintMismatchError',
    'FitError',
    'create_error_response',
    'create_success_response',
    'validate_positive',
    'validate_non_negative',
    'validate_positive_int',
    'validate_vector3',
    'validate_axis',
    'fingerprint',
]
