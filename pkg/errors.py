#!/usr/bin/env python3
"""
Exception hierarchy for lisinfer

Two families map onto the CLI exit codes:
- ConfigError (exit 2): bad configuration, unknown keys, missing/malformed input files
- NumericalError (exit 3): anything that fails inside the numerics
"""


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class LisInferError(Exception):
    """Base class for all lisinfer errors"""


# =============================================================================
# Configuration and input errors
# =============================================================================

class ConfigError(LisInferError):
    """Invalid run configuration"""


class InputFileError(ConfigError):
    """An input file is missing or malformed"""

    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class ArtifactMismatch(ConfigError):
    """A stored artifact does not belong to the configured problem"""


class InvalidThreshold(ConfigError, ValueError):
    """An eigenvalue threshold outside its admissible range"""


# =============================================================================
# Numerical errors
# =============================================================================

class NumericalError(LisInferError):
    """Failure inside a numerical routine"""


class NotSymmetric(NumericalError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class ActionNotLinear(NumericalError):
    """A matrix-free action failed the randomized linearity check"""


class DimensionMismatch(NumericalError, ValueError):
    pass


class DegenerateTensor(NumericalError, ValueError):
    """Correlation tensor of an anisotropic kernel is not SPD"""


class RadiiNotAscending(NumericalError, ValueError):
    pass


class ForwardSolveFailed(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class MapNotFound(NumericalError):
    pass


class TargetEvaluationFailed(NumericalError):
    pass


class SeriesTooShort(NumericalError):
    pass


class NonDecomposable(NumericalError):
    """The function of interest has no analytic complement-space expectation"""


class EmptyChain(NumericalError):
    pass


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code"""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    return EXIT_NUMERICAL
