"""Exception hierarchy shared across the package.

Every error that can end a run carries the process exit code the CLI
maps it to, so the runner never needs a lookup table.
"""

from __future__ import annotations


class ParapetError(Exception):
    """Base class for package errors."""

    exit_code = 1


class UsageError(ParapetError):
    """Bad configuration or malformed input."""

    exit_code = 2


class BlowUpError(ParapetError):
    """Solution norm crossed the blow-up threshold."""

    exit_code = 3

    def __init__(self, msg, time=None, norm=None, threshold=None):
        super().__init__(msg)
        self.time = time
        self.norm = norm
        self.threshold = threshold


class PetrovskiiViolationError(ParapetError):
    """Coefficient matrix left the admissible spectral half-plane.

    Carries a witness: the offending matrix and, when known, the
    (time, state) sample it was built from.
    """

    exit_code = 4

    def __init__(self, msg, matrix=None, witness=None, report=None):
        super().__init__(msg)
        self.matrix = matrix
        self.witness = witness
        self.report = report


class DivergenceError(ParapetError):
    """Fixed-point iteration failed to contract."""

    exit_code = 5

    def __init__(self, msg, ratios=None, distances=None):
        super().__init__(msg)
        self.ratios = list(ratios) if ratios is not None else []
        self.distances = list(distances) if distances is not None else []


class StiffnessError(ParapetError):
    """Stable step size collapsed below the configured floor."""

    exit_code = 5

    def __init__(self, msg, dt=None, dt_min=None):
        super().__init__(msg)
        self.dt = dt
        self.dt_min = dt_min


class DataTooLargeError(ParapetError):
    """No admissible local horizon for the given data size."""

    exit_code = 5

    def __init__(self, msg, data_norm=None, horizon=None):
        super().__init__(msg)
        self.data_norm = data_norm
        self.horizon = horizon


class NumericalError(ParapetError):
    """Diagnostic wrapper for low-level numerical failures."""

    exit_code = 1
