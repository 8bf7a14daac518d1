"""Error hierarchy shared by the library and the management commands.

Every error carries the process exit code the command line reports for
it; configuration problems are Django ``ValidationError``s instead.
"""


class MpcaError(Exception):
    """Base class for all spectral MPCA failures."""

    exit_code = 4


class ArgumentError(MpcaError, ValueError):
    """An argument is outside its admissible range."""

    exit_code = 2


class DimensionError(MpcaError, ValueError):
    """Grids or array shapes do not match."""


class DataError(MpcaError):
    """Input data or a model file cannot be used."""

    exit_code = 3


class InsufficientDataError(DataError):
    """Not enough observations to estimate a quantity."""

    def __init__(self, message, subject=None, curve=None):
        location = []
        if subject is not None:
            location.append(f'subject {subject}')
        if curve is not None:
            location.append(f'curve {curve}')
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.subject = subject
        self.curve = curve


class ObservationError(DataError):
    """An observation violates the panel contract (time outside [0, 1])."""


class ModelFormatError(DataError):
    """A model artifact is missing, corrupt or of another major version."""


class InvariantViolation(MpcaError):
    """A structural property (Hermitian symmetry, ...) does not hold."""


class ConjugateSymmetryError(InvariantViolation):
    """Filters carry an imaginary part beyond tolerance."""


class NumericalError(MpcaError):
    """A numerical routine produced a non-finite or unusable result."""


class SolverError(NumericalError):
    """The conjugate gradient solver did not reach its tolerance."""

    def __init__(self, message, residual=None):
        if residual is not None:
            message = f'{message} (relative residual {residual:.3e})'
        super().__init__(message)
        self.residual = residual


class DegenerateSpectrumError(NumericalError):
    """All integrated eigenvalues vanish, so no K can be selected."""


class GenerationError(MpcaError):
    """The simulation could not satisfy one of its constraints."""


class UndefinedMetricError(MpcaError):
    """A normalised error has a zero denominator."""
