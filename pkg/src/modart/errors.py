"""Exception types raised across the package.

Exit-code mapping used by the CLI: validation-type errors map to exit
code 2, numerical failures to exit code 3.
"""


class ModartError(Exception):
    """Base class for all package errors."""


class ParseError(ModartError):
    """Scene or artifact file is malformed."""


class ValidationError(ModartError):
    """Scene content violates an invariant (watertightness, ranges, ...)."""


class OutOfEnclosureError(ValidationError):
    """A source or listener position lies outside the enclosure."""


class IncompatibleFlagsError(ValidationError):
    """Mutually exclusive options were requested (e.g. arnoldi + fractional)."""


class NumericalError(ModartError):
    """Base class for numerical failures (CLI exit code 3)."""


class InstabilityError(NumericalError):
    """Time-domain recursion diverged (spectral radius >= 1)."""


class DimensionError(NumericalError):
    """Inconsistent operand dimensions."""


class SingularityError(NumericalError):
    """Transfer-function evaluation requested at or near a pole."""


class NoConvergenceError(NumericalError):
    """Iterative pole search exhausted its iteration budget.

    Carries the estimates that did converge in ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial if partial is not None else []


class BreakdownError(NumericalError):
    """Krylov iteration broke down repeatedly."""


class NotAPoleError(NumericalError):
    """Eigenvector extraction requested at a point that is not a pole."""


class DegenerateModeError(NumericalError):
    """Residue denominator vanished; the pole is defective or multiple."""


class EmptySelectionError(NumericalError):
    """No pole passed the selection thresholds."""


class StaleModelError(NumericalError):
    """Gains and modal model were built from different systems."""


class NonRealOutputError(NumericalError):
    """Rendered response has a significant imaginary part."""


class NegativityError(NumericalError):
    """Full-decomposition render produced significantly negative energy."""


class NegativeEnergyError(NumericalError):
    """Noise shaping was fed a negative energy response."""


class UndefinedT60Error(NumericalError):
    """Decay time is undefined for a critically stable pole (|p| = 1)."""


class DomainError(NumericalError):
    """Argument outside the mathematical domain of the operation."""
