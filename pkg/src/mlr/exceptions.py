"""Exception hierarchy.

Structural problems (bad shapes, bad partitions) derive from ``ValueError``;
numerical failures derive from ``ArithmeticError`` so callers such as the CLI
can map them to distinct exit codes.
"""


class MlrError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatch(MlrError, ValueError):
    pass


class DimensionMismatch(MlrError, ValueError):
    pass


class NotRefinement(MlrError, ValueError):
    pass


class BadPermutation(MlrError, ValueError):
    pass


class SymmetryViolation(MlrError, ValueError):
    pass


class NotSymmetric(MlrError, ValueError):
    pass


class RankTooLarge(MlrError, ValueError):
    pass


class NonFiniteInput(MlrError, ValueError):
    pass


class NoFeasibleExchange(MlrError, ValueError):
    """No pair of distinct levels admits a rank exchange."""


class NumericalFailure(MlrError, ArithmeticError):
    pass


class ConvergenceFailure(NumericalFailure):
    pass


class EigenFailure(NumericalFailure):
    pass


class SvdFailure(NumericalFailure):
    pass


class DegenerateSpectrum(NumericalFailure):
    """The centered co-clustering matrix has no usable singular direction."""


class DescentViolation(NumericalFailure):
    """Block coordinate descent increased the objective (only raised when checked)."""
