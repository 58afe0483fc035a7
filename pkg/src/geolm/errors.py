"""Exception and warning types raised by geolm."""


class GeoLMError(Exception):
    """Base class for all geolm errors."""


class NumericalFailure(GeoLMError):
    """A residual, Jacobian or solve produced a non-finite value.

    ``index`` is the flat index of the first offending entry, when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class RankDeficient(GeoLMError):
    """Unregularized solve requested with a rank-deficient Jacobian."""


class DegenerateModelReduction(GeoLMError):
    """The linear model predicts no decrease for the proposed step."""


class OracleNoConverge(GeoLMError):
    """The brute-force constrained-step oracle did not settle."""


class ParseError(GeoLMError):
    """Malformed dataset file. ``line`` is the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ShapeError(GeoLMError):
    """Array or dataset has the wrong size for the requested model."""


class SubproblemWarning(RuntimeWarning):
    """The trust-region subproblem hit its iteration cap."""
