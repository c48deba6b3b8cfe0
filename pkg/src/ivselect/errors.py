"""Exception and warning types shared across the package."""


class IvSelectError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(IvSelectError, ValueError):
    """Array shapes do not agree with the declared problem dimensions."""


class ZeroColumn(IvSelectError, ValueError):
    """An instrument column has zero Euclidean norm and cannot be normalized."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"instrument column {column} has zero norm")


class EmptyPattern(IvSelectError, ValueError):
    """An operation requiring at least one active coordinate got none."""


class SingularSystem(IvSelectError, RuntimeError):
    """A posterior precision matrix failed to factor.

    Mathematically impossible while the slab precision is positive, so this
    signals corrupted inputs rather than a legitimate numerical regime.
    """


class DegenerateDesign(IvSelectError, RuntimeError):
    """The estimated lower restricted eigenvalue is numerically zero."""


class TooFewRegressors(IvSelectError, ValueError):
    """The requested design is too small for the fixed support of size 5."""


class EmptyChain(IvSelectError, ValueError):
    """A chain result holds no recorded draws."""


class MissingThetaDraws(IvSelectError, ValueError):
    """Coefficient draws were not recorded for this chain."""


class UnmappedRegressor(IvSelectError, ValueError):
    """A regressor has no instrument group and no same-named instrument."""

    def __init__(self, regressor, name=None):
        self.regressor = regressor
        label = f"{regressor}" if name is None else f"{regressor} ({name!r})"
        super().__init__(f"regressor {label} has no instrument group")


class ParseError(IvSelectError, ValueError):
    """A data or config file line could not be parsed."""

    def __init__(self, line_no: int, text: str, reason: str = ""):
        self.line_no = line_no
        self.text = text
        msg = f"cannot parse line {line_no}: {text!r}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class NonConvergenceWarning(UserWarning):
    """An iterative solver stopped at its pass limit before reaching tolerance."""


class CacheDriftWarning(UserWarning):
    """An incremental sampler cache drifted beyond tolerance and was repaired."""
