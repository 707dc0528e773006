"""Exception types raised by conekit."""


class ConekitError(Exception):
    """Base class for all conekit errors."""


class DimensionMismatch(ConekitError, ValueError):
    pass


class DegeneratePair(ConekitError, ValueError):
    """Two subspaces are (numerically) orthogonal along some direction."""


class RankMismatch(ConekitError, ValueError):
    pass


class SinglePlane(ConekitError, ValueError):
    """An operation needing at least two planes got a one-plane cone."""


class HypothesisViolated(ConekitError, ValueError):
    """Input fails a precondition under which a certified algorithm applies."""


class RankDeficient(ConekitError, ValueError):
    pass


class InvalidInput(ConekitError, ValueError):
    pass
