"""Exception hierarchy shared by all build and solve stages."""


class MortarError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(MortarError, ValueError):
    """Invalid parameters: dimensions, orders, block shapes, over-constraining trace spaces."""


class TopologyError(MortarError):
    """An agglomerate is not connected in the dual graph, or Faces are inconsistent."""


class GeometryError(MortarError):
    """Degenerate element geometry or a Face without a usable parametrization."""


class DataError(MortarError, ValueError):
    """Matrix data violating a precondition (e.g. a non-positive diagonal)."""


class SingularElementError(MortarError):
    """A local saddle-point matrix could not be factored.

    Attributes
    ----------
    element : int
        Id of the offending Element.
    rcond : float
        Reciprocal condition estimate of the local matrix.
    """

    def __init__(self, element, rcond, msg=None):
        self.element = int(element)
        self.rcond = float(rcond)
        super().__init__(
            msg
            or f"local saddle matrix of Element {element} is singular (rcond={rcond:.3e}); "
            "the trace space probably misses constants on some Face, or the constraints "
            "of this Element are linearly dependent"
        )


class IndefiniteOperatorError(MortarError, ArithmeticError):
    """PCG met non-positive curvature or a negative preconditioned residual norm."""


class SolverFailure(MortarError):
    """PCG did not reach the requested tolerance within the iteration limit."""
