"""Exception types raised by geomq."""


class GeomqError(Exception):
    """Base class for all library errors."""


class DegenerateChart(GeomqError, ValueError):
    """The chart Jacobian lost rank at the evaluation point."""


class NonSymmetricForm(GeomqError, ValueError):
    """A curvature form failed the symmetry check."""


class FrameDiscontinuity(GeomqError, RuntimeError):
    """Normal frames at neighbouring points could not be sign-aligned."""


class OffsetDegenerate(GeomqError, ValueError):
    """An offset surface stopped being an immersion (1 + eps*k <= 0)."""


class StepFailure(GeomqError, ArithmeticError):
    """Richardson levels of a finite-difference derivative disagree."""


class GridTooCoarse(GeomqError, RuntimeError):
    """Grid refinement changed requested eigenvalues by more than allowed."""


class PoleProximity(GeomqError, ValueError):
    """A sample point is too close to the stereographic projection pole."""


class ConfigError(GeomqError, ValueError):
    """Invalid run configuration."""
