"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A caller-supplied parameter violates a documented precondition."""


class PlacementError(ValueError):
    """A piece could not be placed anywhere inside the tray."""


class FitError(ValueError):
    """A mask is too small or degenerate to fit an ellipse to."""
