"""Exception types shared across the flow, contour, and training modules."""


class FlowError(RuntimeError):
    """Base class for model-level failures."""


class BracketError(FlowError):
    """Iterative inversion could not bracket the target value."""


class CapabilityError(FlowError):
    """Requested quantity is undefined for this stack (e.g. inverse-map
    Jacobians of an injective stack)."""


class DegenerateManifoldError(FlowError):
    """A Gram determinant underflowed to an effectively rank-deficient value."""


class EmptySelectionError(FlowError):
    """No contour survived the stretch threshold."""
