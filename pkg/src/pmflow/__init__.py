"""Principal-manifold normalizing flows: contour density decompositions,
orthogonality-regularized training, and manifold-corrected density
estimation with automatic rank detection."""

__version__ = "0.1.0"
