"""Fracture-detection workbench: run exported wrist X-ray detectors, decode
anchor-free head outputs, evaluate detections, and serve predictions."""

__version__ = "0.1.0"


class FracdetError(Exception):
    """Base class for domain errors raised by this package."""
