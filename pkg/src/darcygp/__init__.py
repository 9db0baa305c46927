"""Error-aware Gaussian-process surrogates for Darcy pressure management.

Workflow: quasi-random sampling of extraction rates and permeability-field
coefficients, finite-volume pressure solves, multilevel calibration of the
discretization error, an O(n log n) structured-GP fit, and quasi-Monte Carlo
estimation of the confidence that the pressure at a critical location stays
below a threshold.
"""

from . import calibration, confidence, darcy, fastgp, pipeline, qmc, random_field

__all__ = ["calibration", "confidence", "darcy", "fastgp", "pipeline", "qmc", "random_field"]

__version__ = "0.1.0"
