"""Calibration metrics, statistical tests, and post-hoc recalibration for
competing-risks survival predictions, with the marginal estimators,
evaluation metrics, synthetic generator, and CLI harness around them."""

from .data import Cohort, TimeGrid, CifBundle, parse_cohort, parse_bundle, split_cohort, quantile_grid
from .errors import CrcalError, NumericError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "Cohort",
    "TimeGrid",
    "CifBundle",
    "parse_cohort",
    "parse_bundle",
    "split_cohort",
    "quantile_grid",
    "CrcalError",
    "NumericError",
    "ValidationError",
    "__version__",
]
