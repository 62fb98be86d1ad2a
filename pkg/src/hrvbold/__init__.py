"""hrvbold: heart-rate-variability reconstruction from multi-ROI BOLD-fMRI.

Library + CLI covering the full pipeline: synthetic scan simulation, PPG
quality triage and HRV extraction, sliding-window dataset construction,
a from-scratch 1D-CNN + GRU regressor, four-metric evaluation with ROI
ablations, and SVG report rendering.
"""

__version__ = "0.1.0"

from .errors import DataError, DivergenceError, HrvBoldError, ValidationError
from .records import (BeatTimes, HrvSeries, PpgSignal, RoiChannel, RoiConfig,
                      RoiConfigLabel, RoiGroup, RoiMatrix, ScanRecord,
                      custom_roi_config, make_roi_config)

__all__ = [
    "BeatTimes", "DataError", "DivergenceError", "HrvBoldError", "HrvSeries",
    "PpgSignal", "RoiChannel", "RoiConfig", "RoiConfigLabel", "RoiGroup",
    "RoiMatrix", "ScanRecord", "ValidationError", "custom_roi_config",
    "make_roi_config", "__version__",
]
