"""Blind detection of cell-edge users from two base stations' uplink blocks
with canonical correlation analysis followed by binary source unmixing."""

from .cca import CanonicalSolution, CorrelationSet, sample_correlations, solve_cca
from .detectors import DetectionRecord, bit_error_rate, detect_cca_racma
from .errors import (DimensionError, EnumerationLimitError, NonIdentifiableError, ScenarioError,
                     SingularCorrelationError)
from .racma import cm_oracle_factorize, racma_factorize, resolve_ambiguity
from .sync import SyncTrace, align_and_extract, cca_sync

__version__ = "0.1.0"

__all__ = [
    "CanonicalSolution",
    "CorrelationSet",
    "sample_correlations",
    "solve_cca",
    "DetectionRecord",
    "bit_error_rate",
    "detect_cca_racma",
    "DimensionError",
    "EnumerationLimitError",
    "NonIdentifiableError",
    "ScenarioError",
    "SingularCorrelationError",
    "cm_oracle_factorize",
    "racma_factorize",
    "resolve_ambiguity",
    "SyncTrace",
    "align_and_extract",
    "cca_sync",
]
