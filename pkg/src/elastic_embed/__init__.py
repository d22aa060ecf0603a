"""Elastic shape distances for curves and their use inside t-SNE, et-SNE and
UMAP, with a cross-validated classification harness."""

from .curve_core import Curve, DegenerateCurveError, Srvf, from_srvf, preprocess, resample, to_srvf
from .distmat import DistanceMatrix, compute_matrix, load_matrix, save_matrix, validate_metric_axioms
from .elastic_metrics import (
    AlignOptions,
    DiscreteDensity,
    Rotation,
    Warping,
    amplitude_distance,
    fisher_rao_pdf_distance,
    phase_distance,
)
from .embedding import Embedding

__version__ = "0.1.0"

__all__ = [
    "AlignOptions",
    "Curve",
    "DegenerateCurveError",
    "DiscreteDensity",
    "DistanceMatrix",
    "Embedding",
    "Rotation",
    "Srvf",
    "Warping",
    "amplitude_distance",
    "compute_matrix",
    "fisher_rao_pdf_distance",
    "from_srvf",
    "load_matrix",
    "phase_distance",
    "preprocess",
    "resample",
    "save_matrix",
    "to_srvf",
    "validate_metric_axioms",
]
