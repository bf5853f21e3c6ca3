"""Beam requirement clustering and neural selection of phased-array weight matrices.

A planar array of RF-chain subarrays is modelled by pattern multiplication
(:mod:`.geometry`, :mod:`.pattern`).  Weight matrices are synthesized from a
few knobs (:mod:`.synthesis`) and tuned per requirement by a slow reference
search (:mod:`.oracle`).  Requirements are quantized with k-means
(:mod:`.cluster`), one matrix is precomputed per cluster, and a softmax MLP
(:mod:`.mlp`) picks the cluster for a new requirement in milliseconds
(:mod:`.selector`).  :mod:`.pipeline` and :mod:`.cli` run the whole flow.
"""

from .cluster import BeamKMeans, FeatureNormalizer, assign, build_representatives
from .exceptions import (ArtifactIntegrityError, BeamselectError, ConfigurationError, DomainError,
                         MeasurementError, NullPlacementError, OptimizationFailure, ParseError,
                         ResourceError, TrainingDivergence)
from .geometry import ArrayGeometry, WeightMatrix, asinc, dimension_array
from .mlp import MLPBeamClassifier, TrainingReport
from .oracle import BeamRequirement, CostBreakdown, CostWeights, evaluate_cost, optimize_matrix
from .pattern import (PatternCut, PatternMetrics, array_factor, compute_cut, compute_eirp, directivity,
                      measure_beamwidth, measure_pattern, measure_sll)
from .pipeline import BenchmarkResult, PipelineConfig, benchmark_timing, run_full_pipeline
from .selector import BeamMatrixSelector, select_matrix
from .synthesis import SynthesisParams, chebyshev_taper, inject_null, steering_phases, synthesize

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry", "ArtifactIntegrityError", "BeamKMeans", "BeamMatrixSelector", "BeamRequirement",
    "BeamselectError", "BenchmarkResult", "ConfigurationError", "CostBreakdown", "CostWeights", "DomainError",
    "FeatureNormalizer", "MLPBeamClassifier", "MeasurementError", "NullPlacementError", "OptimizationFailure",
    "ParseError", "PatternCut", "PatternMetrics", "PipelineConfig", "ResourceError", "SynthesisParams",
    "TrainingDivergence", "TrainingReport", "WeightMatrix", "array_factor", "asinc", "assign",
    "benchmark_timing", "build_representatives", "chebyshev_taper", "compute_cut", "compute_eirp",
    "dimension_array", "directivity", "evaluate_cost", "inject_null", "measure_beamwidth", "measure_pattern",
    "measure_sll", "optimize_matrix", "run_full_pipeline", "select_matrix", "steering_phases", "synthesize",
]
