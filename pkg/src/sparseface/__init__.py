"""Sparse-representation image classification.

Pipeline: random-projection feature search -> OMP sparse coding over a
K-SVD-refined dictionary -> one-vs-rest linear SVM. See README.md for
usage; `sparseface.pipeline.run_pipeline` is the one-call entry point.
"""

from .datamodel import (
    ConfusionMatrix,
    LabeledDataset,
    SplitSpec,
    concat_datasets,
    confusion_and_rates,
    load_manifest,
    split,
)
from .errors import ConfigError, DataError, NumericalError, SparsefaceError
from .ksvd import Dictionary, KsvdConfig, init_dictionary, ksvd_refine, objective
from .omp import SparseCode, batch_encode, omp_encode, reconstruction_errors
from .pipeline import PipelineConfig, PipelineResult, resolve_sparsity, run_pipeline
from .rffd import (
    ProjectionCandidate,
    RffdConfig,
    generate_candidate,
    pca_project,
    project,
    quality_check,
    search,
)
from .smx import ModelBundle, load_bundle, load_matrix, save_bundle, save_matrix
from .svm import LinearSvmModel, grid_search, predict, train
from .synth import SynthSpec, synth_generate

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConfusionMatrix",
    "DataError",
    "Dictionary",
    "KsvdConfig",
    "LabeledDataset",
    "LinearSvmModel",
    "ModelBundle",
    "NumericalError",
    "PipelineConfig",
    "PipelineResult",
    "ProjectionCandidate",
    "RffdConfig",
    "SparseCode",
    "SparsefaceError",
    "SplitSpec",
    "SynthSpec",
    "batch_encode",
    "concat_datasets",
    "confusion_and_rates",
    "generate_candidate",
    "grid_search",
    "init_dictionary",
    "ksvd_refine",
    "load_bundle",
    "load_manifest",
    "load_matrix",
    "objective",
    "omp_encode",
    "pca_project",
    "predict",
    "project",
    "quality_check",
    "reconstruction_errors",
    "resolve_sparsity",
    "run_pipeline",
    "save_bundle",
    "save_matrix",
    "search",
    "split",
    "synth_generate",
    "train",
]
