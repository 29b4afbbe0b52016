"""Zero-shot image segmentation over dense feature maps.

The package splits an image's patch-level feature map into segments by
building an exponentiated-cosine affinity graph and recursively applying
two-way normalized cuts, then carries the patch labels to pixel
resolution and scores them against ground truth. No training, no
learned weights: every output is a deterministic function of the input
features and a handful of knobs.

Layers, bottom to top:

* :mod:`specseg.tensorio`  feature/label/image containers and file formats
* :mod:`specseg.affinity`  cosine affinity graphs and subgraph extraction
* :mod:`specseg.spectral`  generalized eigenpairs of the graph Laplacian
* :mod:`specseg.ncut`      recursive two-way normalized-cut partitioner
* :mod:`specseg.autosc`    eigen-gap model selection and k-means baselines
* :mod:`specseg.highres`   pixel-level label transfer and edge refinement
* :mod:`specseg.evalkit`   Hungarian mIoU and patch-coherence ROC/AUC
* :mod:`specseg.cli`       file-level pipelines behind the ``specseg`` command
"""

from .affinity import AffinityGraph, build_affinity, subgraph
from .autosc import (
    EigenGapReport,
    autosc_segment,
    cpqr_kway,
    kmeans_cluster,
    relative_eigen_gap,
    select_alpha,
)
from .errors import (
    BadMagic,
    ConvergenceFailure,
    DegenerateLabels,
    DimensionMismatch,
    EmptySide,
    EmptySubset,
    IndexOutOfRange,
    IoFailure,
    KTooLarge,
    MissingPair,
    NonFiniteCost,
    NonFiniteValue,
    NoValidSplit,
    SingularAnchors,
    SpecsegError,
    TooFewEigenvalues,
    TruncatedPayload,
    UnsupportedPng,
    UnsupportedVersion,
    ZeroNormPatch,
    ZeroNormPixel,
)
from .evalkit import (
    VOID,
    EvalReport,
    PerImageMatching,
    RocCurve,
    accumulate_and_miou,
    coherence_auc,
    hungarian,
    match_segments,
    roc_from_scores,
)
from .highres import (
    ConceptBank,
    HiResSegmentation,
    assign_concepts,
    bilinear_upsample,
    concept_upsample,
    masked_smm,
    nearest_upsample,
    pamr_probabilities,
    pamr_refine,
)
from .ncut import (
    PartitionNode,
    PartitionTree,
    SegmentationMap,
    best_split,
    ncut_value,
    recursive_ncut,
)
from .spectral import EigenPair, fiedler, smallest_eigenpairs
from .tensorio import (
    FeatureMap,
    LabelMap,
    RunMetadata,
    load_features,
    load_image_rgb,
    load_labels,
    load_metadata,
    save_features,
    save_image_rgb,
    save_labels,
    save_metadata,
)

__version__ = "0.1.0"

__all__ = [
    "AffinityGraph",
    "BadMagic",
    "ConceptBank",
    "ConvergenceFailure",
    "DegenerateLabels",
    "DimensionMismatch",
    "EigenGapReport",
    "EigenPair",
    "EmptySide",
    "EmptySubset",
    "EvalReport",
    "FeatureMap",
    "HiResSegmentation",
    "IndexOutOfRange",
    "IoFailure",
    "KTooLarge",
    "LabelMap",
    "MissingPair",
    "NoValidSplit",
    "NonFiniteCost",
    "NonFiniteValue",
    "PartitionNode",
    "PartitionTree",
    "PerImageMatching",
    "RocCurve",
    "RunMetadata",
    "SegmentationMap",
    "SingularAnchors",
    "SpecsegError",
    "TooFewEigenvalues",
    "TruncatedPayload",
    "UnsupportedPng",
    "UnsupportedVersion",
    "VOID",
    "ZeroNormPatch",
    "ZeroNormPixel",
    "accumulate_and_miou",
    "assign_concepts",
    "autosc_segment",
    "best_split",
    "bilinear_upsample",
    "build_affinity",
    "coherence_auc",
    "concept_upsample",
    "cpqr_kway",
    "fiedler",
    "hungarian",
    "kmeans_cluster",
    "load_features",
    "load_image_rgb",
    "load_labels",
    "load_metadata",
    "masked_smm",
    "match_segments",
    "ncut_value",
    "nearest_upsample",
    "pamr_probabilities",
    "pamr_refine",
    "recursive_ncut",
    "relative_eigen_gap",
    "roc_from_scores",
    "save_features",
    "save_image_rgb",
    "save_labels",
    "save_metadata",
    "select_alpha",
    "smallest_eigenpairs",
    "subgraph",
]
