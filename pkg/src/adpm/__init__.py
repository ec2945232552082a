"""Multi-layer kernel fusion for image classification.

Feature maps from several network layers are encoded as visual-word
histograms, compared with histogram-intersection kernels, and fused with
per-layer weights learned by aligning the combined Gram matrix to the
label-agreement target over the probability simplex. Classification is
one-vs-one kernel SVM per input scale, followed by majority voting.
"""

from .codebook import (
    Codebook,
    LayerHistogram,
    assign_word,
    collect_descriptors,
    encode_histogram,
    train_codebook,
)
from .config import RunConfig, parse_config
from .ensemble import ScalePrediction, predict_multiscale, vote
from .errors import (
    AdpmError,
    DegenerateDataError,
    FormatError,
    InsufficientDataError,
    SkipPairError,
    TensorIOError,
    UnsupportedSizeError,
    ValidationError,
)
from .kernels import (
    IdealKernel,
    KernelSet,
    cross_gram,
    fuse_kernels,
    gram_matrix,
    ideal_matrix,
    intersection_kernel,
)
from .pipeline import (
    MetricsReport,
    ScaleModel,
    TrainedBundle,
    load_bundle,
    report_metrics,
    run_crossval,
    run_predict,
    run_train,
    save_bundle,
)
from .simplex_qp import (
    QPProblem,
    WeightSolution,
    assemble_qp,
    learn_weights,
    project_to_simplex,
    solve_simplex_qp,
)
from .spp import SppConfig, SppGrid, plan_grid, pool_level, spp_descriptor
from .svm import (
    BinarySvmModel,
    OvoModel,
    decision_value,
    predict_ovo,
    train_binary_smo,
    train_ovo,
)
from .synth import SynthSpec, brute_force_histogram, brute_force_simplex, gen_synthetic_dataset
from .tensor_store import (
    DatasetManifest,
    FeatureMap,
    ImageRecord,
    load_manifest,
    read_tensor,
    read_tensor_file,
    validate_dataset,
    write_manifest,
    write_tensor,
    write_tensor_file,
)

__version__ = "0.1.0"
