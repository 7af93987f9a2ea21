"""Mixture-model Fisher vector toolkit for cross-modal retrieval.

Core pieces: diagonal Gaussian / Laplacian / hybrid mixtures fitted by EM,
Fisher vector encoding with Fisher-information and power/L2 normalization,
PCA/ICA whitening, regularized linear CCA, and ranked retrieval metrics.
"""

from .cca import (
    CcaConfig,
    CcaModel,
    cca_fit,
    load_cca,
    make_scorer,
    project,
    save_cca,
    similarity,
    tune_reg,
    validation_recall_scorer,
)
from .errors import (
    DataValidationError,
    FvmFormatError,
    HglmmError,
    NumericalError,
    ShapeMismatchError,
)
from .fisher import (
    EncodeConfig,
    FimDiagonal,
    encode,
    encode_sets,
    fim_diagonal,
    fuse_concat,
    fv_raw,
    l2_normalize,
    mean_pool,
    power_normalize,
)
from .fixture import Fixture, FixtureConfig, make_fixture, write_fixture
from .matrix_io import (
    DatasetManifest,
    DescriptorSetIndex,
    check_matrix,
    load_ids,
    load_manifest,
    load_matrix,
    load_set_index,
    matrix_from_bytes,
    matrix_to_bytes,
    save_ids,
    save_manifest,
    save_matrix,
    save_set_index,
)
from .mixtures import (
    FAMILIES,
    FitConfig,
    FitReport,
    GmmModel,
    HglmmModel,
    LmmModel,
    e_step,
    fit_em,
    init_model,
    load_model,
    log_pdf_gaussian,
    log_pdf_hybrid,
    log_pdf_laplacian,
    m_step_gmm,
    m_step_hglmm,
    m_step_lmm,
    save_model,
    total_log_likelihood,
    weighted_median,
)
from .retrieval import (
    RECALL_KS,
    RankingResult,
    TaskMetrics,
    evaluate_annotation,
    evaluate_search,
    evaluate_sentence_similarity,
    metrics_from_ranks,
    rank,
    sentence_similarity_ranks,
)
from .whitening import (
    LinearTransform,
    apply_transform,
    ica_fit,
    load_transform,
    pca_fit,
    save_transform,
)

__version__ = "0.1.0"
