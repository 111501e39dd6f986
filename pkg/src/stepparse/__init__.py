"""Unsupervised discovery, temporal parsing, and captioning of activity
steps in multi-modal video collections."""

from .bphmm import (
    Hyperparams,
    ModelState,
    emission_loglik,
    generate_synthetic,
    sample_ibp,
    sample_transitions,
    synthesize_corpus,
)
from .captioner import NgramModel, caption_step, caption_steps, train_lm
from .config import PipelineConfig
from .corpus import (
    Frame,
    GroundTruth,
    ValidationError,
    VideoRecord,
    load_dataset,
    load_ground_truth,
    load_results,
    save_results,
    tokenize,
)
from .gibbs import (
    SamplerDiagnostics,
    forward_loglik,
    joint_log_density,
    run_chain,
    run_chains,
    state_marginals,
)
from .joint_cluster import (
    SimilarityGraph,
    VisualAtom,
    build_similarity_graph,
    extract_visual_atoms,
    filter_outliers,
    joint_gradient,
    joint_objective,
    scgp_single,
    solve_joint_cluster,
)
from .lang_atoms import LanguageAtom, compute_tfidf, select_language_atoms
from .metrics import (
    LabelMatching,
    MetricsReport,
    average_precision,
    evaluate,
    iou_cms,
    map_cms,
    match_labels,
)
from .representation import (
    AtomVocabulary,
    build_vocabulary,
    membership_from_atoms,
    represent_collection,
    represent_frame,
)

__version__ = "0.1.0"

__all__ = [
    "AtomVocabulary",
    "Frame",
    "GroundTruth",
    "Hyperparams",
    "LabelMatching",
    "LanguageAtom",
    "MetricsReport",
    "ModelState",
    "NgramModel",
    "PipelineConfig",
    "SamplerDiagnostics",
    "SimilarityGraph",
    "ValidationError",
    "VideoRecord",
    "VisualAtom",
    "average_precision",
    "build_similarity_graph",
    "build_vocabulary",
    "caption_step",
    "caption_steps",
    "compute_tfidf",
    "emission_loglik",
    "evaluate",
    "extract_visual_atoms",
    "filter_outliers",
    "forward_loglik",
    "generate_synthetic",
    "iou_cms",
    "joint_gradient",
    "joint_log_density",
    "joint_objective",
    "load_dataset",
    "load_ground_truth",
    "load_results",
    "map_cms",
    "match_labels",
    "membership_from_atoms",
    "represent_collection",
    "represent_frame",
    "run_chain",
    "run_chains",
    "sample_ibp",
    "sample_transitions",
    "save_results",
    "scgp_single",
    "select_language_atoms",
    "solve_joint_cluster",
    "state_marginals",
    "synthesize_corpus",
    "tokenize",
    "train_lm",
]
