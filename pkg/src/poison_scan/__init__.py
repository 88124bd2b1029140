"""Local-outlier detection of backdoor-poisoned samples in embedding spaces."""
from .detectors import DetectorConfig, estimate_lid_mle, score_dao, score_kdist, score_lid, score_slof
from .filtering import FilterPolicy, purify, select_removals
from .iforest import IsolationForest, iforest_fit, iforest_score
from .knn import NeighborSet, kdist, knn, pairwise_distances
from .metrics import EvalReport, auc, evaluate, fpr_at_tpr, threshold_sweep
from .pipeline import BatchPlan, DatasetHandle, build_reference_set, plan_batches, score_dataset
from .store import (
    Detector,
    EmbeddingMatrix,
    LabelVector,
    ScoreVector,
    l2_normalize,
    load_embeddings,
    load_labels,
    read_scores,
    save_embeddings,
    save_labels,
    write_scores,
)
from .synth import SyntheticConfig, generate, kdist_distribution_experiment, poison_rate_sensitivity_sweep

__version__ = "0.1.0"
