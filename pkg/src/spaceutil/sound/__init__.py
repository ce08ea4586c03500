"""Sound histogram analytics: Haar features, PCA, clustering, activity and rain."""

from .activity import (ActivityMarks, Period, chi_square_scores, detect_activity,
                       empirical_beta, segment_background)
from .analysis import SoundConfig, SoundResult, analyze_frames, analyze_node_day
from .clustering import (ClusterAssignment, Dendrogram, ccc, ch_index, choose_k,
                         cluster_select, cophenetic_distances, cut)
from .haar import haar_features, haar_transform, inverse_haar_transform
from .pca import PcaModel, fit_pca
from .rain import RainInterval, detect_rain

__all__ = [
    "ActivityMarks", "ClusterAssignment", "Dendrogram", "PcaModel", "Period",
    "RainInterval", "SoundConfig", "SoundResult", "analyze_frames", "analyze_node_day",
    "ccc", "ch_index", "chi_square_scores", "choose_k", "cluster_select",
    "cophenetic_distances", "cut", "detect_activity", "detect_rain", "empirical_beta",
    "fit_pca", "haar_features", "haar_transform", "inverse_haar_transform",
    "segment_background",
]
