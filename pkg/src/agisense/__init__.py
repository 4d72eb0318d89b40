"""Ambient-sensing agitation prediction pipeline.

From raw multi-channel home sensor CSVs to pre-event windowed features,
two from-scratch classifiers (Newton-boosted trees and a single-layer LSTM),
a stratified evaluation protocol, feature-importance analysis, and a seeded
synthetic deployment generator with planted, recoverable triggers.
"""

from .data_model import (
    AgitationLabel,
    Channel,
    CHANNEL_ORDER,
    ChannelSeries,
    Deployment,
    LABELS_HEADER,
    LocationTrack,
    LocationUnknownError,
    MAX_FILL_GAP_S,
    SENSOR_HEADER,
    SensorCsvError,
    SensorSample,
    TRACK_HEADER,
    load_deployment,
    node_at,
    parse_labels_csv,
    parse_sensor_csv,
    parse_track_csv,
    resample_group,
    resample_to_1hz,
    write_deployment,
)
from .signal_processing import (
    DEFAULT_FILTER_WINDOW,
    NormalizationStats,
    compute_norm_stats,
    filter_deployment,
    median_filter,
    normalize,
    normalize_deployment,
    normalize_values,
    preprocess_deployment,
)
from .features import (
    DEFAULT_GEOMETRY,
    FEATURE_NAMES,
    N_CHANNELS,
    N_FEATURES,
    N_FEATURES_PER_CHANNEL,
    N_FEATURES_PER_WINDOW,
    N_WINDOWS,
    Observation,
    QualityError,
    SpanError,
    WindowGeometry,
    aggregate_importance,
    decompose_index,
    extract_observation,
    feature_index,
    feature_name,
    group_indices,
    observation_matrix,
    read_features_csv,
    sample_negatives,
    time_of_day_value,
    to_feature_vector,
    to_sequence,
    window_features,
    write_features_csv,
)
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    TrainLog,
    compute_metrics,
    confusion_matrix,
    majority_baseline,
    weighted_f1,
)
from .gbt import (
    GbtHyperparams,
    Leaf,
    Split,
    TreeEnsemble,
    fit_gbt,
    importance_gain,
    importance_vector,
    importance_weight,
    load_gbt,
    predict_gbt,
    raw_scores,
    save_gbt,
    staged_predict_gbt,
)
from .lstm import (
    DivergenceError,
    GATES,
    INPUT_SCALE,
    LstmHyperparams,
    LstmParams,
    bce_loss,
    fit_lstm,
    init_params,
    load_lstm,
    lstm_forward,
    lstm_gradients,
    save_lstm,
)
from .evaluation import (
    ImportanceReport,
    ObservationSet,
    ProtocolConfig,
    ProtocolResult,
    build_observation_set,
    comparison_markdown,
    permutation_importance,
    predictor,
    run_matrix,
    run_protocol,
    run_protocol_on_matrix,
    stable_seed,
    stratified_folds,
    stratified_split,
)
from .synth import (
    BEHAVIORS,
    DiurnalProfile,
    EPOCH_ORIGIN,
    GroundTruth,
    TRIGGER_KINDS,
    TriggerRule,
    generate_deployment,
    plant_rate_check,
    simulate_deployment,
)

__version__ = "0.1.0"

__all__ = [
    "AgitationLabel", "Channel", "CHANNEL_ORDER", "ChannelSeries", "Deployment",
    "LABELS_HEADER", "LocationTrack", "LocationUnknownError", "MAX_FILL_GAP_S",
    "SENSOR_HEADER", "SensorCsvError", "SensorSample", "TRACK_HEADER",
    "load_deployment", "node_at", "parse_labels_csv", "parse_sensor_csv",
    "parse_track_csv", "resample_group", "resample_to_1hz", "write_deployment",
    "DEFAULT_FILTER_WINDOW", "NormalizationStats", "compute_norm_stats",
    "filter_deployment", "median_filter", "normalize", "normalize_deployment",
    "normalize_values", "preprocess_deployment",
    "DEFAULT_GEOMETRY", "FEATURE_NAMES", "N_CHANNELS", "N_FEATURES",
    "N_FEATURES_PER_CHANNEL", "N_FEATURES_PER_WINDOW", "N_WINDOWS",
    "Observation", "QualityError", "SpanError", "WindowGeometry",
    "aggregate_importance", "decompose_index", "extract_observation",
    "feature_index", "feature_name", "group_indices", "observation_matrix",
    "read_features_csv", "sample_negatives", "time_of_day_value",
    "to_feature_vector", "to_sequence", "window_features", "write_features_csv",
    "ConfusionMatrix", "MetricsReport", "TrainLog", "compute_metrics",
    "confusion_matrix", "majority_baseline", "weighted_f1",
    "GbtHyperparams", "Leaf", "Split", "TreeEnsemble", "fit_gbt",
    "importance_gain", "importance_vector", "importance_weight", "load_gbt",
    "predict_gbt", "raw_scores", "save_gbt", "staged_predict_gbt",
    "DivergenceError", "GATES", "INPUT_SCALE", "LstmHyperparams", "LstmParams",
    "bce_loss", "fit_lstm", "init_params", "load_lstm", "lstm_forward",
    "lstm_gradients", "save_lstm",
    "ImportanceReport", "ObservationSet", "ProtocolConfig", "ProtocolResult",
    "build_observation_set", "comparison_markdown", "permutation_importance",
    "predictor", "run_matrix", "run_protocol", "run_protocol_on_matrix", "stable_seed",
    "stratified_folds", "stratified_split",
    "BEHAVIORS", "DiurnalProfile", "EPOCH_ORIGIN", "GroundTruth",
    "TRIGGER_KINDS", "TriggerRule", "generate_deployment", "plant_rate_check",
    "simulate_deployment",
    "__version__",
]
