"""Experiment protocol around the two classifiers.

Dataset assembly (positives plus 3:1 sampled negatives), a stratified
half/half split, five-fold cross-validation on the train half to pick the
stopping point, a single refit-and-test pass, and importance analysis.
Individual deployments and the pooled combined dataset run through the same
path so their reports are directly comparable.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .data_model import Deployment
from .features import (
    DEFAULT_GEOMETRY,
    N_FEATURES_PER_WINDOW,
    Observation,
    QualityError,
    SpanError,
    WindowGeometry,
    aggregate_importance,
    extract_observation,
    feature_name,
    group_indices,
    observation_matrix,
    sample_negatives,
)
from .gbt import (
    GbtHyperparams,
    TreeEnsemble,
    fit_gbt,
    importance_vector,
    predict_gbt,
    staged_predict_gbt,
)
from .lstm import LstmHyperparams, LstmParams, fit_lstm, lstm_forward
from .metrics import MetricsReport, TrainLog, compute_metrics, weighted_f1
from .signal_processing import (
    DEFAULT_FILTER_WINDOW,
    filter_deployment,
    preprocess_deployment,
)
from .data_model import CHANNEL_ORDER

log = logging.getLogger(__name__)

MODEL_KINDS = ("gbt", "lstm")


def stable_seed(*parts) -> int:
    """Process-independent child seed derived from mixed str/int parts."""
    digest = hashlib.sha256("\x1f".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything that determines one evaluation run."""

    negative_ratio: int = 3
    split_fraction: float = 0.5
    folds: int = 5
    seed: int = 0
    gbt: GbtHyperparams = GbtHyperparams()
    lstm: LstmHyperparams = LstmHyperparams()
    geometry: WindowGeometry = DEFAULT_GEOMETRY
    filter_window: int = DEFAULT_FILTER_WINDOW
    permutation_repeats: int = 10
    importance_per_feature: bool = True
    train_only_stats: bool = False
    permute_labels: bool = False
    exclusion_s: float = 2 * 3600.0
    max_refolds: int = 10

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split fraction must lie strictly inside (0, 1)")
        if self.negative_ratio < 1:
            raise ValueError("negative ratio must be at least 1")


@dataclass
class ObservationSet:
    """Assembled observations of one deployment plus drop accounting."""

    observations: list[Observation]
    dropped: dict[str, int]

    @property
    def n_positive(self) -> int:
        return sum(o.label for o in self.observations)


def build_observation_set(
    dep: Deployment, cfg: ProtocolConfig
) -> ObservationSet:
    """Positives from the label list plus seeded 3:1 negatives.

    Labels whose span leaves the deployment or fails the quality gate are
    dropped and counted; the negative target scales with the kept positives.
    """
    dropped = {"span": 0, "quality": 0}
    positives: list[Observation] = []
    for lab in dep.labels:
        try:
            positives.append(
                extract_observation(
                    dep, lab.time, label=1, geometry=cfg.geometry, severity=lab.severity
                )
            )
        except SpanError:
            dropped["span"] += 1
        except QualityError:
            dropped["quality"] += 1
    negatives = sample_negatives(
        dep,
        positives,
        ratio=cfg.negative_ratio,
        rng_seed=stable_seed(cfg.seed, dep.id, "negatives"),
        geometry=cfg.geometry,
        exclusion_s=cfg.exclusion_s,
    )
    return ObservationSet(positives + negatives, dropped)


# ---------------------------------------------------------------------------
# Stratified splitting

def stratified_split(
    y: np.ndarray, fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded two-way split preserving class proportions (±1 per class)."""
    y = np.asarray(y, dtype=int)
    first, second = [], []
    for cls in (0, 1):
        rows = np.flatnonzero(y == cls)
        rows = rng.permutation(rows)
        k = int(round(len(rows) * fraction))
        first.append(rows[:k])
        second.append(rows[k:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def stratified_folds(
    y: np.ndarray, k: int, base_seed: int, max_attempts: int = 10
) -> list[np.ndarray]:
    """Validation-index lists for k stratified folds.

    Every fold's training complement must contain both classes; otherwise the
    assignment is reshuffled with a seed offset, erroring after
    ``max_attempts`` tries.
    """
    y = np.asarray(y, dtype=int)
    if len(y) < k:
        raise ValueError(f"cannot build {k} folds from {len(y)} observations")
    for attempt in range(max_attempts):
        rng = np.random.default_rng(np.random.SeedSequence([base_seed, attempt]))
        assign = np.empty(len(y), dtype=int)
        for cls in (0, 1):
            rows = rng.permutation(np.flatnonzero(y == cls))
            assign[rows] = np.arange(len(rows)) % k
        folds = [np.flatnonzero(assign == f) for f in range(k)]
        complements_ok = all(
            len(np.unique(np.delete(y, fold))) == 2 for fold in folds
        )
        if complements_ok and all(len(fold) > 0 for fold in folds):
            return folds
    raise RuntimeError(
        f"could not build {k} folds with two-class training portions "
        f"after {max_attempts} attempts"
    )


# ---------------------------------------------------------------------------
# Model-kind adapters

def _as_sequences(X: np.ndarray) -> np.ndarray:
    n_windows = X.shape[1] // N_FEATURES_PER_WINDOW
    return X.reshape(len(X), n_windows, N_FEATURES_PER_WINDOW)


def predictor(model_kind: str, model) -> Callable[[np.ndarray], np.ndarray]:
    """Binary prediction callable over the flat feature matrix."""
    if model_kind == "gbt":
        return lambda X: (predict_gbt(model, X) >= 0.5).astype(int)
    if model_kind == "lstm":
        return lambda X: (lstm_forward(model, _as_sequences(X)) >= 0.5).astype(int)
    raise ValueError(f"unknown model kind {model_kind!r}")


def _select_gbt_rounds(
    X: np.ndarray, y: np.ndarray, folds: list[np.ndarray], hp: GbtHyperparams
) -> tuple[int, list[int]]:
    bests = []
    for fold in folds:
        tr = np.delete(np.arange(len(y)), fold)
        model, _ = fit_gbt(X[tr], y[tr], hp)
        stages = staged_predict_gbt(model, X[fold])
        scores = [weighted_f1(y[fold], stage >= 0.5) for stage in stages]
        bests.append(int(np.argmax(scores)) + 1)  # earliest best round
    chosen = max(1, int(round(float(np.mean(bests)))))
    return chosen, bests


def _select_lstm_epochs(
    X: np.ndarray, y: np.ndarray, folds: list[np.ndarray],
    hp: LstmHyperparams, seed: int,
) -> tuple[int, list[int]]:
    seqs = _as_sequences(X)
    bests = []
    for i, fold in enumerate(folds):
        tr = np.delete(np.arange(len(y)), fold)
        _, log_i = fit_lstm(
            (seqs[tr], y[tr]), (seqs[fold], y[fold]), hp,
            seed=stable_seed(seed, "fold", i),
        )
        bests.append(max(1, log_i.chosen))
    chosen = max(1, int(round(float(np.mean(bests)))))
    return chosen, bests


# ---------------------------------------------------------------------------
# Permutation importance

def permutation_importance(
    predict: Callable[[np.ndarray], np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
    repeats: int = 10,
    seed: int = 0,
    per_feature: bool = True,
    skip_features: set[int] | None = None,
) -> dict:
    """Mean weighted-F1 drop when a feature (or feature group) is shuffled.

    Group targets (channel, feature type, window) permute all their columns
    jointly with a single row permutation.  Features listed in
    ``skip_features`` are known to leave predictions unchanged and score a
    drop of 0 without re-predicting.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(y) == 0 or len(X) != len(y):
        raise ValueError("need a non-empty matched test set")

    base = weighted_f1(y, predict(X))

    def drop_for(columns: np.ndarray, target_key: str) -> float:
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, stable_seed(target_key) % 2 ** 63])
        )
        drops = []
        for _ in range(repeats):
            perm = rng.permutation(len(y))
            Xp = X.copy()
            Xp[:, columns] = X[perm][:, columns]
            drops.append(base - weighted_f1(y, predict(Xp)))
        return float(np.mean(drops))

    result: dict = {"metric_full": base, "repeats": repeats, "seed": seed}
    if per_feature:
        per = {}
        for j in range(X.shape[1]):
            if skip_features is not None and j in skip_features:
                per[feature_name(j)] = 0.0
            else:
                per[feature_name(j)] = drop_for(np.array([j]), f"f{j}")
        result["per_feature"] = per
    else:
        result["per_feature"] = None

    for by, label in (("channel", "by_channel"), ("feature", "by_feature_type"),
                      ("window", "by_window")):
        groups = group_indices(by, n_windows=X.shape[1] // N_FEATURES_PER_WINDOW)
        result[label] = {
            name: drop_for(cols, f"{by}:{name}") for name, cols in groups.items()
        }
    return result


def _gbt_importance_block(model: TreeEnsemble, kind: str) -> dict:
    vec = importance_vector(model, kind)
    return {
        "per_feature": {feature_name(i): float(v) for i, v in enumerate(vec)},
        "by_channel": aggregate_importance(vec, "channel"),
        "by_feature_type": aggregate_importance(vec, "feature"),
        "by_window": aggregate_importance(vec, "window"),
    }


@dataclass
class ImportanceReport:
    """Permutation drops plus (for tree models) gain and weight tallies."""

    permutation: dict
    gain: dict | None = None
    weight: dict | None = None

    def to_dict(self) -> dict:
        return {"permutation": self.permutation, "gain": self.gain, "weight": self.weight}


# ---------------------------------------------------------------------------
# The protocol

@dataclass
class ProtocolResult:
    model_kind: str
    dataset_id: str
    seed: int
    metrics: MetricsReport
    train_log: TrainLog
    stopping_point: int
    fold_stops: list[int]
    dropped: dict[str, int]
    n_train: int
    n_test: int
    importance: ImportanceReport | None = None
    model: object = None

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "dataset_id": self.dataset_id,
            "seed": self.seed,
            "metrics": self.metrics.to_dict(),
            "train_log": self.train_log.to_dict(),
            "stopping_point": self.stopping_point,
            "fold_stops": self.fold_stops,
            "dropped": self.dropped,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "importance": self.importance.to_dict() if self.importance else None,
        }


def run_protocol_on_matrix(
    X: np.ndarray,
    y: np.ndarray,
    model_kind: str,
    cfg: ProtocolConfig,
    dataset_id: str = "",
    dropped: dict[str, int] | None = None,
    with_importance: bool = True,
) -> ProtocolResult:
    """Split, select the stopping point by CV, refit, and test once."""
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    n_pos = int(y.sum())
    if n_pos < 4:
        raise ValueError(f"need at least 4 positive observations, got {n_pos}")

    split_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    train_idx, test_idx = stratified_split(y, cfg.split_fraction, split_rng)
    X_train, y_train = X[train_idx], y[train_idx].copy()
    X_test, y_test = X[test_idx], y[test_idx]

    if cfg.permute_labels:
        # Null control: break the feature-label pairing in the train half only.
        perm_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3]))
        y_train = perm_rng.permutation(y_train)

    folds = stratified_folds(
        y_train, cfg.folds, base_seed=stable_seed(cfg.seed, "folds"),
        max_attempts=cfg.max_refolds,
    )

    if model_kind == "gbt":
        stopping, fold_stops = _select_gbt_rounds(X_train, y_train, folds, cfg.gbt)
        model, train_log = fit_gbt(
            X_train, y_train, replace(cfg.gbt, n_trees=stopping),
            rng_seed=cfg.seed,
        )
        train_log.chosen = stopping
    else:
        stopping, fold_stops = _select_lstm_epochs(
            X_train, y_train, folds, cfg.lstm, cfg.seed
        )
        model, train_log = fit_lstm(
            (_as_sequences(X_train), y_train), None,
            replace(cfg.lstm, max_epochs=stopping),
            seed=stable_seed(cfg.seed, "refit"),
        )

    predict = predictor(model_kind, model)
    metrics = compute_metrics(
        y_test, predict(X_test),
        model_id=model_kind, dataset_id=dataset_id, seed=cfg.seed,
    )

    importance = None
    if with_importance:
        skip = None
        gain = weight = None
        if model_kind == "gbt":
            used = set(np.flatnonzero(importance_vector(model, "weight")))
            skip = set(range(X.shape[1])) - used
            gain = _gbt_importance_block(model, "gain")
            weight = _gbt_importance_block(model, "weight")
        permutation = permutation_importance(
            predict, X_test, y_test,
            repeats=cfg.permutation_repeats,
            seed=stable_seed(cfg.seed, "permutation"),
            per_feature=cfg.importance_per_feature,
            skip_features=skip,
        )
        importance = ImportanceReport(permutation=permutation, gain=gain, weight=weight)

    return ProtocolResult(
        model_kind=model_kind,
        dataset_id=dataset_id,
        seed=cfg.seed,
        metrics=metrics,
        train_log=train_log,
        stopping_point=stopping,
        fold_stops=fold_stops,
        dropped=dropped or {"span": 0, "quality": 0},
        n_train=len(train_idx),
        n_test=len(test_idx),
        importance=importance,
        model=model,
    )


def _train_only_stats_matrix(
    observations: list[Observation], cfg: ProtocolConfig
) -> np.ndarray:
    """Feature matrix normalized with ranges taken from the train half only.

    Windows are pooled per channel across nodes and deployments; the split
    recomputed here is the same seeded split the protocol runner uses, so no
    test-half sample touches the ranges.
    """
    y = np.array([o.label for o in observations], dtype=int)
    split_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    train_idx, _ = stratified_split(y, cfg.split_fraction, split_rng)
    train_set = set(train_idx.tolist())

    windows = np.stack([o.windows for o in observations])  # (n, w, 5, s)
    train_windows = windows[sorted(train_set)]
    scaled = np.empty_like(windows)
    for c in range(len(CHANNEL_ORDER)):
        lo = float(train_windows[:, :, c, :].min())
        hi = float(train_windows[:, :, c, :].max())
        if hi > lo:
            scaled[:, :, c, :] = np.clip(
                100.0 * (windows[:, :, c, :] - lo) / (hi - lo), 0.0, 100.0
            )
        else:
            scaled[:, :, c, :] = 50.0

    rows = []
    for obs, win in zip(observations, scaled):
        rows.append(replace(obs, windows=win))
    X, _ = observation_matrix(rows)
    return X


def run_protocol(
    deployments: Deployment | list[Deployment],
    model_kind: str,
    cfg: ProtocolConfig = ProtocolConfig(),
    with_importance: bool = True,
) -> ProtocolResult:
    """Full protocol from deployments; a list is pooled as the combined run."""
    deps = [deployments] if isinstance(deployments, Deployment) else list(deployments)
    if not deps:
        raise ValueError("need at least one deployment")
    dataset_id = "+".join(d.id for d in deps) if len(deps) > 1 else deps[0].id

    observations: list[Observation] = []
    dropped = {"span": 0, "quality": 0}
    for dep in deps:
        if cfg.train_only_stats:
            prepared = filter_deployment(dep, cfg.filter_window)
        else:
            prepared, _ = preprocess_deployment(dep, cfg.filter_window)
        obs_set = build_observation_set(prepared, cfg)
        observations.extend(obs_set.observations)
        for key in dropped:
            dropped[key] += obs_set.dropped[key]

    y = np.array([o.label for o in observations], dtype=int)
    if cfg.train_only_stats:
        X = _train_only_stats_matrix(observations, cfg)
    else:
        X, _ = observation_matrix(observations)

    return run_protocol_on_matrix(
        X, y, model_kind, cfg,
        dataset_id=dataset_id, dropped=dropped, with_importance=with_importance,
    )


# ---------------------------------------------------------------------------
# Individual-vs-combined comparison grid

def run_matrix(
    deployments: list[Deployment],
    cfg: ProtocolConfig = ProtocolConfig(),
    model_kinds: tuple[str, ...] = ("gbt", "lstm"),
    with_importance: bool = False,
) -> dict[tuple[str, str], ProtocolResult]:
    """Every model kind on every deployment plus the pooled combined run."""
    results: dict[tuple[str, str], ProtocolResult] = {}
    for kind in model_kinds:
        for dep in deployments:
            results[(kind, dep.id)] = run_protocol(
                dep, kind, cfg, with_importance=with_importance
            )
        if len(deployments) > 1:
            combined = run_protocol(
                deployments, kind, cfg, with_importance=with_importance
            )
            results[(kind, combined.dataset_id)] = combined
    return results


def comparison_markdown(
    results: dict[tuple[str, str], ProtocolResult],
    deployment_ids: list[str],
) -> str:
    """Weighted-F1 grid: one row per model, deployments then the combined run."""
    kinds = sorted({kind for kind, _ in results})
    combined_ids = sorted(
        {ds for _, ds in results if ds not in deployment_ids}
    )
    columns = list(deployment_ids) + combined_ids

    lines = ["# Individual vs combined evaluation", ""]
    lines.append("Weighted F1 on the held-out test half.")
    lines.append("")
    lines.append("| model | " + " | ".join(columns) + " | mean individual | delta |")
    lines.append("|---" * (len(columns) + 3) + "|")
    for kind in kinds:
        cells = []
        individual = []
        for ds in columns:
            res = results.get((kind, ds))
            fw = res.metrics.weighted_f1 if res else float("nan")
            cells.append(f"{fw:.3f}")
            if ds in deployment_ids and res:
                individual.append(fw)
        mean_ind = float(np.mean(individual)) if individual else float("nan")
        combined_fw = (
            results[(kind, combined_ids[0])].metrics.weighted_f1
            if combined_ids else float("nan")
        )
        delta = mean_ind - combined_fw
        lines.append(
            f"| {kind} | " + " | ".join(cells)
            + f" | {mean_ind:.3f} | {delta:+.3f} |"
        )
    lines.append("")
    baseline = next(iter(results.values())).metrics
    lines.append(
        f"Majority baseline: accuracy {baseline.majority_baseline_accuracy:.3f}, "
        f"weighted F1 {baseline.majority_baseline_weighted_f1:.3f}."
    )
    lines.append("")
    return "\n".join(lines)
