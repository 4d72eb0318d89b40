"""Pre-event windowing and feature extraction.

Every observation covers the 54 minutes ending 12 minutes before its anchor
time, split into nine non-overlapping 6-minute windows.  Each window yields
seven statistics per channel (35 values), giving a 315-value flat vector or
a 9x35 sequence per observation.  The 12-minute gap keeps data recorded
during the agitation episode itself out of the features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import CHANNEL_ORDER, Channel, Deployment

SECONDS_PER_MIN = 60


class SpanError(ValueError):
    """Observation span falls outside the deployment."""


class QualityError(ValueError):
    """Too much missing data inside the observation span."""


@dataclass(frozen=True)
class WindowGeometry:
    """Shape of the pre-event extraction: gap, window length, window count."""

    gap_min: int = 12
    window_min: int = 6
    n_windows: int = 9
    max_missing_fraction: float = 0.05

    @property
    def window_s(self) -> int:
        return self.window_min * SECONDS_PER_MIN

    @property
    def span_s(self) -> int:
        return self.n_windows * self.window_s

    @property
    def gap_s(self) -> int:
        return self.gap_min * SECONDS_PER_MIN

    def span_bounds(self, anchor_time: float) -> tuple[float, float]:
        """Half-open [start, end) of the full extraction span before ``anchor_time``."""
        end = anchor_time - self.gap_s
        return end - self.span_s, end

    def window_starts(self, anchor_time: float) -> np.ndarray:
        start, _ = self.span_bounds(anchor_time)
        return start + np.arange(self.n_windows) * self.window_s


DEFAULT_GEOMETRY = WindowGeometry()

#: Per-channel statistics, in canonical order.
FEATURE_NAMES = (
    "mean",
    "median",
    "max",
    "variance",
    "mean_abs_diff",
    "max_abs_diff",
    "time_of_day",
)
N_FEATURES_PER_CHANNEL = len(FEATURE_NAMES)
N_CHANNELS = len(CHANNEL_ORDER)
N_FEATURES_PER_WINDOW = N_CHANNELS * N_FEATURES_PER_CHANNEL  # 35
N_WINDOWS = DEFAULT_GEOMETRY.n_windows
N_FEATURES = N_WINDOWS * N_FEATURES_PER_WINDOW  # 315


def feature_index(window: int, channel: int, feature: int, n_windows: int = N_WINDOWS) -> int:
    """Canonical flat index: window-major, then channel, then statistic."""
    if not (0 <= window < n_windows and 0 <= channel < N_CHANNELS
            and 0 <= feature < N_FEATURES_PER_CHANNEL):
        raise IndexError("feature coordinates out of range")
    return window * N_FEATURES_PER_WINDOW + channel * N_FEATURES_PER_CHANNEL + feature


def decompose_index(idx: int) -> tuple[int, int, int]:
    """Inverse of :func:`feature_index`: flat index -> (window, channel, feature)."""
    window, rest = divmod(idx, N_FEATURES_PER_WINDOW)
    channel, feature = divmod(rest, N_FEATURES_PER_CHANNEL)
    return window, channel, feature


def feature_name(idx: int) -> str:
    w, c, f = decompose_index(idx)
    return f"w{w}_{CHANNEL_ORDER[c].key}_{FEATURE_NAMES[f]}"


@dataclass
class Observation:
    """One labeled pre-event extraction.

    ``windows`` has shape (n_windows, 5 channels, window seconds) and holds
    the channel samples exactly as they appear in the source deployment
    (filtered + normalized in the standard pipeline).
    """

    anchor_time: float
    label: int
    node_id: str
    windows: np.ndarray
    window_starts: np.ndarray
    tz_offset_min: int
    severity: int | None = None
    deployment_id: str = ""

    def __post_init__(self):
        if self.windows.ndim != 3 or self.windows.shape[1] != N_CHANNELS:
            raise ValueError(f"windows must be (n_windows, 5, window_s), got {self.windows.shape}")
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


def extract_observation(
    dep: Deployment,
    anchor_time: float,
    label: int,
    geometry: WindowGeometry = DEFAULT_GEOMETRY,
    severity: int | None = None,
) -> Observation:
    """Cut the pre-anchor windows for one anchor out of a deployment.

    The node is fixed by the location track at the anchor time.  Raises
    :class:`SpanError` when the span leaves the deployment and
    :class:`QualityError` when any channel is missing more than the allowed
    fraction inside the span.  Remaining missing samples are linearly
    interpolated so downstream feature code sees complete windows.
    """
    span_start, span_end = geometry.span_bounds(anchor_time)
    dep_start, dep_end = dep.span
    if span_start < dep_start or span_end > dep_end:
        raise SpanError(
            f"observation span [{span_start}, {span_end}) outside deployment"
        )
    node_id = dep.track.node_at(anchor_time)

    n = geometry.span_s
    windows = np.empty((geometry.n_windows, N_CHANNELS, geometry.window_s))
    for c, channel in enumerate(CHANNEL_ORDER):
        cs = dep.nodes[node_id][channel]
        k0 = int(round(span_start - cs.start_time))
        values = cs.values[k0:k0 + n]
        missing = cs.missing[k0:k0 + n]
        frac = missing.mean()
        if frac > geometry.max_missing_fraction:
            raise QualityError(
                f"{channel.key}: {frac:.1%} missing in observation span"
            )
        if missing.any():
            idx = np.arange(n)
            values = values.copy()
            values[missing] = np.interp(
                idx[missing], idx[~missing], values[~missing]
            )
        windows[:, c, :] = values.reshape(geometry.n_windows, geometry.window_s)

    return Observation(
        anchor_time=anchor_time,
        label=label,
        node_id=node_id,
        windows=windows,
        window_starts=geometry.window_starts(anchor_time),
        tz_offset_min=dep.tz_offset_min,
        severity=severity,
        deployment_id=dep.id,
    )


def sample_negatives(
    dep: Deployment,
    positives: list[Observation],
    ratio: int = 3,
    rng_seed: int = 0,
    geometry: WindowGeometry = DEFAULT_GEOMETRY,
    exclusion_s: float = 2 * 3600,
    max_attempts: int = 10_000,
) -> list[Observation]:
    """Draw ``ratio`` negatives per positive from label-free stretches.

    Anchor times are drawn uniformly over the deployment span, rejecting any
    candidate within ``exclusion_s`` of a reported label or failing the
    extraction preconditions.  Deterministic for a given seed.
    """
    target = ratio * len(positives)
    if target == 0:
        return []
    rng = np.random.default_rng(rng_seed)
    label_times = np.sort([lab.time for lab in dep.labels])
    start, end = dep.span

    negatives: list[Observation] = []
    for _ in range(max_attempts):
        if len(negatives) == target:
            break
        t = float(rng.uniform(start, end))
        i = np.searchsorted(label_times, t)
        near_label = (
            (i > 0 and t - label_times[i - 1] < exclusion_s)
            or (i < len(label_times) and label_times[i] - t < exclusion_s)
        )
        if near_label:
            continue
        try:
            negatives.append(extract_observation(dep, t, label=0, geometry=geometry))
        except (SpanError, QualityError):
            continue
    if len(negatives) < target:
        raise RuntimeError(
            f"placed only {len(negatives)}/{target} negatives "
            f"after {max_attempts} attempts"
        )
    return negatives


def time_of_day_value(epoch_s: float, tz_offset_min: int) -> float:
    """Minutes since local midnight, rescaled to [0, 100)."""
    local = epoch_s + tz_offset_min * SECONDS_PER_MIN
    minutes = (local % 86400.0) / SECONDS_PER_MIN
    return 100.0 * minutes / 1440.0


def window_features(window: np.ndarray, window_start_local_min: float) -> np.ndarray:
    """The 35 per-window statistics for one (5, window_s) sample block.

    Per channel: mean, median, max, population variance, mean and max of the
    absolute first differences, and the window-start time of day (identical
    across channels, kept per channel so the flat layout stays rectangular).
    """
    window = np.asarray(window, dtype=float)
    tod = 100.0 * (window_start_local_min % 1440.0) / 1440.0
    out = np.empty((window.shape[0], N_FEATURES_PER_CHANNEL))
    diffs = np.abs(np.diff(window, axis=1))
    out[:, 0] = window.mean(axis=1)
    out[:, 1] = np.median(window, axis=1)
    out[:, 2] = window.max(axis=1)
    out[:, 3] = window.var(axis=1)
    out[:, 4] = diffs.mean(axis=1)
    out[:, 5] = diffs.max(axis=1)
    out[:, 6] = tod
    return out.reshape(-1)


def to_sequence(obs: Observation) -> np.ndarray:
    """Per-window feature rows in time order: shape (n_windows, 35)."""
    rows = []
    for w in range(obs.windows.shape[0]):
        start_local_min = (
            (obs.window_starts[w] + obs.tz_offset_min * SECONDS_PER_MIN) % 86400.0
        ) / SECONDS_PER_MIN
        rows.append(window_features(obs.windows[w], start_local_min))
    return np.stack(rows)


def to_feature_vector(obs: Observation) -> np.ndarray:
    """Flat canonical feature vector (row-major flattening of the sequence)."""
    return to_sequence(obs).reshape(-1)


# ---------------------------------------------------------------------------
# Aggregation bookkeeping: flat feature index -> channel / statistic / window

def group_indices(by: str, n_windows: int = N_WINDOWS) -> dict[str, np.ndarray]:
    """Flat-index groups for ``by`` in {"channel", "feature", "window"}."""
    total = n_windows * N_FEATURES_PER_WINDOW
    idx = np.arange(total)
    w, rest = np.divmod(idx, N_FEATURES_PER_WINDOW)
    c, f = np.divmod(rest, N_FEATURES_PER_CHANNEL)
    if by == "channel":
        return {ch.key: idx[c == i] for i, ch in enumerate(CHANNEL_ORDER)}
    if by == "feature":
        return {name: idx[f == i] for i, name in enumerate(FEATURE_NAMES)}
    if by == "window":
        return {f"w{i}": idx[w == i] for i in range(n_windows)}
    raise ValueError(f"unknown grouping {by!r}")


def aggregate_importance(per_feature: np.ndarray, by: str) -> dict[str, float]:
    """Sum a per-feature importance vector over channel/feature/window groups."""
    per_feature = np.asarray(per_feature, dtype=float)
    return {
        name: float(per_feature[members].sum())
        for name, members in group_indices(by, n_windows=len(per_feature) // N_FEATURES_PER_WINDOW).items()
    }


# ---------------------------------------------------------------------------
# Feature matrix assembly and CSV round-trip

def observation_matrix(observations: list[Observation]) -> tuple[np.ndarray, np.ndarray]:
    """Stack observations into (X, y) with X of shape (n, n_features)."""
    X = np.stack([to_feature_vector(o) for o in observations])
    y = np.array([o.label for o in observations], dtype=int)
    return X, y


def write_features_csv(path, observations: list[Observation]) -> None:
    """Write ``label,severity,f0..f314`` rows for external analysis."""
    X, y = observation_matrix(observations)
    with open(path, "w", newline="") as fh:
        header = ["label", "severity"] + [f"f{i}" for i in range(X.shape[1])]
        fh.write(",".join(header) + "\n")
        for obs, row, label in zip(observations, X, y):
            sev = "" if obs.severity is None else str(obs.severity)
            fh.write(",".join([str(label), sev] + [repr(float(v)) for v in row]) + "\n")


def read_features_csv(path) -> tuple[np.ndarray, np.ndarray, list[int | None]]:
    """Read back a features CSV; returns (X, y, severities)."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[:2] != ["label", "severity"]:
            raise ValueError(f"{path}: not a features CSV")
        rows, labels, severities = [], [], []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            labels.append(int(parts[0]))
            severities.append(int(parts[1]) if parts[1] else None)
            rows.append([float(v) for v in parts[2:]])
    return np.asarray(rows), np.asarray(labels, dtype=int), severities
