"""Speckle filtering and range normalization for the aligned 1 Hz streams.

Every channel except the acoustic noise level is run through a 10-sample
median filter, then all channels are linearly rescaled to [0, 100] so that
pascals, lux, and degrees live on a common scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .data_model import Channel, ChannelSeries, Deployment

log = logging.getLogger(__name__)

DEFAULT_FILTER_WINDOW = 10


@dataclass(frozen=True)
class NormalizationStats:
    """Per (node, channel) min/max used for the 0-100 rescale."""

    ranges: dict[tuple[str, Channel], tuple[float, float]]

    def range_for(self, node_id: str, channel: Channel) -> tuple[float, float]:
        try:
            return self.ranges[(node_id, channel)]
        except KeyError:
            raise KeyError(f"no normalization stats for ({node_id}, {channel.key})") from None


def median_filter(series: ChannelSeries, window_len: int = DEFAULT_FILTER_WINDOW) -> ChannelSeries:
    """Sliding median over a window of up to ``window_len`` samples.

    The window is centered at each index (left-heavy for even lengths) and
    shrinks at the series edges; missing samples are excluded from the
    median, and missing positions stay missing.  An even number of samples
    in the window yields the mean of the two middle values.
    """
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    n = len(series.values)
    left = window_len // 2
    right = window_len - 1 - left

    padded = np.full(n + left + right, np.nan)
    padded[left:left + n] = np.where(series.missing, np.nan, series.values)
    windows = np.lib.stride_tricks.sliding_window_view(padded, window_len)

    out = np.full(n, np.nan)
    # Sort puts NaNs last; pick the middle of the valid prefix per row.
    chunk = 1 << 16
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        w = np.sort(windows[lo:hi], axis=1)
        k = window_len - np.isnan(w).sum(axis=1)
        rows = np.arange(hi - lo)
        valid = k > 0
        mid = np.maximum(k, 1) // 2
        odd_med = w[rows, mid]
        even_med = 0.5 * (w[rows, np.maximum(mid - 1, 0)] + w[rows, mid])
        med = np.where(k % 2 == 1, odd_med, even_med)
        out[lo:hi] = np.where(valid, med, np.nan)

    out[series.missing] = np.nan
    return ChannelSeries(
        channel=series.channel,
        start_time=series.start_time,
        values=out,
        missing=series.missing.copy(),
    )


def compute_norm_stats(dep: Deployment) -> NormalizationStats:
    """Min/max of each (node, channel) over its non-missing samples."""
    ranges: dict[tuple[str, Channel], tuple[float, float]] = {}
    for node_id, channels in dep.nodes.items():
        for channel, cs in channels.items():
            vals = cs.values[~cs.missing]
            if vals.size == 0:
                raise ValueError(
                    f"all samples missing for ({node_id}, {channel.key})"
                )
            ranges[(node_id, channel)] = (float(vals.min()), float(vals.max()))
    return NormalizationStats(ranges)


def normalize_values(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Map values into [0, 100]; a degenerate range maps everything to 50.

    Values outside [lo, hi] (possible when the stats come from another data
    split) are clamped to the output range.
    """
    values = np.asarray(values, dtype=float)
    if hi == lo:
        return np.where(np.isnan(values), np.nan, 50.0)
    out = 100.0 * (values - lo) / (hi - lo)
    with np.errstate(invalid="ignore"):
        n_clamped = int(np.sum((out < 0.0) | (out > 100.0)))
    if n_clamped:
        log.warning("clamped %d samples outside the normalization range", n_clamped)
    return np.clip(out, 0.0, 100.0)


def normalize(series: ChannelSeries, stats: NormalizationStats, node_id: str) -> ChannelSeries:
    """Rescale one series to [0, 100] using the stats for its (node, channel)."""
    lo, hi = stats.range_for(node_id, series.channel)
    values = normalize_values(series.values, lo, hi)
    values[series.missing] = np.nan
    return ChannelSeries(
        channel=series.channel,
        start_time=series.start_time,
        values=values,
        missing=series.missing.copy(),
    )


def filter_deployment(dep: Deployment, window_len: int = DEFAULT_FILTER_WINDOW) -> Deployment:
    """Median-filter every channel of every node except the acoustic level."""
    nodes = {
        node_id: {
            channel: (cs if channel is Channel.ACOUSTIC else median_filter(cs, window_len))
            for channel, cs in channels.items()
        }
        for node_id, channels in dep.nodes.items()
    }
    return replace(dep, nodes=nodes)


def normalize_deployment(dep: Deployment, stats: NormalizationStats) -> Deployment:
    """Rescale every channel of every node to [0, 100]."""
    nodes = {
        node_id: {
            channel: normalize(cs, stats, node_id)
            for channel, cs in channels.items()
        }
        for node_id, channels in dep.nodes.items()
    }
    return replace(dep, nodes=nodes)


def preprocess_deployment(
    dep: Deployment, window_len: int = DEFAULT_FILTER_WINDOW
) -> tuple[Deployment, NormalizationStats]:
    """Filter then normalize a deployment; returns it with the stats used."""
    filtered = filter_deployment(dep, window_len)
    stats = compute_norm_stats(filtered)
    return normalize_deployment(filtered, stats), stats
