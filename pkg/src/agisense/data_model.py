"""Canonical data types and file ingestion for home sensor deployments.

A deployment bundles everything recorded in one home over a multi-week
period: per-room ambient sensor streams, caregiver-reported agitation
labels, and the time-varying "closest node" location track.  All streams
are aligned onto a common 1 Hz grid at ingestion time.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

# Gaps up to this many seconds are forward-filled during resampling;
# anything longer is marked missing.
MAX_FILL_GAP_S = 10


class SensorCsvError(ValueError):
    """Raised for malformed sensor/label/track CSV content."""


class LocationUnknownError(ValueError):
    """Raised when the location track has no entry at the queried time."""


class Channel(Enum):
    """The five ambient channels recorded by every sensing node."""

    LIGHT = ("light", "lux", 1)
    TEMPERATURE = ("temperature", "°C", 1)
    HUMIDITY = ("humidity", "%RH", 1)
    PRESSURE = ("pressure", "Pa", 1)
    ACOUSTIC = ("acoustic", "dB", 8)

    def __init__(self, key: str, unit: str, native_rate_hz: int):
        self.key = key
        self.unit = unit
        self.native_rate_hz = native_rate_hz

    @classmethod
    def from_key(cls, key: str) -> "Channel":
        for ch in cls:
            if ch.key == key:
                return ch
        raise KeyError(key)


#: Canonical channel ordering used by the feature layout.
CHANNEL_ORDER = (
    Channel.LIGHT,
    Channel.TEMPERATURE,
    Channel.HUMIDITY,
    Channel.PRESSURE,
    Channel.ACOUSTIC,
)


@dataclass(frozen=True)
class SensorSample:
    """One raw measurement from one node, in the channel's native unit."""

    timestamp: float  # seconds since Unix epoch, UTC
    node_id: str
    channel: Channel
    value: float


@dataclass
class ChannelSeries:
    """One channel of one node resampled to exactly 1 Hz.

    ``values[k]`` holds the sample for second ``start_time + k``; positions
    flagged in ``missing`` carry no information (their value is NaN).
    """

    channel: Channel
    start_time: float
    values: np.ndarray
    missing: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.missing = np.asarray(self.missing, dtype=bool)
        if self.values.shape != self.missing.shape:
            raise ValueError("values and missing mask must have equal length")
        present = ~self.missing
        if not np.all(np.isfinite(self.values[present])):
            raise ValueError("non-finite value outside missing mask")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class AgitationLabel:
    """A caregiver-reported agitation episode."""

    time: float
    severity: int
    behavior: str = ""
    node_id: str | None = None

    def __post_init__(self):
        if not 1 <= int(self.severity) <= 5:
            raise ValueError(f"severity must be in [1, 5], got {self.severity}")


@dataclass
class LocationTrack:
    """Piecewise-constant map from time to the node closest to the resident.

    ``breakpoints`` is an ordered list of ``(time, node_id)`` pairs; each
    segment extends from its breakpoint up to (but excluding) the next one.
    """

    breakpoints: list[tuple[float, str]]

    def __post_init__(self):
        times = [t for t, _ in self.breakpoints]
        if not self.breakpoints:
            raise ValueError("location track must have at least one breakpoint")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("track breakpoints must be strictly increasing")
        self._times = times

    def node_at(self, t: float) -> str:
        """Node in effect at time ``t`` (boundary belongs to the new segment)."""
        i = bisect_right(self._times, t)
        if i == 0:
            raise LocationUnknownError(f"no location known at t={t}")
        return self.breakpoints[i - 1][1]


def node_at(track: LocationTrack, t: float) -> str:
    """Module-level convenience wrapper around :meth:`LocationTrack.node_at`."""
    return track.node_at(t)


@dataclass
class Deployment:
    """One home's dataset: aligned streams, labels, and location track."""

    id: str
    span: tuple[float, float]
    nodes: dict[str, dict[Channel, ChannelSeries]]
    labels: list[AgitationLabel]
    track: LocationTrack
    tz_offset_min: int = 0
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        start, end = self.span
        if end <= start:
            raise ValueError("deployment span must be non-empty")
        for node_id, channels in self.nodes.items():
            missing = [ch.key for ch in Channel if ch not in channels]
            if missing:
                raise ValueError(f"node {node_id!r} lacks channels: {missing}")
        for lab in self.labels:
            if not start <= lab.time <= end:
                raise ValueError(f"label at t={lab.time} outside deployment span")
        for _, nid in self.track.breakpoints:
            if nid not in self.nodes:
                raise ValueError(f"track references unknown node {nid!r}")
        self.labels = sorted(self.labels, key=lambda lab: lab.time)

    @property
    def node_ids(self) -> list[str]:
        return sorted(self.nodes)


# ---------------------------------------------------------------------------
# CSV ingestion

SENSOR_HEADER = ["timestamp", "node_id", "channel", "value"]
LABELS_HEADER = ["time", "severity", "behavior", "node_id"]
TRACK_HEADER = ["time", "node_id"]


def _check_header(row: list[str] | None, expected: list[str], path: Path):
    if row is None or [c.strip() for c in row] != expected:
        raise SensorCsvError(
            f"{path}: expected header {','.join(expected)!r}, got {row!r}"
        )


def parse_sensor_csv(path: str | Path) -> list[SensorSample]:
    """Parse a raw sensor CSV into samples sorted by (node, channel, time).

    Raises :class:`SensorCsvError` with the offending line number for a
    malformed row, an unknown channel name, or a non-finite value.
    """
    path = Path(path)
    samples: list[SensorSample] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        _check_header(next(reader, None), SENSOR_HEADER, path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise SensorCsvError(f"{path}: malformed row at line {lineno}")
            ts_s, node_id, channel_s, value_s = row
            try:
                timestamp = float(ts_s)
                value = float(value_s)
            except ValueError as exc:
                raise SensorCsvError(
                    f"{path}: malformed row at line {lineno}: {exc}"
                ) from None
            try:
                channel = Channel.from_key(channel_s)
            except KeyError:
                raise SensorCsvError(
                    f"{path}: unknown channel {channel_s!r} at line {lineno}"
                ) from None
            if not (math.isfinite(timestamp) and math.isfinite(value)):
                raise SensorCsvError(
                    f"{path}: non-finite number at line {lineno}"
                )
            samples.append(SensorSample(timestamp, node_id, channel, value))
    samples.sort(key=lambda s: (s.node_id, s.channel.key, s.timestamp))
    return samples


def parse_labels_csv(path: str | Path) -> list[AgitationLabel]:
    """Parse the caregiver label CSV (``time,severity,behavior,node_id``)."""
    path = Path(path)
    labels: list[AgitationLabel] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        _check_header(next(reader, None), LABELS_HEADER, path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise SensorCsvError(f"{path}: malformed row at line {lineno}")
            time_s, severity_s, behavior, node_id = row
            try:
                labels.append(
                    AgitationLabel(
                        time=float(time_s),
                        severity=int(severity_s),
                        behavior=behavior,
                        node_id=node_id or None,
                    )
                )
            except ValueError as exc:
                raise SensorCsvError(
                    f"{path}: bad label at line {lineno}: {exc}"
                ) from None
    return labels


def parse_track_csv(path: str | Path) -> LocationTrack:
    """Parse the location track CSV (``time,node_id``, ascending)."""
    path = Path(path)
    breakpoints: list[tuple[float, str]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        _check_header(next(reader, None), TRACK_HEADER, path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise SensorCsvError(f"{path}: malformed row at line {lineno}")
            try:
                breakpoints.append((float(row[0]), row[1]))
            except ValueError:
                raise SensorCsvError(
                    f"{path}: bad time at line {lineno}"
                ) from None
    try:
        return LocationTrack(breakpoints)
    except ValueError as exc:
        raise SensorCsvError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# 1 Hz alignment

def _fill_gaps(values: np.ndarray, present: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward-fill absent runs of <= MAX_FILL_GAP_S seconds, else mark missing."""
    n = len(values)
    idx = np.arange(n)
    # Index of the latest present sample at or before each position (-1: none).
    last = np.where(present, idx, -1)
    last = np.maximum.accumulate(last)
    # Index of the earliest present sample at or after each position (n: none).
    nxt = np.where(present[::-1], idx[::-1], n)
    nxt = np.minimum.accumulate(nxt)[::-1]

    run_len = nxt - last - 1
    fillable = (~present) & (last >= 0) & (run_len <= MAX_FILL_GAP_S)
    out = values.copy()
    out[fillable] = values[np.maximum(last[fillable], 0)]
    missing = ~(present | fillable)
    out[missing] = np.nan
    return out, missing


def resample_group(
    samples: list[SensorSample], span: tuple[float, float]
) -> ChannelSeries:
    """Resample one (node, channel) group onto the 1 Hz grid of ``span``.

    Acoustic samples (8 Hz native) are aggregated by per-second maximum;
    1 Hz channels are snapped to the nearest integer second, keeping the
    last sample when two snap to the same second (logged as a warning).
    """
    if not samples:
        raise ValueError("cannot resample an empty sample group")
    channel = samples[0].channel
    node_id = samples[0].node_id
    if any(s.channel is not channel or s.node_id != node_id for s in samples):
        raise ValueError("resample_group expects a single (node, channel) group")

    start, end = span
    n = int(math.floor(end - start))
    times = np.array([s.timestamp for s in samples])
    vals = np.array([s.value for s in samples])

    grid = np.full(n, np.nan)
    present = np.zeros(n, dtype=bool)
    if channel is Channel.ACOUSTIC:
        idx = np.floor(times - start).astype(int)
        ok = (idx >= 0) & (idx < n)
        grid = np.full(n, -np.inf)  # so maximum.at can accumulate
        np.maximum.at(grid, idx[ok], vals[ok])
        present[idx[ok]] = True
        grid[~present] = np.nan
    else:
        idx = np.rint(times - start).astype(int)
        ok = (idx >= 0) & (idx < n)
        idx, vals = idx[ok], vals[ok]
        uniq, counts = np.unique(idx, return_counts=True)
        dup = int(counts.sum() - len(uniq))
        if dup:
            log.warning(
                "%s/%s: %d samples snapped onto occupied seconds; keeping last",
                node_id, channel.key, dup,
            )
        # Reverse order so the first assignment seen per second is the last sample.
        rev_idx, first_pos = np.unique(idx[::-1], return_index=True)
        grid[rev_idx] = vals[::-1][first_pos]
        present[rev_idx] = True

    values, missing = _fill_gaps(grid, present)
    return ChannelSeries(channel=channel, start_time=start, values=values, missing=missing)


def resample_to_1hz(
    samples: list[SensorSample], span: tuple[float, float]
) -> dict[tuple[str, Channel], ChannelSeries]:
    """Group samples by (node, channel) and resample each group to 1 Hz."""
    groups: dict[tuple[str, Channel], list[SensorSample]] = {}
    for s in samples:
        groups.setdefault((s.node_id, s.channel), []).append(s)
    return {key: resample_group(group, span) for key, group in groups.items()}


# ---------------------------------------------------------------------------
# Manifest round-trip

def load_deployment(manifest_path: str | Path) -> Deployment:
    """Load a deployment from its JSON manifest and the three CSVs it names."""
    manifest_path = Path(manifest_path)
    with manifest_path.open() as fh:
        manifest = json.load(fh)
    for key in ("id", "span", "tz_offset_min", "sensor_csv", "labels_csv", "track_csv"):
        if key not in manifest:
            raise SensorCsvError(f"{manifest_path}: manifest missing key {key!r}")
    base = manifest_path.parent
    span = (float(manifest["span"][0]), float(manifest["span"][1]))

    samples = parse_sensor_csv(base / manifest["sensor_csv"])
    labels = parse_labels_csv(base / manifest["labels_csv"])
    track = parse_track_csv(base / manifest["track_csv"])

    series = resample_to_1hz(samples, span)
    nodes: dict[str, dict[Channel, ChannelSeries]] = {}
    for (node_id, channel), cs in series.items():
        nodes.setdefault(node_id, {})[channel] = cs
    return Deployment(
        id=str(manifest["id"]),
        span=span,
        nodes=nodes,
        labels=labels,
        track=track,
        tz_offset_min=int(manifest["tz_offset_min"]),
    )


def write_deployment(dep: Deployment, out_dir: str | Path) -> Path:
    """Write a deployment back to the manifest + CSV schema; returns manifest path.

    Only non-missing 1 Hz samples are written, so re-ingesting reproduces the
    series bit-exactly (missing runs survive because the resampler only fills
    gaps shorter than the ones this writer leaves behind).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with (out_dir / "sensors.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SENSOR_HEADER)
        for node_id in sorted(dep.nodes):
            for channel in CHANNEL_ORDER:
                cs = dep.nodes[node_id][channel]
                ks = np.nonzero(~cs.missing)[0]
                for k in ks:
                    w.writerow(
                        [repr(cs.start_time + float(k)), node_id, channel.key,
                         repr(float(cs.values[k]))]
                    )

    with (out_dir / "labels.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABELS_HEADER)
        for lab in dep.labels:
            w.writerow([repr(lab.time), lab.severity, lab.behavior, lab.node_id or ""])

    with (out_dir / "track.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_HEADER)
        for t, nid in dep.track.breakpoints:
            w.writerow([repr(t), nid])

    manifest = {
        "id": dep.id,
        "span": [dep.span[0], dep.span[1]],
        "tz_offset_min": dep.tz_offset_min,
        "sensor_csv": "sensors.csv",
        "labels_csv": "labels.csv",
        "track_csv": "track.csv",
    }
    manifest_path = out_dir / "manifest.json"
    with manifest_path.open("w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path
