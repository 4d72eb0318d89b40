"""Deterministic synthetic home-deployment simulator.

Builds multi-week ambient streams for one or more sensing nodes — light,
temperature, humidity, and pressure at 1 Hz plus acoustic level at 8 Hz —
with a random-walk location track and agitation labels planted by trigger
rules.  Each label's precursor is injected 20–40 minutes earlier into the
stream of the node the subject occupies at label time, and every label gets
a ground-truth record naming the responsible channel.  Output is seeded and
bit-reproducible, both in memory and on disk.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data_model import (
    Channel,
    CHANNEL_ORDER,
    ChannelSeries,
    Deployment,
    AgitationLabel,
    LocationTrack,
    LABELS_HEADER,
    SENSOR_HEADER,
    TRACK_HEADER,
)
from .features import DEFAULT_GEOMETRY, WindowGeometry

log = logging.getLogger(__name__)

TRIGGER_KINDS = ("noise_spike", "light_ramp", "sundowning", "none")
BEHAVIORS = ("pacing", "shouting", "restlessness", "aggression", "wandering")

# Fixed stream origin (an arbitrary midnight UTC) so generated timestamps are
# stable across runs and machines.
EPOCH_ORIGIN = 1_672_531_200.0


@dataclass(frozen=True)
class DiurnalProfile:
    """Shape parameters for the five ambient channels.

    Distractor rates default to zero; when raised they sprinkle unlabeled
    loud bursts or bright ramps through the deployment, indistinguishable in
    shape from the planted precursors of other deployments.
    """

    light_day_peak_lux: float = 400.0
    light_night_lux: float = 1.0
    light_noise_lux: float = 4.0
    # Cloud cover: per-day multiplier on the daylight curve, so a given lux
    # level does not pin down the clock time.
    light_weather_range: tuple[float, float] = (0.15, 1.0)
    lamp_events_per_day: float = 4.0
    lamp_lux: float = 180.0
    lamp_duration_min: tuple[float, float] = (10.0, 90.0)

    temp_base_c: float = 21.0
    temp_diurnal_c: float = 1.5
    temp_peak_hour: float = 15.0
    temp_day_wander_c: float = 1.5
    temp_hvac_c: float = 0.8
    temp_hvac_period_min: float = 40.0
    temp_noise_c: float = 0.05

    humidity_base: float = 45.0
    humidity_per_deg: float = -1.5
    humidity_noise: float = 0.4

    pressure_base_pa: float = 101_325.0
    pressure_reversion_per_min: float = 0.01
    pressure_step_pa: float = 3.0
    pressure_noise_pa: float = 0.3

    acoustic_floor_db: float = 40.0
    acoustic_day_bump_db: float = 8.0
    acoustic_bump_range: tuple[float, float] = (0.5, 1.4)
    acoustic_noise_db: float = 1.5
    bursts_per_hour: float = 6.0
    burst_db: tuple[float, float] = (55.0, 70.0)
    burst_duration_s: tuple[float, float] = (2.0, 20.0)

    distractor_loud_per_day: float = 0.0
    distractor_loud_db: tuple[float, float] = (85.0, 95.0)
    distractor_loud_min: tuple[float, float] = (2.0, 5.0)
    distractor_bright_per_day: float = 0.0
    distractor_bright_lux: tuple[float, float] = (600.0, 900.0)
    distractor_bright_min: tuple[float, float] = (8.0, 14.0)

    def __post_init__(self):
        if self.light_night_lux < 0 or self.light_day_peak_lux < 0:
            raise ValueError("light levels must be non-negative")
        if not 30.0 <= self.acoustic_floor_db <= 100.0:
            raise ValueError("acoustic floor must sit inside [30, 100] dB")


@dataclass(frozen=True)
class TriggerRule:
    """One label-placing process.

    ``noise_spike`` and ``light_ramp`` plant a physical precursor and fire
    the label a lagged 20–40 minutes later; ``sundowning`` places labels in
    an evening local-time window with no physical precursor; ``none`` places
    labels at random times with no signal at all (the null control).
    """

    kind: str
    rate_per_week: float = 5.0
    lag_min: tuple[float, float] = (20.0, 40.0)
    firing_probability: float = 1.0
    noise_db: tuple[float, float] = (85.0, 95.0)
    noise_duration_min: tuple[float, float] = (2.0, 5.0)
    light_lux: tuple[float, float] = (600.0, 900.0)
    light_duration_min: tuple[float, float] = (8.0, 14.0)
    sundowning_hours: tuple[float, float] = (17.0, 20.0)
    min_separation_min: float = 180.0

    def __post_init__(self):
        if self.kind not in TRIGGER_KINDS:
            raise ValueError(f"unknown trigger kind {self.kind!r}")
        if self.rate_per_week < 0:
            raise ValueError("rate_per_week must be non-negative")
        if not 0.0 <= self.firing_probability <= 1.0:
            raise ValueError("firing_probability must lie in [0, 1]")
        lo, hi = self.lag_min
        if self.kind in ("noise_spike", "light_ramp"):
            # The lag must clear the pre-anchor exclusion gap, or the
            # precursor would fall outside the feature span.
            if lo < DEFAULT_GEOMETRY.gap_min:
                raise ValueError(
                    f"lag must be >= {DEFAULT_GEOMETRY.gap_min} minutes"
                )
            if hi < lo:
                raise ValueError("lag range must be ordered")


@dataclass(frozen=True)
class GroundTruth:
    """Provenance of one planted agitation label."""

    label_time: float
    kind: str
    channel: str
    node_id: str
    precursor_start: float | None = None
    precursor_end: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Internal builders

def _local_hours(t: np.ndarray | float, tz_offset_min: int):
    return ((np.asarray(t) + tz_offset_min * 60.0) % 86400.0) / 3600.0


def _daylight(hours: np.ndarray) -> np.ndarray:
    """Smooth 0..1 day curve: zero before 06:00 and after 18:00."""
    x = np.sin(np.pi * (hours - 6.0) / 12.0)
    return np.clip(x, 0.0, None) ** 1.5


def _smooth_noise(n: int, step_s: int, sigma: float, rng) -> np.ndarray:
    """Slow wander: coarse Gaussian draws linearly interpolated to 1 Hz."""
    m = n // step_s + 2
    coarse = rng.normal(0.0, sigma, m)
    return np.interp(np.arange(n), np.arange(m) * step_s, coarse)


def _random_track(
    span: tuple[float, float], node_names: list[str], rng, mean_dwell_s: float = 1200.0
) -> LocationTrack:
    start, end = span
    current = node_names[int(rng.integers(len(node_names)))]
    breakpoints = [(start, current)]
    if len(node_names) > 1:
        t = start
        while True:
            t += float(rng.exponential(mean_dwell_s))
            if t >= end:
                break
            others = [n for n in node_names if n != current]
            current = others[int(rng.integers(len(others)))]
            breakpoints.append((t, current))
    return LocationTrack(breakpoints)


def _place_times(
    rule: TriggerRule,
    span: tuple[float, float],
    tz_offset_min: int,
    rng,
    geometry: WindowGeometry,
) -> list[float]:
    """Draw label times honoring span margin, separation, and local-hour window."""
    start, end = span
    weeks = (end - start) / (7 * 86400.0)
    n = int(round(rule.rate_per_week * weeks))
    earliest = start + geometry.gap_s + geometry.span_s
    if n == 0 or earliest >= end:
        if rule.rate_per_week > 0:
            log.warning("rule %s cannot fire within the span; no labels placed", rule.kind)
        return []

    sep = rule.min_separation_min * 60.0
    accepted: list[float] = []
    attempts = 0
    max_attempts = 500 * n + 1000
    while len(accepted) < n and attempts < max_attempts:
        attempts += 1
        t = float(rng.uniform(earliest, end))
        if rule.kind == "sundowning":
            h = float(_local_hours(t, tz_offset_min))
            lo, hi = rule.sundowning_hours
            if not lo <= h < hi:
                continue
        if any(abs(t - s) < sep for s in accepted):
            continue
        accepted.append(t)
    if len(accepted) < n:
        log.warning(
            "rule %s: placed only %d/%d labels within separation constraints",
            rule.kind, len(accepted), n,
        )
    return sorted(accepted)


def _paint_burst(arr: np.ndarray, i0: int, i1: int, level: float, rng, jitter: float = 0.8):
    i0 = max(i0, 0)
    i1 = min(i1, len(arr))
    if i1 <= i0:
        return
    seg = level + rng.normal(0.0, jitter, i1 - i0)
    arr[i0:i1] = np.maximum(arr[i0:i1], seg)


def _paint_ramp(arr: np.ndarray, i0: int, i1: int, amplitude: float):
    i0 = max(i0, 0)
    i1 = min(i1, len(arr))
    if i1 <= i0:
        return
    arr[i0:i1] += amplitude * np.linspace(0.0, 1.0, i1 - i0)


class _Synthesis:
    """All per-deployment arrays plus labels and ground truth."""

    def __init__(self, span, nodes_1hz, acoustic_8hz, track, labels, ground_truth):
        self.span = span
        self.nodes_1hz = nodes_1hz          # {node: {Channel: values}} (no acoustic)
        self.acoustic_8hz = acoustic_8hz    # {node: values at 8 Hz}
        self.track = track
        self.labels = labels
        self.ground_truth = ground_truth


def _synthesize(
    profile: DiurnalProfile,
    rules: list[TriggerRule],
    duration_days: float,
    n_nodes: int,
    seed: int,
    tz_offset_min: int,
    geometry: WindowGeometry = DEFAULT_GEOMETRY,
) -> _Synthesis:
    if duration_days < 2:
        raise ValueError("duration must be at least 2 days")
    if n_nodes < 1:
        raise ValueError("need at least one sensing node")
    for rule in rules:
        if rule.kind not in TRIGGER_KINDS:
            raise ValueError(f"unknown trigger kind {rule.kind!r}")

    start = EPOCH_ORIGIN
    n_s = int(round(duration_days * 86400))
    end = start + n_s
    span = (start, end)
    node_names = [f"n{i + 1}" for i in range(n_nodes)]

    root = np.random.SeedSequence(seed)
    ss_track, ss_events, ss_streams = root.spawn(3)
    track = _random_track(span, node_names, np.random.default_rng(ss_track))

    # Base streams, one child seed per (node, channel) so adding nodes or
    # rules never reshuffles existing streams.
    stream_seeds = ss_streams.spawn(n_nodes * 5)
    nodes_1hz: dict[str, dict[Channel, np.ndarray]] = {}
    acoustic_8hz: dict[str, np.ndarray] = {}
    t_1hz = start + np.arange(n_s, dtype=float)
    hours = _local_hours(t_1hz, tz_offset_min)
    day_curve = _daylight(hours)
    n_days = int(math.ceil(duration_days))
    day_index = np.minimum((np.arange(n_s) // 86400), n_days - 1)
    for ni, node in enumerate(node_names):
        chans: dict[Channel, np.ndarray] = {}

        rng = np.random.default_rng(stream_seeds[ni * 5 + 0])
        clouds = rng.uniform(*profile.light_weather_range, n_days)
        light = (
            profile.light_night_lux
            + profile.light_day_peak_lux * clouds[day_index] * day_curve
            + rng.normal(0.0, profile.light_noise_lux, n_s)
        )
        n_lamps = int(rng.poisson(profile.lamp_events_per_day * duration_days))
        for _ in range(n_lamps):
            i0 = int(rng.uniform(0, n_s))
            dur = int(rng.uniform(*profile.lamp_duration_min) * 60)
            light[i0:i0 + dur] += profile.lamp_lux
        chans[Channel.LIGHT] = light

        rng = np.random.default_rng(stream_seeds[ni * 5 + 1])
        wander = np.interp(
            np.arange(n_s),
            np.arange(n_days + 1) * 86400.0,
            rng.normal(0.0, profile.temp_day_wander_c, n_days + 1),
        )
        period = profile.temp_hvac_period_min * 60.0
        saw = ((t_1hz - start) % period) / period - 0.5
        temp = (
            profile.temp_base_c
            + wander
            + profile.temp_diurnal_c * np.cos(2 * np.pi * (hours - profile.temp_peak_hour) / 24.0)
            + profile.temp_hvac_c * saw
            + _smooth_noise(n_s, 600, 0.3, rng)
            + rng.normal(0.0, profile.temp_noise_c, n_s)
        )
        chans[Channel.TEMPERATURE] = temp

        rng = np.random.default_rng(stream_seeds[ni * 5 + 2])
        humidity = (
            profile.humidity_base
            + profile.humidity_per_deg * (temp - profile.temp_base_c)
            + _smooth_noise(n_s, 900, 1.0, rng)
            + rng.normal(0.0, profile.humidity_noise, n_s)
        )
        chans[Channel.HUMIDITY] = humidity

        rng = np.random.default_rng(stream_seeds[ni * 5 + 3])
        m = n_s // 60 + 2
        coarse = np.empty(m)
        state = profile.pressure_base_pa + float(rng.normal(0.0, 10.0))
        steps = rng.normal(0.0, profile.pressure_step_pa, m)
        r = profile.pressure_reversion_per_min
        for k in range(m):
            coarse[k] = state
            state += r * (profile.pressure_base_pa - state) + steps[k]
        pressure = np.interp(np.arange(n_s), np.arange(m) * 60.0, coarse)
        pressure += rng.normal(0.0, profile.pressure_noise_pa, n_s)
        chans[Channel.PRESSURE] = pressure

        rng = np.random.default_rng(stream_seeds[ni * 5 + 4])
        n8 = n_s * 8
        bump = rng.uniform(*profile.acoustic_bump_range, n_days)
        acoustic = np.repeat(
            profile.acoustic_floor_db
            + profile.acoustic_day_bump_db * bump[day_index] * day_curve,
            8,
        )
        acoustic += rng.normal(0.0, profile.acoustic_noise_db, n8)
        n_bursts = int(rng.poisson(profile.bursts_per_hour * duration_days * 24.0))
        for _ in range(n_bursts):
            i0 = int(rng.uniform(0, n8))
            dur = int(rng.uniform(*profile.burst_duration_s) * 8)
            level = float(rng.uniform(*profile.burst_db))
            _paint_burst(acoustic, i0, i0 + dur, level, rng)
        acoustic_8hz[node] = acoustic

        nodes_1hz[node] = chans

    # Labels and planted precursors.  One event-stream child per rule plus
    # one for the distractor processes.
    event_seeds = ss_events.spawn(len(rules) + 1)
    labels: list[AgitationLabel] = []
    ground_truth: list[GroundTruth] = []
    for rule, child in zip(rules, event_seeds):
        rng = np.random.default_rng(child)
        for t in _place_times(rule, span, tz_offset_min, rng, geometry):
            node = track.node_at(t)
            severity = int(rng.integers(1, 6))
            behavior = BEHAVIORS[int(rng.integers(len(BEHAVIORS)))]
            fires = bool(rng.random() < rule.firing_probability)

            channel_name = "none"
            p0 = p1 = None
            if rule.kind == "noise_spike":
                lag = rng.uniform(*rule.lag_min) * 60.0
                dur = rng.uniform(*rule.noise_duration_min) * 60.0
                p0, p1 = t - lag, t - lag + dur
                level = float(rng.uniform(*rule.noise_db))
                i0 = int(round((p0 - start) * 8))
                _paint_burst(acoustic_8hz[node], i0, i0 + int(round(dur * 8)), level, rng)
                channel_name = Channel.ACOUSTIC.key
            elif rule.kind == "light_ramp":
                lag = rng.uniform(*rule.lag_min) * 60.0
                dur = rng.uniform(*rule.light_duration_min) * 60.0
                p0, p1 = t - lag, t - lag + dur
                amp = float(rng.uniform(*rule.light_lux))
                i0 = int(round(p0 - start))
                _paint_ramp(nodes_1hz[node][Channel.LIGHT], i0, i0 + int(round(dur)), amp)
                channel_name = Channel.LIGHT.key
            elif rule.kind == "sundowning":
                channel_name = "time_of_day"

            if fires:
                labels.append(AgitationLabel(t, severity, behavior, node))
                ground_truth.append(
                    GroundTruth(t, rule.kind, channel_name, node, p0, p1)
                )

    rng = np.random.default_rng(event_seeds[-1])
    n_loud = int(round(profile.distractor_loud_per_day * duration_days))
    for _ in range(n_loud):
        t = float(rng.uniform(start, end))
        node = track.node_at(t)
        dur = rng.uniform(*profile.distractor_loud_min) * 60.0
        level = float(rng.uniform(*profile.distractor_loud_db))
        i0 = int(round((t - start) * 8))
        _paint_burst(acoustic_8hz[node], i0, i0 + int(round(dur * 8)), level, rng)
    n_bright = int(round(profile.distractor_bright_per_day * duration_days))
    for _ in range(n_bright):
        t = float(rng.uniform(start, end))
        node = track.node_at(t)
        dur = rng.uniform(*profile.distractor_bright_min) * 60.0
        amp = float(rng.uniform(*profile.distractor_bright_lux))
        i0 = int(round(t - start))
        _paint_ramp(nodes_1hz[node][Channel.LIGHT], i0, i0 + int(round(dur)), amp)

    # Physical plausibility clamps.
    for node in node_names:
        np.clip(nodes_1hz[node][Channel.LIGHT], 0.0, None, out=nodes_1hz[node][Channel.LIGHT])
        np.clip(
            nodes_1hz[node][Channel.HUMIDITY], 5.0, 95.0, out=nodes_1hz[node][Channel.HUMIDITY]
        )
        np.clip(acoustic_8hz[node], 30.0, 100.0, out=acoustic_8hz[node])

    labels.sort(key=lambda lab: lab.time)
    ground_truth.sort(key=lambda gt: gt.label_time)
    return _Synthesis(span, nodes_1hz, acoustic_8hz, track, labels, ground_truth)


# ---------------------------------------------------------------------------
# Public entry points

def simulate_deployment(
    profile: DiurnalProfile,
    rules: list[TriggerRule],
    duration_days: float,
    n_nodes: int = 1,
    seed: int = 0,
    dep_id: str = "synth",
    tz_offset_min: int = 0,
) -> tuple[Deployment, list[GroundTruth]]:
    """Generate a deployment directly in memory (already on the 1 Hz grid).

    Equivalent to :func:`generate_deployment` followed by ingestion, without
    touching disk; the per-second acoustic values are the same maxima the
    resampler would compute.
    """
    syn = _synthesize(profile, rules, duration_days, n_nodes, seed, tz_offset_min)
    start, end = syn.span
    n_s = int(end - start)
    nodes: dict[str, dict[Channel, ChannelSeries]] = {}
    no_missing = np.zeros(n_s, dtype=bool)
    for node, chans in syn.nodes_1hz.items():
        per_channel = {
            channel: ChannelSeries(channel, start, values, no_missing.copy())
            for channel, values in chans.items()
        }
        acoustic_1hz = syn.acoustic_8hz[node].reshape(n_s, 8).max(axis=1)
        per_channel[Channel.ACOUSTIC] = ChannelSeries(
            Channel.ACOUSTIC, start, acoustic_1hz, no_missing.copy()
        )
        nodes[node] = per_channel
    dep = Deployment(
        id=dep_id,
        span=syn.span,
        nodes=nodes,
        labels=syn.labels,
        track=syn.track,
        tz_offset_min=tz_offset_min,
    )
    return dep, syn.ground_truth


def generate_deployment(
    profile: DiurnalProfile,
    rules: list[TriggerRule],
    duration_days: float,
    n_nodes: int,
    seed: int,
    out_dir: str | Path,
    dep_id: str = "synth",
    tz_offset_min: int = 0,
) -> dict[str, Path]:
    """Write a generated deployment as native-rate CSVs plus manifest.

    Acoustic rows are written at 8 Hz, the other channels at 1 Hz; the
    manifest matches the ingestion schema and a `ground_truth.json` records
    every planted label.  Byte-identical for a given seed.
    """
    syn = _synthesize(profile, rules, duration_days, n_nodes, seed, tz_offset_min)
    start, end = syn.span
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    sensor_path = out_dir / "sensors.csv"
    with sensor_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SENSOR_HEADER)
        n_s = int(end - start)
        for node in sorted(syn.nodes_1hz):
            for channel in CHANNEL_ORDER:
                if channel is Channel.ACOUSTIC:
                    values = syn.acoustic_8hz[node]
                    times = start + np.arange(n_s * 8) / 8.0
                else:
                    values = syn.nodes_1hz[node][channel]
                    times = start + np.arange(n_s, dtype=float)
                key = channel.key
                w.writerows(
                    (repr(float(t)), node, key, repr(float(v)))
                    for t, v in zip(times, values)
                )

    labels_path = out_dir / "labels.csv"
    with labels_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABELS_HEADER)
        for lab in syn.labels:
            w.writerow([repr(lab.time), lab.severity, lab.behavior, lab.node_id])

    track_path = out_dir / "track.csv"
    with track_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_HEADER)
        for t, nid in syn.track.breakpoints:
            w.writerow([repr(float(t)), nid])

    manifest_path = out_dir / "manifest.json"
    manifest = {
        "id": dep_id,
        "span": [start, end],
        "tz_offset_min": tz_offset_min,
        "sensor_csv": sensor_path.name,
        "labels_csv": labels_path.name,
        "track_csv": track_path.name,
    }
    with manifest_path.open("w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    truth_path = out_dir / "ground_truth.json"
    truth = {
        "deployment_id": dep_id,
        "seed": seed,
        "duration_days": duration_days,
        "n_nodes": n_nodes,
        "tz_offset_min": tz_offset_min,
        "rules": [asdict(r) for r in rules],
        "profile": asdict(profile),
        "events": [gt.to_dict() for gt in syn.ground_truth],
    }
    with truth_path.open("w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return {
        "manifest": manifest_path,
        "sensors": sensor_path,
        "labels": labels_path,
        "track": track_path,
        "ground_truth": truth_path,
    }


def plant_rate_check(
    dep: Deployment, target_per_week: float = 5.0, tolerance: float = 0.2
) -> dict:
    """Compare the achieved label rate against a weekly target band."""
    start, end = dep.span
    weeks = (end - start) / (7 * 86400.0)
    n = len(dep.labels)
    expected = target_per_week * weeks
    lo = math.floor((1.0 - tolerance) * expected)
    hi = math.ceil((1.0 + tolerance) * expected)
    report = {
        "n_labels": n,
        "weeks": weeks,
        "rate_per_week": n / weeks if weeks > 0 else 0.0,
        "target_per_week": target_per_week,
        "accepted_range": [lo, hi],
        "within_band": bool(lo <= n <= hi),
    }
    if n == 0:
        report["note"] = "no labels were placed"
    return report
