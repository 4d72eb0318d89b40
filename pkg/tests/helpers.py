"""Hand-built fixtures shared across the test modules.

Everything here is constructed directly from the data-model types so unit
tests do not depend on the synthetic generator.
"""

from __future__ import annotations

import numpy as np

from agisense import (
    AgitationLabel,
    Channel,
    ChannelSeries,
    Deployment,
    LocationTrack,
)

CHANNELS = list(Channel)


def make_series(channel: Channel, start: float, values, missing=None) -> ChannelSeries:
    values = np.asarray(values, dtype=float)
    if missing is None:
        missing = np.zeros(len(values), dtype=bool)
    return ChannelSeries(
        channel=channel, start_time=start, values=values, missing=np.asarray(missing, bool)
    )


def channel_pattern(channel: Channel, n: int) -> np.ndarray:
    """A deterministic, channel-specific test pattern (no randomness)."""
    t = np.arange(n, dtype=float)
    base = {
        Channel.LIGHT: 200.0 + 50.0 * np.sin(2 * np.pi * t / 900.0),
        Channel.TEMPERATURE: 21.0 + 0.001 * t,
        Channel.HUMIDITY: 45.0 - 0.0005 * t,
        Channel.PRESSURE: 101325.0 + np.cos(2 * np.pi * t / 1200.0),
        Channel.ACOUSTIC: 40.0 + (t % 17.0),
    }
    return base[channel]


def build_deployment(
    dep_id: str = "toy",
    start: float = 0.0,
    n_seconds: int = 4 * 3600,
    node_ids: tuple[str, ...] = ("room_a",),
    labels: list[AgitationLabel] | None = None,
    track: LocationTrack | None = None,
    tz_offset_min: int = 0,
) -> Deployment:
    nodes = {
        nid: {ch: make_series(ch, start, channel_pattern(ch, n_seconds)) for ch in CHANNELS}
        for nid in node_ids
    }
    if track is None:
        track = LocationTrack([(start, node_ids[0])])
    return Deployment(
        id=dep_id,
        span=(start, start + n_seconds),
        nodes=nodes,
        labels=labels or [],
        track=track,
        tz_offset_min=tz_offset_min,
    )
