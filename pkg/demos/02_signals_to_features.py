"""
From raw streams to the 315-feature observation
===============================================

The modelling unit is an *observation*: nine 6-minute windows covering
[anchor - 66 min, anchor - 12 min) of the closest node's five channels.
The 12 minutes right before the anchor are excluded so the features never
see the reported episode itself.

Per window and channel we keep seven statistics — mean, median, max,
population variance, mean and max absolute first difference, and the
window-start time of day — giving 9 x 5 x 7 = 315 features in a fixed,
name-addressable layout.
"""

import numpy as np

from agisense import (
    DEFAULT_GEOMETRY,
    DiurnalProfile,
    TriggerRule,
    extract_observation,
    feature_name,
    preprocess_deployment,
    sample_negatives,
    simulate_deployment,
    to_feature_vector,
    to_sequence,
)

# ---------------------------------------------------------------------------
# A two-day deployment with a noise trigger gives us labels to anchor on.
dep, _ = simulate_deployment(
    DiurnalProfile(),
    [TriggerRule("noise_spike", rate_per_week=21.0, min_separation_min=45.0)],
    duration_days=2,
    seed=7,
)
print(f"{len(dep.labels)} labels in a 2-day deployment")

# ---------------------------------------------------------------------------
# Preprocessing: a centered median filter scrubs sub-minute spikes, then each
# (node, channel) stream is rescaled to [0, 100] by its own observed range.
prepared, norm_stats = preprocess_deployment(dep)
node = dep.node_ids[0]
for channel, series in prepared.nodes[node].items():
    lo, hi = norm_stats.range_for(node, channel)
    print(f"  {channel.key:12s} raw range [{lo:9.1f}, {hi:9.1f}] "
          f"-> normalized [{np.nanmin(series.values):5.1f}, "
          f"{np.nanmax(series.values):6.1f}]")

# ---------------------------------------------------------------------------
# Window geometry: nine back-to-back windows ending 12 minutes before the
# anchor.  The tiling has no gaps and no overlap.
anchor = dep.labels[-1].time
starts = DEFAULT_GEOMETRY.window_starts(anchor)
print(f"\nanchor t={anchor:.0f}s; window starts (minutes before anchor): "
      f"{[float((anchor - s) / 60) for s in starts]}")

obs = extract_observation(prepared, anchor, label=1)
print(f"observation windows tensor: {obs.windows.shape}  (window, channel, second)")

# ---------------------------------------------------------------------------
# The same observation can be read two ways: a (9, 35) sequence for the
# recurrent model, or a flat 315-vector for the tree ensemble.
sequence = to_sequence(obs)
vector = to_feature_vector(obs)
print(f"sequence {sequence.shape} flattens to vector {vector.shape}")

# Feature indices decode to human-readable names.
for idx in (0, 3, 34, 170, 314):
    print(f"  feature[{idx:3d}] = {feature_name(idx):28s} value={vector[idx]:8.3f}")

# ---------------------------------------------------------------------------
# Negatives are drawn from label-free stretches (a 2-hour exclusion zone
# around every label), three per positive by default.
positives = [
    extract_observation(prepared, lab.time, label=1)
    for lab in dep.labels
    if lab.time - 66 * 60 >= dep.span[0]
]
negatives = sample_negatives(prepared, positives, rng_seed=1)
print(f"\n{len(positives)} positives -> {len(negatives)} sampled negatives (1:3)")
