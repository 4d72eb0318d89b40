"""Synthetic deployment generator: determinism, trigger placement, rates."""

import filecmp
import json

import numpy as np
import pytest

from agisense import (
    DiurnalProfile,
    TriggerRule,
    generate_deployment,
    load_deployment,
    plant_rate_check,
    simulate_deployment,
)
from agisense.data_model import Channel

PROFILE = DiurnalProfile()
MIN = 60.0


def test_same_seed_byte_identical_files(tmp_path):
    rules = [TriggerRule("noise_spike", rate_per_week=5.0)]
    a = generate_deployment(PROFILE, rules, 2, 1, seed=4, out_dir=tmp_path / "a")
    b = generate_deployment(PROFILE, rules, 2, 1, seed=4, out_dir=tmp_path / "b")
    for key in a:
        assert filecmp.cmp(a[key], b[key], shallow=False), key
    c = generate_deployment(PROFILE, rules, 2, 1, seed=5, out_dir=tmp_path / "c")
    assert not filecmp.cmp(a["sensors"], c["sensors"], shallow=False)


def test_simulate_is_deterministic_per_seed():
    rule = TriggerRule("noise_spike", rate_per_week=10.0)
    d1, g1 = simulate_deployment(PROFILE, [rule], 2, seed=3)
    d2, g2 = simulate_deployment(PROFILE, [rule], 2, seed=3)
    assert [lab.time for lab in d1.labels] == [lab.time for lab in d2.labels]
    assert g1 == g2
    for chan in Channel:
        assert np.array_equal(
            d1.nodes["n1"][chan].values, d2.nodes["n1"][chan].values
        )


def test_adding_nodes_keeps_existing_streams():
    # Stream seeds are spawned per (node, channel), so a bigger house does
    # not reshuffle the rooms that were already there.
    one, _ = simulate_deployment(PROFILE, [], 2, n_nodes=1, seed=9)
    two, _ = simulate_deployment(PROFILE, [], 2, n_nodes=2, seed=9)
    for chan in (Channel.LIGHT, Channel.TEMPERATURE, Channel.HUMIDITY, Channel.PRESSURE):
        assert np.array_equal(one.nodes["n1"][chan].values, two.nodes["n1"][chan].values)


def test_duration_and_node_count_validated():
    with pytest.raises(ValueError, match="2 days"):
        simulate_deployment(PROFILE, [], 1.5, seed=0)
    with pytest.raises(ValueError, match="node"):
        simulate_deployment(PROFILE, [], 3, n_nodes=0, seed=0)


def test_no_rules_places_no_labels():
    dep, truth = simulate_deployment(PROFILE, [], 2, seed=1)
    assert dep.labels == []
    assert truth == []


def test_rule_that_cannot_fire_warns_and_places_nothing(caplog):
    rule = TriggerRule("noise_spike", rate_per_week=0.5)  # rounds to 0 in 2 days
    with caplog.at_level("WARNING", logger="agisense.synth"):
        dep, truth = simulate_deployment(PROFILE, [rule], 2, seed=1)
    assert dep.labels == [] and truth == []
    assert any("cannot fire" in rec.message for rec in caplog.records)


def test_separation_shortfall_warns(caplog):
    rule = TriggerRule("noise_spike", rate_per_week=14.0, min_separation_min=1440.0)
    with caplog.at_level("WARNING", logger="agisense.synth"):
        dep, _ = simulate_deployment(PROFILE, [rule], 2, seed=2)
    assert 0 < len(dep.labels) < 4
    assert any("placed only" in rec.message for rec in caplog.records)


def test_zero_firing_probability_keeps_streams_but_drops_labels():
    # The precursor process still runs (same draws), only the label is
    # withheld — so the unlabeled streams match the labeled run exactly.
    silent = TriggerRule("noise_spike", rate_per_week=10.0, firing_probability=0.0)
    loud = TriggerRule("noise_spike", rate_per_week=10.0, firing_probability=1.0)
    d0, g0 = simulate_deployment(PROFILE, [silent], 3, seed=5)
    d1, g1 = simulate_deployment(PROFILE, [loud], 3, seed=5)
    assert d0.labels == [] and g0 == []
    assert len(d1.labels) > 0
    assert np.array_equal(
        d0.nodes["n1"][Channel.ACOUSTIC].values, d1.nodes["n1"][Channel.ACOUSTIC].values
    )


def test_noise_spike_precursors_land_in_the_lag_window():
    rule = TriggerRule("noise_spike", rate_per_week=5.0)
    dep, truth = simulate_deployment(PROFILE, [rule], 30, seed=7)
    assert len(truth) == 21
    for gt in truth:
        lag = gt.label_time - gt.precursor_start
        assert 20 * MIN <= lag <= 40 * MIN
        assert gt.kind == "noise_spike" and gt.channel == "acoustic"
        series = dep.nodes[gt.node_id][Channel.ACOUSTIC]
        i0 = int(gt.precursor_start - series.start_time)
        i1 = int(gt.precursor_end - series.start_time)
        assert series.values[i0:i1].max() >= 80.0  # planted burst is audible


def test_precursors_sit_inside_the_feature_span():
    rule = TriggerRule("noise_spike", rate_per_week=5.0)
    _, truth = simulate_deployment(PROFILE, [rule], 30, seed=7)
    inside = [
        gt.label_time - 66 * MIN <= gt.precursor_start
        and gt.precursor_end <= gt.label_time - 12 * MIN
        for gt in truth
    ]
    assert np.mean(inside) >= 0.90


def test_sundowning_labels_respect_the_local_evening_window():
    rule = TriggerRule("sundowning", rate_per_week=10.0, min_separation_min=45.0)
    dep, truth = simulate_deployment(PROFILE, [rule], 14, seed=11, tz_offset_min=-300)
    assert len(dep.labels) > 10
    for gt in truth:
        local_h = ((gt.label_time + -300 * 60) % 86400.0) / 3600.0
        assert 17.0 <= local_h < 20.0
        assert gt.channel == "time_of_day"
        assert gt.precursor_start is None


def test_min_separation_is_honored():
    rule = TriggerRule("noise_spike", rate_per_week=5.0)
    dep, _ = simulate_deployment(PROFILE, [rule], 30, seed=7)
    times = np.array([lab.time for lab in dep.labels])
    gaps = np.diff(np.sort(times))
    assert np.all(gaps >= 180.0 * MIN)


def test_every_label_has_one_ground_truth_record():
    rules = [
        TriggerRule("noise_spike", rate_per_week=4.0),
        TriggerRule("sundowning", rate_per_week=4.0, min_separation_min=45.0),
    ]
    dep, truth = simulate_deployment(PROFILE, rules, 14, seed=13)
    assert len(truth) == len(dep.labels)
    assert sorted(gt.label_time for gt in truth) == [lab.time for lab in dep.labels]


def test_streams_stay_physically_plausible():
    dep, _ = simulate_deployment(
        PROFILE, [TriggerRule("light_ramp", rate_per_week=10.0)], 7, seed=17
    )
    chans = dep.nodes["n1"]
    assert chans[Channel.LIGHT].values.min() >= 0.0
    assert chans[Channel.ACOUSTIC].values.min() >= 30.0
    assert chans[Channel.ACOUSTIC].values.max() <= 100.0
    assert abs(chans[Channel.PRESSURE].values - 101_325.0).max() < 500.0
    assert 5.0 <= chans[Channel.HUMIDITY].values.min() <= chans[Channel.HUMIDITY].values.max() <= 95.0


def test_generated_files_round_trip_cleanly(tmp_path, caplog):
    rules = [TriggerRule("noise_spike", rate_per_week=10.0)]
    paths = generate_deployment(
        PROFILE, rules, 2, 2, seed=21, out_dir=tmp_path, dep_id="rt", tz_offset_min=120
    )
    with caplog.at_level("WARNING"):
        dep = load_deployment(paths["manifest"])
    assert [r for r in caplog.records if r.name.startswith("agisense")] == []

    # Ingesting the files reproduces the in-memory simulation bit for bit.
    sim, truth = simulate_deployment(
        PROFILE, rules, 2, 2, seed=21, dep_id="rt", tz_offset_min=120
    )
    assert dep.id == "rt" and dep.span == sim.span and dep.tz_offset_min == 120
    assert dep.labels == sim.labels
    assert dep.track.breakpoints == sim.track.breakpoints
    for node in ("n1", "n2"):
        for chan in Channel:
            assert np.array_equal(dep.nodes[node][chan].values, sim.nodes[node][chan].values)
            assert not dep.nodes[node][chan].missing.any()

    truth_doc = json.loads(paths["ground_truth"].read_text())
    assert truth_doc["seed"] == 21
    assert len(truth_doc["events"]) == len(truth)


def test_plant_rate_check_reports_the_band():
    dep, _ = simulate_deployment(
        PROFILE, [TriggerRule("noise_spike", rate_per_week=5.0)], 30, seed=7
    )
    report = plant_rate_check(dep, target_per_week=5.0)
    assert report["accepted_range"] == [17, 26]
    assert report["n_labels"] == 21
    assert report["within_band"] is True
    assert report["rate_per_week"] == pytest.approx(4.9)


def test_plant_rate_check_flags_zero_labels():
    dep, _ = simulate_deployment(PROFILE, [], 30, seed=7)
    report = plant_rate_check(dep, target_per_week=5.0)
    assert report["n_labels"] == 0
    assert report["within_band"] is False
    assert report["note"] == "no labels were placed"


def test_trigger_rule_validation():
    with pytest.raises(ValueError, match="unknown trigger kind"):
        TriggerRule("moon_phase")
    with pytest.raises(ValueError, match=">= 12"):
        TriggerRule("noise_spike", lag_min=(5.0, 40.0))
    with pytest.raises(ValueError, match="ordered"):
        TriggerRule("light_ramp", lag_min=(40.0, 20.0))
    with pytest.raises(ValueError, match="firing_probability"):
        TriggerRule("noise_spike", firing_probability=1.5)
    with pytest.raises(ValueError, match="rate_per_week"):
        TriggerRule("noise_spike", rate_per_week=-1.0)
    # no physical precursor, so no lag floor applies
    TriggerRule("sundowning", lag_min=(0.0, 0.0))


def test_profile_validation():
    with pytest.raises(ValueError, match="non-negative"):
        DiurnalProfile(light_day_peak_lux=-1.0)
    with pytest.raises(ValueError, match="30, 100"):
        DiurnalProfile(acoustic_floor_db=20.0)
