"""Tests for the synthetic fleet generator."""

import os

import numpy as np
import pytest


def test_first_cycle_capacity_is_q0():
    from synth.generator import SynthSpec, synth_battery

    history = synth_battery(SynthSpec(q0=1.05, cycles=5, seed=1))
    assert history.cycles[0].discharge_capacity == 1.05


def test_capacity_strictly_decreasing():
    from synth.generator import SynthSpec, capacity_curve

    q = capacity_curve(SynthSpec(fade_rate=0.001, knee_coeff=1e-6, cycles=200))
    assert np.all(np.diff(q) < 0)


def test_noiseless_no_growth_curves_are_identical():
    from synth.generator import SynthSpec, synth_battery

    history = synth_battery(SynthSpec(noise=0.0, resistance_growth=0.0, cycles=6))
    first = history.cycles[0]
    for cycle in history.cycles[1:]:
        assert np.array_equal(cycle.charge_curve, first.charge_curve)
        assert np.array_equal(cycle.discharge_curve, first.discharge_curve)


def test_charge_above_discharge_at_matched_state_of_charge():
    """Charge runs empty to full, discharge full to empty; reversing one aligns the state of charge."""
    from synth.generator import SynthSpec, synth_battery

    history = synth_battery(SynthSpec(noise=0.0, cycles=4))
    for cycle in history.cycles:
        assert np.all(cycle.charge_curve[:, 1] > cycle.discharge_curve[::-1, 1])


def test_resistance_growth_lowers_later_discharge_curves():
    from synth.generator import SynthSpec, synth_battery

    history = synth_battery(SynthSpec(noise=0.0, resistance_growth=0.01, cycles=10))
    for earlier, later in zip(history.cycles, history.cycles[1:]):
        assert np.all(later.discharge_curve[:, 1] <= earlier.discharge_curve[:, 1])


def test_generation_is_deterministic_by_seed():
    from synth.generator import SynthSpec, synth_battery

    a = synth_battery(SynthSpec(seed=11, cycles=3))
    b = synth_battery(SynthSpec(seed=11, cycles=3))
    c = synth_battery(SynthSpec(seed=12, cycles=3))
    assert np.array_equal(a.cycles[2].charge_curve, b.cycles[2].charge_curve)
    assert not np.array_equal(a.cycles[2].charge_curve, c.cycles[2].charge_curve)


def test_invalid_specs_rejected():
    from ddn.guardrails import ConfigError
    from synth.generator import SynthSpec

    with pytest.raises(ConfigError):
        SynthSpec(v_full=2.0, v_empty=3.0)
    with pytest.raises(ConfigError):
        SynthSpec(fade_rate=0.02, cycles=80)
    with pytest.raises(ConfigError):
        SynthSpec(r0=0.0)
    with pytest.raises(ConfigError):
        SynthSpec(fade_change_cycle=10)


def test_path_dependent_fade_switches_rate():
    from synth.generator import SynthSpec, capacity_curve

    spec = SynthSpec(fade_rate=0.001, knee_coeff=0.0, fade_change_cycle=5, late_fade_rate=0.003, cycles=10)
    steps = -np.diff(capacity_curve(spec)) / spec.q0
    assert np.allclose(steps[:5], 0.001)
    assert np.allclose(steps[5:], 0.003)


def test_single_battery_fleet_matches_sampled_spec():
    from synth.generator import SpecSampler, sample_specs, synth_battery, synth_fleet

    sampler = SpecSampler(cycles=6, samples=9)
    fleet, specs = synth_fleet(1, sampler, seed=5)
    assert specs == sample_specs(1, sampler, seed=5)
    direct = synth_battery(specs[0], "synth_000")
    assert fleet[0].battery_id == "synth_000"
    assert np.array_equal(fleet[0].cycles[3].discharge_curve, direct.cycles[3].discharge_curve)


def test_fleet_reproducible_and_end_capacity_follows_specs():
    from synth.generator import SpecSampler, capacity_curve, synth_fleet

    sampler = SpecSampler(cycles=20, samples=6)
    fleet, specs = synth_fleet(6, sampler, seed=9)
    again, _ = synth_fleet(6, sampler, seed=9)
    assert [b.capacities.tolist() for b in fleet] == [b.capacities.tolist() for b in again]
    ends = [b.capacities[-1] for b in fleet]
    assert ends == [capacity_curve(s)[-1] for s in specs]
    assert len(set(ends)) == 6


def test_default_fleet_ends_near_eighty_percent():
    from synth.generator import SpecSampler, capacity_curve, sample_specs

    specs = sample_specs(20, SpecSampler(), seed=7)
    ratios = np.array([capacity_curve(s)[-1] / s.q0 for s in specs])
    assert np.all(ratios > 0.7) and np.all(ratios < 0.9)


def test_default_fleet_voltages_stay_in_mit_band():
    """Normalized curves of the default fleet stay within [0, 1.05] under the mit profile."""
    from pipeline.profiles import count_out_of_band, normalize_voltage
    from synth.generator import SpecSampler, synth_fleet

    fleet, _ = synth_fleet(3, SpecSampler(cycles=10), seed=7)
    for history in fleet:
        for cycle in history.cycles:
            assert count_out_of_band(normalize_voltage("mit", cycle.charge_curve[:, 1], "charge")) == 0
            assert count_out_of_band(normalize_voltage("mit", cycle.discharge_curve[:, 1], "discharge")) == 0


def test_fleet_size_must_be_positive():
    from ddn.guardrails import ConfigError
    from synth.generator import synth_fleet

    with pytest.raises(ConfigError):
        synth_fleet(0)


def test_write_fleet_refuses_overwrite(tmp_path):
    import json

    from ddn.guardrails import ConfigError
    from synth.generator import SpecSampler, synth_fleet, write_fleet

    fleet, specs = synth_fleet(2, SpecSampler(cycles=3, samples=4), seed=1)
    written = write_fleet(fleet, specs, str(tmp_path))
    assert sorted(os.path.basename(p) for p in written) == ["manifest.json", "synth_000.csv", "synth_001.csv"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["batteries"]["synth_001"]["spec"]["seed"] == specs[1].seed
    with pytest.raises(ConfigError, match="--force"):
        write_fleet(fleet, specs, str(tmp_path))
    write_fleet(fleet, specs, str(tmp_path), force=True)
