"""Shared scenario builders for integration tests.

The steep-exponent channel (pl0 45 dB at 10 m, n = 5.5) gives adjacent
450 m links a +12 dB margin while two-hop links sit below the floor, so
chains stay chains.
"""

import pytest

from loramesh.scenario import ScenarioSpec, scenario_from_dict

LINE_CHANNEL = {
    "path_loss": {"pl0_db": 45, "d0_m": 10, "exponent": 5.5,
                  "shadowing_sigma_db": 0},
    "fading": {"enabled": False},
}

INTERFERER_903_75 = {
    "kind": "narrowband_fixed", "band_mhz": [903.65, 903.85],
    "power_dbm": -95, "on_fraction": 0.85, "mean_burst_s": 4.0,
}


def build_scenario(**overrides) -> ScenarioSpec:
    raw = {
        "name": "test", "seed": 1, "duration_s": 600,
        "plan": {"num_channels": 10, "discovery_index": 0,
                 "initial_data_index": 3},
        "channel": dict(LINE_CHANNEL),
        "traffic": {"decision_period_s": 0, "spl_period_s": 0,
                    "status_period_s": 0},
    }
    raw.update(overrides)
    return scenario_from_dict(raw)


def two_node_spec(**overrides) -> ScenarioSpec:
    base = {
        "nodes": [{"id": 1, "pos": [0, 0], "role": "base"},
                  {"id": 2, "pos": [450, 0]}],
        "mac": {"beacon_period_s": 15},
    }
    base.update(overrides)
    return build_scenario(**base)


def line_spec(n_nodes=8, spacing=450.0, **overrides) -> ScenarioSpec:
    nodes = [{"id": 1, "pos": [0, 0], "role": "base"}]
    nodes += [{"id": i + 1, "pos": [spacing * i, 0]}
              for i in range(1, n_nodes)]
    base = {"nodes": nodes, "mac": {"beacon_period_s": 15}}
    base.update(overrides)
    return build_scenario(**base)


def diamond_spec(**overrides) -> ScenarioSpec:
    # 1 (base) -- {2, 3} -- 4: node 4 can route through either arm
    nodes = [{"id": 1, "pos": [0, 0], "role": "base"},
             {"id": 2, "pos": [420, 120]},
             {"id": 3, "pos": [420, -120]},
             {"id": 4, "pos": [840, 0]}]
    base = {"nodes": nodes, "mac": {"beacon_period_s": 10}}
    base.update(overrides)
    return build_scenario(**base)
