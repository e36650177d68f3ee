"""Desk-scale simulator and protocol library for frequency-agile,
duty-cycled, multi-hop LoRa mesh networks."""

__version__ = "0.1.0"

from .phy import RadioConfig, ChannelPlan, data_rate, airtime, sensitivity
from .scenario import ScenarioSpec, load_scenario, scenario_from_dict
from .engine import Simulator

__all__ = ["RadioConfig", "ChannelPlan", "data_rate", "airtime", "sensitivity",
           "ScenarioSpec", "load_scenario", "scenario_from_dict", "Simulator",
           "__version__"]
