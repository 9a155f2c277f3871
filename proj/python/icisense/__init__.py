"""ICI-aware MIMO-OFDM radar detection (compiled core in ``_icisense``)."""

from ._icisense import *  # noqa: F401,F403
from ._icisense import (
    Scenario,
    five_target_scenario,
    generate_symbols,
    music,
    preset_params,
    symbol_seed,
    synthesize,
)

__version__ = "0.1.0"


def simulate(scenario: Scenario, ici: bool = True):
    """Symbols and received cube for a scenario, seeded like the CLI."""
    symbols = generate_symbols(scenario.params, symbol_seed(scenario.seed))
    return symbols, synthesize(scenario, symbols, ici)


def demo_scenario(preset: str = "desk", seed: int = 1) -> Scenario:
    s = five_target_scenario(preset_params(preset))
    s.seed = seed
    return s
