"""Mean-variance investment and risk control for an insurer in a jump-diffusion market."""

from .model import (
    ConfigError,
    DegenerateModel,
    DerivedCoefficients,
    DomainError,
    JumpDistribution,
    MarketParams,
    Preference,
    Scenario,
    BASE_PARAMS,
    BASE_JUMP,
    derive,
    jump_moments,
    load_scenario,
    parse_scenario,
    validate,
)
from .closed_form import StrategyKind, StrategySpec
from .simulate import SimulationConfig, simulate_wealth

__version__ = "0.1.0"
