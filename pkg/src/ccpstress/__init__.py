"""Network-based stress test of a central counterparty's default fund."""
from .balance_sheet import (
    EquityObservation,
    MertonSolution,
    InterbankSplit,
    RegressionCoefficients,
    invert_merton,
)
from .contagion import BACKEND, ContagionParams, ContagionTrajectory, propagate
from .market import ClearingMember, MarketSnapshot
from .netrecon import ExposureNetwork, calibrate_z, sample_network
from .shocks import ShockConfig, ShockVector, cover2_shock, distributed_shock

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ClearingMember",
    "ContagionParams",
    "ContagionTrajectory",
    "EquityObservation",
    "ExposureNetwork",
    "InterbankSplit",
    "MarketSnapshot",
    "MertonSolution",
    "RegressionCoefficients",
    "ShockConfig",
    "ShockVector",
    "calibrate_z",
    "cover2_shock",
    "distributed_shock",
    "invert_merton",
    "propagate",
    "sample_network",
]
