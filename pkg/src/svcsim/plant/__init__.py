"""Plant models: full electromagnetic microgrid, reduced surrogate, and
discrete linear oracles."""

from .full import FullMicrogridPlant
from .linear import LinearOraclePlant, bounded_phi
from .params import (Branch, DerParams, Load, NetworkParams, PllParams,
                     default_ders, default_network)
from .surrogate import OMEGA_N_DEFAULT, SurrogateParams, SurrogatePlant

__all__ = [
    "FullMicrogridPlant", "LinearOraclePlant", "bounded_phi",
    "SurrogatePlant", "SurrogateParams", "OMEGA_N_DEFAULT",
    "DerParams", "NetworkParams", "PllParams", "Branch", "Load",
    "default_ders", "default_network",
]
