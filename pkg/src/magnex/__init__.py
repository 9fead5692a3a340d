"""Finite-difference micromagnetics with FFT/NN demagnetization backends."""

from .demag import DemagKernel, demag_field_direct, demag_field_fft
from .expr import Expr, ExprError, ExprEvalError, parse_expr
from .fields import (EnergyBreakdown, anisotropy_field, dmi_field, energy_breakdown,
                     exchange_field)
from .grid import (GAMMA, MU0, GridError, GridSpec, MaterialMap, RenormalizeError,
                   VectorField3, ghost_fill, mean_normalized, renormalize)
from .io import MagfError, read_magf, read_magf_field, write_magf
from .llg import (IntegrationBlowup, IntegratorSpec, PartitionedRHS, SimState,
                  Simulation, StopCondition, Trajectory, llg_rhs)
from .scenario import (ConfigError, ConfigWarning, ScenarioConfig, load_config,
                       loads)

__version__ = "0.1.0"

__all__ = [
    "DemagKernel", "demag_field_direct", "demag_field_fft",
    "Expr", "ExprError", "ExprEvalError", "parse_expr",
    "EnergyBreakdown", "anisotropy_field", "dmi_field", "energy_breakdown",
    "exchange_field",
    "GAMMA", "MU0", "GridError", "GridSpec", "MaterialMap", "RenormalizeError",
    "VectorField3", "ghost_fill", "mean_normalized", "renormalize",
    "MagfError", "read_magf", "read_magf_field", "write_magf",
    "IntegrationBlowup", "IntegratorSpec", "PartitionedRHS", "SimState",
    "Simulation", "StopCondition", "Trajectory", "llg_rhs",
    "ConfigError", "ConfigWarning", "ScenarioConfig", "load_config", "loads",
    "__version__",
]
