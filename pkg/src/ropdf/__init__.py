"""Data-driven reduced-order PDF equations for line energies in stochastic power networks."""

from .case_model import (EquilibriumPoint, LineId, PowerCase, builtin_cases, is_connected, line_rating,
                         load_case, parse_case_bundle, remove_line, write_case_bundle)
from .closure import (ClosureModel, coefficient_field, fit_closure, fit_global_linear, fit_local_linear,
                      fit_lowess_2d)
from .fv import DensityField, Grid1D, Grid2D, build_grid, cfl_dt, solve_ropdf, step_1d, step_2d
from .metrics import (ExceedanceEvent, ecdf_exceedance, independence_joint, joint_exceedance, kde,
                      l1_error, mutual_information, sample_complexity, tail_probability)
from .pipeline import (ConfigError, ExperimentConfig, StageError, default_config, emit_plotdata,
                       load_config, quick, run_complexity, run_joint, run_marginal)
from .qoi import LineQoi, ito_coefficients, line_energy, line_energy_drift, qoi_derivatives
from .stochastic_sim import (EnsembleState, NoiseModel, ScenarioConfig, TrajectoryRecord, build_noise,
                             run_scenario, sample_initial, step)

__version__ = "0.1.0"
