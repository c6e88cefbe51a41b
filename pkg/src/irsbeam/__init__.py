"""Multi-IRS mmWave downlink simulator: channel synthesis, fractional-
programming beamforming with an embedded cone solver, exhaustive surface
selection, baselines and Monte Carlo experiment drivers."""

from .channel import (
    ChannelSet,
    PathLossParams,
    generate_channels,
    load_channels,
    sample_path_gain,
    save_channels,
    ula_response,
    upa_response,
)
from .cone_solver import (
    BallConstraint,
    ConeProblem,
    SocConstraint,
    SolveReport,
    SolverOptions,
    kkt_residual,
    solve,
)
from .fp_core import FpState, project_unit_modulus
from .optimizer import METHODS, OptimOptions, OptimResult, optimize, run_baseline
from .scenario import (
    Layout,
    ScenarioConfig,
    dbm_to_linear,
    drop_streams,
    load_config,
    place_users,
    preset_config,
    substream,
)
from .selection import SelectionResult, enumerate_best_assignment
from .system import BeamformingState, cascaded_channel, sinr, sum_rate

__version__ = "0.1.0"
