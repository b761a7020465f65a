"""Near-field localization with dynamic metasurface receive panels.

Library layers, bottom to top: panel geometry, spherical-wave channel with
analytic derivatives, Lorentzian codebooks, Fisher-information bounds,
discrete beamformer optimization, pilot/MLE simulation, and the experiment
harness behind the ``dmaloc`` CLI.
"""

__version__ = "0.1.0"

from .beamopt import (
    BeamformerSolution,
    ObjectiveMatrix,
    codebook_distance,
    design_beamformer,
    dense_objective,
    lorentzian_lift,
    objective_matrix,
    rayleigh_opt,
    solve_exhaustive,
    solve_greedy,
    solve_projection,
    solve_random,
    solve_snr_max,
)
from .channel import (
    NearFieldChannel,
    PropagationMatrix,
    RadioConfig,
    attenuation,
    channel_derivatives,
    channel_matrix,
    channel_vector,
    dbm_to_mw,
    mw_to_dbm,
    propagation_matrix,
    radiation_profile,
    thermal_noise_dbm,
)
from .codebook import (
    AnalogBeamformer,
    LorentzianWeight,
    VectorCodebook,
    build_codebook,
    compensated_weight,
    default_focal_grid,
    dft_codebook,
    lorentzian,
    quantized_phase_set,
)
from .config import ScenarioConfig, build_scenario, load_config_tree, load_scenario
from .exceptions import (
    ConfigError,
    DegenerateGeometryError,
    DmalocError,
    InfeasibleSearchError,
    SingularCovarianceError,
    UnidentifiableConfigurationError,
)
from .fim import FimResult, PilotBlock, cartesian_peb, fim_matrix, noise_covariance, peb, trace_bound
from .geometry import (
    DmaGeometry,
    ElementIndex,
    UePosition,
    element_position,
    element_positions,
    spherical_to_cartesian,
    ue_element_distance,
    ue_element_distances,
    ue_element_elevation,
    ue_element_elevations,
)
from .harness import ExperimentResult, emit, run_fig2, run_fig3, run_fig4
from .simloc import (
    EstimationGrid,
    ErrorMapResult,
    LocalizationResult,
    ReceivedBlock,
    cartesian_error,
    cell_signatures,
    error_map,
    mle_estimate,
    rmse,
    synthesize_rx,
)
