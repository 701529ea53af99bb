from .controllers import (IdmParams, PidGains, PidState, SlidingModeParams, idm_acceleration,
                          pid_lateral, sliding_mode_longitudinal)
from .gaps import GapAssignment, identify_gaps
from .observation import FEATURE_SCALE, OBS_DIM, build_observation, scale_observations
from .world import (ACTION_TABLE, N_ACTIONS, Phase, SimulationError, StepOutcome, TrafficConfig,
                    VehicleState, WorldState, detect_events, reset, step, step_inplace)

__all__ = [
    "ACTION_TABLE", "FEATURE_SCALE", "GapAssignment", "IdmParams", "N_ACTIONS", "OBS_DIM",
    "Phase", "PidGains", "PidState", "SimulationError", "SlidingModeParams", "StepOutcome",
    "TrafficConfig", "VehicleState", "WorldState", "build_observation", "detect_events",
    "identify_gaps", "idm_acceleration", "pid_lateral", "reset", "scale_observations",
    "sliding_mode_longitudinal", "step", "step_inplace",
]
