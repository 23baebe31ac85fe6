from .rng import RNG_ALGORITHM, PathNoise, path_generator
from .simulate import (
    PathOutcome,
    PathTrace,
    ScalingStudy,
    SimGrid,
    SimResult,
    SweepRow,
    estimate_welfare,
    liquidation_tail_utility,
    predicted_loss,
    resolve_grid,
    resolve_workers,
    scaling_study,
    simulate_path,
    width_sweep,
)
