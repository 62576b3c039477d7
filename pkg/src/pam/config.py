"""Central configuration defaults for the pipeline.

Values here are artifact configuration, not claims from any source; the
CLI exposes the ones that vary between runs and records all of them in
the run manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

# Workspace: unit square table frame, meters.
WORKSPACE_LO = 0.0
WORKSPACE_HI = 1.0
GRID_SIZE = 64          # occupancy raster resolution per axis
OBS_POINTS = 64         # observation point count M (farthest-point sampled)
EMD_POINTS = 64         # point count per side of the assignment-based EMD
ACTION_DIM = 4

# Diffusion
DIFFUSION_T = 100
BETA_START = 1e-4
BETA_END = 0.02
T_EMBED_DIM = 5         # t/T plus 4 sinusoidal features

# Networks
ENCODER_DIMS = (2, 64, 64)
CONTEXT_DIM = 64
HEAD_HIDDEN = 128
REWARD_HEAD_HIDDEN = 128

# Training
SL_EPOCHS = 2000
SL_LR = 2e-3
DPO_EPOCHS = 200
DPO_LR = 1e-6
DPO_BATCH = 256
DPO_BETA = 100.0
EXPLICIT_EPOCHS = 200
EXPLICIT_LR = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999

# Data collection
AUX_ACTIONS_K = 9
CANDIDATES_N = 8

# Reward-guided selection
REWARD_DRAWS = 16          # Monte-Carlo (t, eps) draws per scoring pass
REWARD_T_FRACTION = 0.1    # use only the smallest 10% of timesteps

# Tasks
GRANULAR_GRAINS = 200
GRANULAR_BOARD_HALFWIDTH = 0.05
GRANULAR_STEP_NOISE = 0.002
ROPE_NODES = 40
ROPE_DECAY_SEGMENTS = 3.0
ROPE_RELAX_ITERS = 50
RASTER_DILATION = 1        # cells (Chebyshev radius) for polyline rasters

# Evaluation
EVAL_TRIALS = 20
MAX_STEPS = {"granular": 20, "rope": 15}
EARLY_STOP_EMD_DELTA = 1e-3
EARLY_STOP_PATIENCE = 3
DONE_EMD = {"granular": 0.055, "rope": 0.04}

METHOD_TAGS = ("SL", "SL+SL", "DPO+ImplicitRAS", "SL+ExplicitRAS", "SL+ImplicitRAS")

# Stage dataset sizes used by the end-to-end acceptance run
STAGE_SIZES = {"granular": (400, 200), "rope": (200, 100)}


@dataclass
class Hyperparams:
    """Everything a run manifest needs to reproduce a training command."""

    task: str = "granular"
    diffusion_t: int = DIFFUSION_T
    beta_start: float = BETA_START
    beta_end: float = BETA_END
    sl_epochs: int = SL_EPOCHS
    sl_lr: float = SL_LR
    dpo_epochs: int = DPO_EPOCHS
    dpo_lr: float = DPO_LR
    dpo_beta: float = DPO_BETA
    explicit_epochs: int = EXPLICIT_EPOCHS
    explicit_lr: float = EXPLICIT_LR
    aux_k: int = AUX_ACTIONS_K
    candidates_n: int = CANDIDATES_N
    reward_draws: int = REWARD_DRAWS
    reward_t_fraction: float = REWARD_T_FRACTION
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)
