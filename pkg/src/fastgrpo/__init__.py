"""Flow-matching toy models fine-tuned with group-relative policy optimization
over a short stochastic window of an otherwise deterministic sampler."""
from .autodiff import Tensor, no_grad
from .flow_matching import PretrainConfig, ToyDataset, fm_loss, load_model, pretrain
from .grpo import GrpoConfig, TrainerState, compute_advantages, grpo_objective, train
from .nn import AdamState, GraphSpec, ParamStore, load_checkpoint, save_checkpoint
from .rewards import HeadConfig, RewardWeights, aggregate, default_heads, evaluate_heads
from .samplers import SamplerSchedule, WindowDraw, draw_window, rollout, rollout_batch, sde_drift, sde_step
from .stats import energy_distance, energy_test
from .velocity import GaussianOracleVelocity, MlpVelocity

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "GaussianOracleVelocity",
    "GraphSpec",
    "GrpoConfig",
    "HeadConfig",
    "MlpVelocity",
    "ParamStore",
    "PretrainConfig",
    "RewardWeights",
    "SamplerSchedule",
    "Tensor",
    "ToyDataset",
    "TrainerState",
    "WindowDraw",
    "aggregate",
    "compute_advantages",
    "default_heads",
    "draw_window",
    "energy_distance",
    "energy_test",
    "evaluate_heads",
    "fm_loss",
    "grpo_objective",
    "load_checkpoint",
    "load_model",
    "no_grad",
    "pretrain",
    "rollout",
    "rollout_batch",
    "save_checkpoint",
    "sde_drift",
    "sde_step",
    "train",
]
