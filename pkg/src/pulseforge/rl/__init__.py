"""From-scratch numpy RL: networks, replay, exploration noise, DDPG/TD3."""

from .agent import AgentConfig, DDPGAgent, TD3Config, train
from .buffer import Batch, ReplayBuffer
from .nets import MLP, Adam, mse_loss
from .noise import OUNoise

__all__ = [
    "AgentConfig",
    "TD3Config",
    "DDPGAgent",
    "train",
    "Batch",
    "ReplayBuffer",
    "MLP",
    "Adam",
    "mse_loss",
    "OUNoise",
]
