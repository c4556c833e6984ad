"""Ornstein-Uhlenbeck exploration noise."""

from __future__ import annotations

import numpy as np

__all__ = ["OUNoise"]


class OUNoise:
    """Temporally correlated noise: x += theta (mu - x) dt + sigma sqrt(dt) N.

    The process is reset at episode boundaries so episodes stay independent
    draws; the caller applies any amplitude schedule.
    """

    def __init__(
        self,
        dim: int,
        theta: float = 0.15,
        sigma: float = 0.2,
        dt: float = 1.0,
        mu: float = 0.0,
        seed: int = 0,
    ):
        if theta < 0 or sigma < 0 or dt <= 0:
            raise ValueError("theta and sigma must be nonnegative, dt positive")
        self.dim = int(dim)
        self.theta = theta
        self.sigma = sigma
        self.dt = dt
        self.mu = mu
        self.rng = np.random.default_rng(seed)
        self.x = np.full(self.dim, float(mu))

    def reset(self) -> None:
        self.x = np.full(self.dim, float(self.mu))

    def sample(self) -> np.ndarray:
        dx = self.theta * (self.mu - self.x) * self.dt
        dx += self.sigma * np.sqrt(self.dt) * self.rng.standard_normal(self.dim)
        self.x = self.x + dx
        return self.x.copy()
