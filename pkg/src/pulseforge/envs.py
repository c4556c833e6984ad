"""Episodic RL environments: the transmon gate-design task and a toy problem.

An episode builds one piecewise-constant pulse, segment by segment.  The
action is the change of each drive's complex amplitude, limited to a window
per channel class; the observation stacks the real and imaginary parts of
the four tracked computational basis states with the previous amplitudes
(and, when enabled, the drifted-parameter context).  The only nonzero reward
arrives at the final segment: -log10 of the virtual-Z-corrected infidelity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gates import TARGETS_2Q
from .metrics import overlap_matrix, virtual_z_correct
from .pulses import PulseGrid, PwcPulse
from .qutrit import DEFAULT_SUBSTEPS, QUBIT_IDX_2Q, TwoTransmonSim
from .system import (
    DEFAULT_DRIVES,
    PARAM_NAMES,
    THREE_DRIVES,
    DriveChannel,
    SystemParams,
    validate_drives,
)

__all__ = [
    "EnvConfig",
    "TransmonGateEnv",
    "ToyQuadraticEnv",
    "preset_env_config",
    "rollout",
    "infidelity_reward",
    "INFIDELITY_FLOOR",
]

INFIDELITY_FLOOR = 1e-12

DRIFT_MODES = ("fixed", "uniform", "normal")


def infidelity_reward(fidelity: float) -> float:
    """Sparse terminal score: -log10 of the floored infidelity.

    0.99 maps to 2, 0.999 to 3; a numerically perfect gate is capped at 12
    by the floor so the reward stays finite.
    """
    return -float(np.log10(max(1.0 - fidelity, INFIDELITY_FLOOR)))

_DELTA0_SLOT = PARAM_NAMES.index("delta0")


@dataclass(frozen=True)
class EnvConfig:
    """Gate target, pulse grid, drive lines, action windows, drift model."""

    target: str = "zx"
    grid: PulseGrid = field(default_factory=lambda: PulseGrid.from_ticks(1120, 20))
    drives: tuple[DriveChannel, ...] = DEFAULT_DRIVES
    w_u: float = 0.1
    w_d: float = 0.01
    drift: str = "fixed"
    drift_scale: float = 0.0
    context: bool = False
    p0: SystemParams = field(default_factory=SystemParams.default)
    substeps: int = DEFAULT_SUBSTEPS

    def __post_init__(self):
        if self.target not in TARGETS_2Q:
            raise ValueError(
                f"target must be one of {sorted(TARGETS_2Q)}, got {self.target!r}"
            )
        object.__setattr__(self, "drives", validate_drives(self.drives))
        for name, w in (("w_u", self.w_u), ("w_d", self.w_d)):
            if not 0.0 < w <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {w}")
        if self.drift not in DRIFT_MODES:
            raise ValueError(f"drift must be one of {DRIFT_MODES}, got {self.drift!r}")
        if self.drift != "fixed" and self.drift_scale <= 0.0:
            raise ValueError("drifting modes need a positive drift_scale")

    @property
    def n_segments(self) -> int:
        return self.grid.segments

    @property
    def action_dim(self) -> int:
        return 2 * len(self.drives)

    @property
    def state_dim(self) -> int:
        return 72 + 2 * len(self.drives) + (9 if self.context else 0)

    def window(self, channel: DriveChannel) -> float:
        return self.w_u if channel in (DriveChannel.U01, DriveChannel.U10) else self.w_d

    def action_windows(self) -> np.ndarray:
        """Per-component clip bounds, (re, im) pairs in drive order."""
        return np.repeat([self.window(ch) for ch in self.drives], 2)

    def target_matrix(self) -> np.ndarray:
        return TARGETS_2Q[self.target]()


_PRESETS: dict[str, dict] = {
    # short single-qubit rotation, wide windows
    "ix": dict(
        target="ix",
        grid_ticks=(45, 9),
        w_u=0.4,
        w_d=0.13,
    ),
    "zx": dict(target="zx", grid_ticks=(1120, 20), w_u=0.1, w_d=0.01),
    "cnot": dict(target="cnot", grid_ticks=(1120, 20), w_u=0.1, w_d=0.01),
    # shorter gates open the windows to keep the reachable set wide
    "zx-960": dict(target="zx", grid_ticks=(960, 20), w_u=0.2, w_d=0.02),
    "zx-800": dict(target="zx", grid_ticks=(800, 20), w_u=0.2, w_d=0.02),
    "zx-640": dict(target="zx", grid_ticks=(640, 20), w_u=0.2, w_d=0.02),
    "zx-drift": dict(
        target="zx",
        grid_ticks=(1120, 28),
        w_u=0.1,
        w_d=0.01,
        drift="normal",
        drift_scale=0.02,
        context=True,
    ),
    "zx-3drives": dict(
        target="zx",
        grid_ticks=(800, 20),
        w_u=0.15,
        w_d=0.015,
        drives=THREE_DRIVES,
    ),
}


def preset_env_config(name: str, **overrides) -> EnvConfig:
    """Named environment configurations for the standard experiments."""
    if name not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")
    spec = dict(_PRESETS[name])
    ticks, segments = spec.pop("grid_ticks")
    spec["grid"] = PulseGrid.from_ticks(ticks, segments)
    spec.update(overrides)
    return EnvConfig(**spec)


class TransmonGateEnv:
    """Segment-by-segment pulse construction as an episodic environment.

    Owns its RNG and simulator; independent instances never share state, so
    they can run in parallel workers.
    """

    def __init__(self, config: EnvConfig, seed: int = 0):
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.target = config.target_matrix()
        self._windows = config.action_windows()
        self._basis = np.eye(9, dtype=complex)[:, list(QUBIT_IDX_2Q)]
        self.clamped_actions = 0
        self._sim: TwoTransmonSim | None = None
        self._params = config.p0
        self._context = np.zeros(9)
        self._step = 0
        self._amps = np.zeros(len(config.drives), dtype=complex)
        self._u = np.eye(9, dtype=complex)
        self._done = True
        self.last_fidelity: float | None = None
        self.amp_history: list[np.ndarray] = []

    # -- episode control ----------------------------------------------------

    def _draw_drift(self) -> np.ndarray:
        mode = self.config.drift
        eps = np.zeros(len(PARAM_NAMES))
        if mode == "uniform":
            eps[_DELTA0_SLOT] = self.rng.uniform(
                -self.config.drift_scale, self.config.drift_scale
            )
        elif mode == "normal":
            eps = self.rng.normal(0.0, self.config.drift_scale, len(PARAM_NAMES))
        return eps

    def reset(self, seed: int | None = None, drift: np.ndarray | None = None) -> np.ndarray:
        """Start a fresh episode; ``drift`` pins the relative drift vector.

        Without ``drift`` the configured drift mode draws one.  Pinning is
        how evaluation sweeps place the system at an exact operating point.
        """
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        if drift is not None:
            drift = np.asarray(drift, dtype=float)
            if drift.shape != (len(PARAM_NAMES),):
                raise ValueError(f"drift must have shape ({len(PARAM_NAMES)},)")
            self._context = drift.copy()
        else:
            self._context = self._draw_drift()
        self._params = self.config.p0.with_relative_drift(self._context)
        self._sim = TwoTransmonSim(self._params, self.config.drives)
        self._step = 0
        self._amps = np.zeros(len(self.config.drives), dtype=complex)
        self._u = np.eye(9, dtype=complex)
        self._done = False
        self.last_fidelity = None
        self.amp_history = []
        return self._observe()

    def _observe(self) -> np.ndarray:
        cols = self._u @ self._basis
        parts = [cols.real.ravel(), cols.imag.ravel(), self._amps.view(float)]
        if self.config.context:
            parts.append(self._context)
        return np.concatenate(parts)

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        if self._done:
            raise RuntimeError("episode finished; call reset() first")
        action = np.asarray(action, dtype=float).ravel()
        if action.shape != (self.config.action_dim,):
            raise ValueError(
                f"action must have {self.config.action_dim} components, got {action.shape}"
            )
        clipped = np.clip(action, -self._windows, self._windows)
        if not np.array_equal(clipped, action):
            self.clamped_actions += 1

        new = self._amps.view(float) + clipped
        new = np.clip(new, -1.0, 1.0).view(complex)
        self._amps = new
        self.amp_history.append(new.copy())

        seg = self._sim.segment_propagator(
            new,
            self.config.grid.ticks_per_segment,
            t0_tick=self._step * self.config.grid.ticks_per_segment,
            substeps=self.config.substeps,
        )
        self._u = seg.matrix @ self._u
        self._step += 1

        if self._step < self.config.n_segments:
            return self._observe(), 0.0, False
        self._done = True
        _, fid = virtual_z_correct(overlap_matrix(self._u, self.target))
        self.last_fidelity = fid
        return self._observe(), infidelity_reward(fid), True

    # -- artifacts ----------------------------------------------------------

    def pulse(self) -> PwcPulse:
        """The piecewise-constant pulse built so far in this episode."""
        if not self.amp_history:
            raise RuntimeError("no segments played yet")
        amps = np.asarray(self.amp_history)
        grid = PulseGrid.from_ticks(
            len(self.amp_history) * self.config.grid.ticks_per_segment,
            len(self.amp_history),
        )
        return PwcPulse(
            grid,
            {ch: amps[:, c].copy() for c, ch in enumerate(self.config.drives)},
            metadata={"target": self.config.target},
        )

    @property
    def unitary(self) -> np.ndarray:
        return self._u.copy()


def rollout(
    env: TransmonGateEnv,
    policy,
    noise: bool = False,
    seed: int | None = None,
) -> tuple[PwcPulse, float, dict]:
    """Play one episode; returns the pulse, final fidelity, and the record.

    ``policy`` is either a plain callable state -> action or an agent with an
    ``act(state, noise=...)`` method; ``noise`` only applies to the latter.
    """
    act = policy.act if hasattr(policy, "act") else None
    state = env.reset(seed=seed)
    states, actions, rewards = [state], [], []
    done = False
    while not done:
        raw = act(state, noise=noise) if act is not None else policy(state)
        action = np.asarray(raw, dtype=float)
        state, reward, done = env.step(action)
        states.append(state)
        actions.append(action)
        rewards.append(reward)
    trajectory = {
        "states": np.asarray(states),
        "actions": np.asarray(actions),
        "rewards": np.asarray(rewards),
        "amplitudes": np.asarray(env.amp_history),
    }
    return env.pulse(), float(env.last_fidelity), trajectory


class ToyQuadraticEnv:
    """Contextual bandit with a quadratic reward, for optimizer shakedown.

    State s ~ U(-1, 1)^2, one action a in [-1, 1], reward
    1 - (a - a*(s))^2 with the linear optimum a*(s) = g . s.  Every episode
    is a single step, so the analytic optimum of the expected reward is 1.
    """

    GAINS = np.array([0.5, -0.3])

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        self._state = np.zeros(2)
        self._done = True

    @property
    def state_dim(self) -> int:
        return 2

    @property
    def action_dim(self) -> int:
        return 1

    def optimal_action(self, state: np.ndarray) -> np.ndarray:
        return np.array([float(np.dot(self.GAINS, state))])

    def analytic_optimum(self) -> float:
        return 1.0

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self._state = self.rng.uniform(-1.0, 1.0, 2)
        self._done = False
        return self._state.copy()

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        if self._done:
            raise RuntimeError("episode finished; call reset() first")
        a = float(np.clip(np.asarray(action, dtype=float).ravel()[0], -1.0, 1.0))
        best = float(np.dot(self.GAINS, self._state))
        reward = 1.0 - (a - best) ** 2
        self._done = True
        return self._state.copy(), reward, True
