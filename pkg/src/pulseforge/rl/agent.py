"""DDPG and TD3 on numpy: actor-critic training for pulse synthesis.

The actor maps the environment state to a tanh action scaled per component
by the action windows; critics score (state, action) pairs.  Targets trail
the online networks by Polyak averaging.  TD3 adds twin critics scored by
their minimum, delayed policy updates, and smoothed target actions.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import NumericalError, QExplosionError
from .buffer import Batch, ReplayBuffer
from .nets import MLP, Adam
from .noise import OUNoise

__all__ = ["TD3Config", "AgentConfig", "DDPGAgent", "train"]

CHECKPOINT_VERSION = "pulseforge/agent/v1"

Q_GUARD = 1e4


@dataclass(frozen=True)
class TD3Config:
    enabled: bool = False
    policy_delay: int = 2
    target_noise: float = 0.2
    noise_clip: float = 0.5

    def __post_init__(self):
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be at least 1")
        if self.target_noise < 0 or self.noise_clip < 0:
            raise ValueError("target noise parameters must be nonnegative")


@dataclass(frozen=True)
class AgentConfig:
    state_dim: int
    action_dim: int
    hidden: tuple[int, ...] = (800, 400, 200)
    lr: float = 1e-4
    batch_size: int = 64
    kappa: float = 0.002
    capacity: int = 100_000
    warmup: int = 10_000
    gamma: float = 0.99
    td3: TD3Config = field(default_factory=TD3Config)
    noise_theta: float = 0.15
    noise_sigma: float = 0.2
    noise_decay_fraction: float = 0.6
    noise_floor: float = 0.0
    final_bound: float = 1e-3
    dtype: str = "float32"

    def __post_init__(self):
        if self.state_dim < 1 or self.action_dim < 1:
            raise ValueError("state_dim and action_dim must be positive")
        if not self.hidden:
            raise ValueError("need at least one hidden layer")
        if not 0.0 < self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa}")
        if not 0 <= self.warmup <= self.capacity:
            raise ValueError("warmup must fit inside the buffer capacity")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0.0 < self.noise_decay_fraction <= 1.0:
            raise ValueError("noise_decay_fraction must lie in (0, 1]")


class DDPGAgent:
    """Deterministic-policy agent; set ``config.td3.enabled`` for TD3."""

    def __init__(
        self,
        config: AgentConfig,
        action_scale: np.ndarray | float = 1.0,
        seed: int = 0,
    ):
        self.config = config
        self.seed = seed
        dtype = np.dtype(config.dtype)
        scale = np.asarray(action_scale, dtype=float) * np.ones(config.action_dim)
        if scale.shape != (config.action_dim,) or np.any(scale <= 0):
            raise ValueError("action_scale must broadcast to positive per-component bounds")
        self.action_scale = scale

        actor_sizes = (config.state_dim, *config.hidden, config.action_dim)
        critic_sizes = (config.state_dim + config.action_dim, *config.hidden, 1)
        self.actor = MLP(actor_sizes, "tanh", config.final_bound, dtype, seed)
        self.critics = [MLP(critic_sizes, "linear", None, dtype, seed + 1)]
        if config.td3.enabled:
            self.critics.append(MLP(critic_sizes, "linear", None, dtype, seed + 2))
        self.target_actor = self.actor.copy()
        self.target_critics = [c.copy() for c in self.critics]

        self.actor_opt = Adam(self.actor.parameters(), lr=config.lr)
        self.critic_opts = [Adam(c.parameters(), lr=config.lr) for c in self.critics]

        self.buffer = ReplayBuffer(
            config.capacity, config.state_dim, config.action_dim, dtype, seed + 10
        )
        self.noise = OUNoise(
            config.action_dim, config.noise_theta, config.noise_sigma, seed=seed + 20
        )
        self.rng = np.random.default_rng(seed + 30)
        self.train_steps = 0
        self.noise_scale = 1.0

    # -- acting ---------------------------------------------------------------

    def act(self, state: np.ndarray, noise: bool = False) -> np.ndarray:
        a = np.asarray(self.actor(np.asarray(state)), dtype=float) * self.action_scale
        if noise:
            a = a + self.noise.sample() * self.action_scale * self.noise_scale
        a = np.clip(a, -self.action_scale, self.action_scale)
        if not np.all(np.isfinite(a)):
            norms = [float(np.linalg.norm(w)) for w in self.actor.weights]
            raise NumericalError(
                f"actor produced a non-finite action after {self.train_steps} "
                f"training steps; layer weight norms: {norms}"
            )
        return a

    def random_action(self) -> np.ndarray:
        """Uniform warmup action within the per-component windows."""
        return self.rng.uniform(-self.action_scale, self.action_scale)

    def set_noise_decay(self, progress: float) -> None:
        """Linear decay of exploration over the first ``noise_decay_fraction``.

        ``progress`` is the completed fraction of training (0 to 1).
        """
        frac = min(max(progress, 0.0) / self.config.noise_decay_fraction, 1.0)
        self.noise_scale = max(1.0 - frac, self.config.noise_floor)

    # -- learning -------------------------------------------------------------

    def target_values(self, batch: Batch) -> np.ndarray:
        """Bootstrap targets y = r + gamma (1 - done) Q_target(s', a')."""
        cfg = self.config
        a_next = self.target_actor(batch.next_states) * self.action_scale
        if cfg.td3.enabled and cfg.td3.target_noise > 0:
            eps = self.rng.normal(0.0, cfg.td3.target_noise, a_next.shape)
            eps = np.clip(eps, -cfg.td3.noise_clip, cfg.td3.noise_clip)
            a_next = a_next + eps * self.action_scale
        a_next = np.clip(a_next, -self.action_scale, self.action_scale)
        xq = np.concatenate(
            [batch.next_states, a_next.astype(batch.next_states.dtype)], axis=1
        )
        q_next = self.target_critics[0](xq)[:, 0]
        for tc in self.target_critics[1:]:
            q_next = np.minimum(q_next, tc(xq)[:, 0])
        y = batch.rewards + cfg.gamma * (1.0 - batch.dones) * q_next
        return y

    def _polyak(self) -> None:
        k = self.config.kappa
        pairs = [(self.target_actor, self.actor)] + list(
            zip(self.target_critics, self.critics)
        )
        for target, online in pairs:
            for tp, op in zip(target.parameters(), online.parameters()):
                tp *= 1.0 - k
                tp += k * op

    def train_step(self, batch: Batch | None = None) -> dict:
        """One gradient step on the critics (and actor, respecting delay)."""
        if batch is None:
            batch = self.buffer.sample(self.config.batch_size)
        y = self.target_values(batch)

        q_abs_max = 0.0
        critic_losses = []
        xq = np.concatenate([batch.states, batch.actions], axis=1)
        for critic, opt in zip(self.critics, self.critic_opts):
            q, cache = critic.forward(xq)
            q = q[:, 0]
            q_abs_max = max(q_abs_max, float(np.abs(q).max(initial=0.0)))
            diff = q - y.astype(q.dtype)
            critic_losses.append(float(np.mean(diff * diff)))
            grad_q = (2.0 / len(diff)) * diff
            grads, _ = critic.backward(cache, grad_q[:, None])
            opt.step(grads)

        if q_abs_max > Q_GUARD or np.abs(y).max(initial=0.0) > Q_GUARD:
            raise QExplosionError(
                f"critic values exploded (|Q| > {Q_GUARD:.0e}) at train step "
                f"{self.train_steps}: max |Q| = {q_abs_max:.3e}"
            )

        self.train_steps += 1
        metrics = {
            "critic_loss": critic_losses[0],
            "q_abs_max": q_abs_max,
            "actor_loss": None,
        }
        if len(critic_losses) > 1:
            metrics["critic2_loss"] = critic_losses[1]

        delay = self.config.td3.policy_delay if self.config.td3.enabled else 1
        if self.train_steps % delay == 0:
            metrics["actor_loss"] = self._actor_step(batch)
            self._polyak()
        return metrics

    def actor_gradients(self, batch: Batch) -> tuple[float, list[np.ndarray]]:
        """Loss -mean Q(s, pi(s)) and its gradients through the first critic."""
        a_raw, a_cache = self.actor.forward(batch.states)
        a_env = a_raw * self.action_scale.astype(a_raw.dtype)
        xq = np.concatenate([batch.states, a_env.astype(batch.states.dtype)], axis=1)
        critic = self.critics[0]
        q, q_cache = critic.forward(xq)
        loss = -float(np.mean(q))
        grad_q = np.full_like(q, -1.0 / q.shape[0])
        _, grad_in = critic.backward(q_cache, grad_q)
        grad_a = grad_in[:, self.config.state_dim :] * self.action_scale.astype(
            a_raw.dtype
        )
        grads, _ = self.actor.backward(a_cache, grad_a)
        return loss, grads

    def _actor_step(self, batch: Batch) -> float:
        loss, grads = self.actor_gradients(batch)
        self.actor_opt.step(grads)
        return loss

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> Path:
        """Write a versioned checkpoint: binary arrays plus a JSON sidecar."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {}

        def put(prefix: str, state: dict):
            for key, val in state.items():
                arrays[f"{prefix}.{key}"] = val

        put("actor", self.actor.state_dict())
        put("target_actor", self.target_actor.state_dict())
        put("actor_opt", self.actor_opt.state_dict())
        for i, (c, tc, opt) in enumerate(
            zip(self.critics, self.target_critics, self.critic_opts)
        ):
            put(f"critic{i}", c.state_dict())
            put(f"target_critic{i}", tc.state_dict())
            put(f"critic{i}_opt", opt.state_dict())
        arrays["action_scale"] = self.action_scale
        np.savez(path.with_suffix(".npz"), **arrays)

        meta = {
            "version": CHECKPOINT_VERSION,
            "seed": self.seed,
            "train_steps": self.train_steps,
            "noise_scale": self.noise_scale,
            "config": asdict(self.config),
            "saved_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2))
        return path.with_suffix(".npz")

    @classmethod
    def load(cls, path) -> "DDPGAgent":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"checkpoint version {meta.get('version')!r} not supported "
                f"(this build reads {CHECKPOINT_VERSION!r})"
            )
        cfg_dict = dict(meta["config"])
        cfg_dict["hidden"] = tuple(cfg_dict["hidden"])
        cfg_dict["td3"] = TD3Config(**cfg_dict["td3"])
        config = AgentConfig(**cfg_dict)
        data = np.load(path.with_suffix(".npz"))
        agent = cls(config, data["action_scale"], seed=meta["seed"])

        def grab(prefix: str) -> dict:
            plen = len(prefix) + 1
            return {k[plen:]: data[k] for k in data.files if k.startswith(prefix + ".")}

        agent.actor.load_state_dict(grab("actor"))
        agent.target_actor.load_state_dict(grab("target_actor"))
        agent.actor_opt.load_state_dict(grab("actor_opt"))
        for i in range(len(agent.critics)):
            agent.critics[i].load_state_dict(grab(f"critic{i}"))
            agent.target_critics[i].load_state_dict(grab(f"target_critic{i}"))
            agent.critic_opts[i].load_state_dict(grab(f"critic{i}_opt"))
        agent.train_steps = int(meta["train_steps"])
        agent.noise_scale = float(meta["noise_scale"])
        return agent


def train(
    agent: DDPGAgent,
    env,
    episodes: int,
    out_dir=None,
    checkpoint_every: int = 0,
    curve_window: int = 100,
    score_attr: str = "last_fidelity",
    stop=None,
) -> dict:
    """Standard off-policy loop: warmup fill, then one update per step.

    Episode scores (gate fidelity when the environment reports one, total
    reward otherwise) and their trailing mean/min/max land in the returned
    history and, when ``out_dir`` is given, in ``learning_curve.csv``
    alongside periodic checkpoints.  ``stop(history)`` is consulted after
    every episode; returning True ends training early.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    history = {"episode": [], "score": [], "mean": [], "min": [], "max": []}
    total_steps = 0

    for ep in range(episodes):
        agent.set_noise_decay(ep / episodes if episodes > 0 else 1.0)
        agent.noise.reset()
        state = env.reset()
        done = False
        ep_reward = 0.0
        while not done:
            if total_steps < agent.config.warmup:
                action = agent.random_action()
            else:
                action = agent.act(state, noise=True)
            nxt, reward, done = env.step(action)
            agent.buffer.add(state, action, reward, nxt, done)
            total_steps += 1
            if total_steps >= agent.config.warmup:
                agent.train_step()
            state = nxt
            ep_reward += reward

        score = getattr(env, score_attr, None)
        if score is None:
            score = ep_reward
        history["episode"].append(ep)
        history["score"].append(float(score))
        tail = history["score"][-curve_window:]
        history["mean"].append(float(np.mean(tail)))
        history["min"].append(float(np.min(tail)))
        history["max"].append(float(np.max(tail)))

        if out is not None and checkpoint_every and (ep + 1) % checkpoint_every == 0:
            agent.save(out / f"checkpoint_ep{ep + 1:06d}")
        if stop is not None and stop(history):
            break

    if out is not None:
        agent.save(out / "agent_final")
        with open(out / "learning_curve.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "fidelity", "mean", "min", "max"])
            for row in zip(*(history[k] for k in ("episode", "score", "mean", "min", "max"))):
                writer.writerow(row)
    return history
