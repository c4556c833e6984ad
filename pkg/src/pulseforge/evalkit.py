"""Post-calibration analyses: noise robustness, drift binning, drive roles,
and fine-tuning drivers for trained agents.

Everything here consumes finished control solutions (a fixed pulse or an
agent checkpoint) and reports how they hold up away from the nominal
operating point.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs import TransmonGateEnv
from .metrics import avg_linear_entropy, corrected_fidelity
from .pulses import PwcPulse
from .qutrit import DEFAULT_SUBSTEPS, DT_NS, QUBIT_IDX_2Q, TwoTransmonSim
from .system import DriveChannel, PARAM_NAMES, SystemParams

__all__ = [
    "NoiseSpec",
    "NoiseResult",
    "noisy_rollout",
    "noise_sweep",
    "DriftSpec",
    "DriftSample",
    "DriftBin",
    "DriftTable",
    "drift_sweep",
    "remove_drive",
    "RoleAnalysis",
    "role_analysis",
    "FinetuneResult",
    "finetune",
]

MAX_NOISE_SIGMA = 0.03
MAX_DRIFT_RANGE = 0.07

# drift families: which relative-parameter slots move together
KIND_SLOTS = {
    "coupling": (8,),
    "drive": (0, 1, 2, 3),
    "detuning": (4, 5),
    "anharmonicity": (6, 7),
    "all": tuple(range(len(PARAM_NAMES))),
}


# -- stochastic parameter noise ------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    """Relative Gaussian parameter noise, redrawn every tick."""

    sigma: float = 0.0
    samples: int = 50

    def __post_init__(self):
        if not 0.0 <= self.sigma <= MAX_NOISE_SIGMA:
            raise ValueError(
                f"sigma must lie in [0, {MAX_NOISE_SIGMA}] (studied range), got {self.sigma}"
            )
        if self.samples < 1:
            raise ValueError("need at least one sample")


@dataclass(frozen=True)
class NoiseResult:
    sigma: float
    fidelities: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.fidelities.mean())

    @property
    def std(self) -> float:
        return float(self.fidelities.std(ddof=1)) if len(self.fidelities) > 1 else 0.0

    @property
    def sem(self) -> float:
        return self.std / np.sqrt(len(self.fidelities))


def noisy_rollout(
    pulse: PwcPulse,
    target: np.ndarray,
    spec: NoiseSpec,
    p0: SystemParams | None = None,
    seed: int = 0,
    substeps: int = DEFAULT_SUBSTEPS,
) -> NoiseResult:
    """Monte-Carlo fidelity under tick-rate parameter fluctuations.

    Each sample redraws all nine parameters every tick, p = p0 (1 + eps)
    with eps ~ N(0, sigma^2), and propagates tick by tick.  Sample k uses
    its own RNG stream, so results do not depend on evaluation order.
    """
    p0 = p0 or SystemParams.default()
    drives = tuple(pulse.amplitudes)
    if spec.sigma == 0.0:
        sim = TwoTransmonSim(p0, drives)
        fid = corrected_fidelity(sim.propagate(pulse, substeps=substeps).matrix, target)
        return NoiseResult(0.0, np.full(spec.samples, fid))

    tick_amps = pulse.tick_amp_matrix(drives)
    nt = tick_amps.shape[0]
    fids = np.empty(spec.samples)
    for k in range(spec.samples):
        rng = np.random.default_rng([seed, k])
        u = np.eye(9, dtype=complex)
        for i in range(nt):
            p = p0.with_relative_drift(rng.normal(0.0, spec.sigma, len(PARAM_NAMES)))
            sim = TwoTransmonSim(p, drives)
            seg = sim.segment_propagator(tick_amps[i], 1, t0_tick=i, substeps=substeps)
            u = seg.matrix @ u
        fids[k] = corrected_fidelity(u, target)
    return NoiseResult(spec.sigma, fids)


def noise_sweep(
    pulse: PwcPulse,
    target: np.ndarray,
    sigmas,
    samples: int = 50,
    p0: SystemParams | None = None,
    seed: int = 0,
    substeps: int = DEFAULT_SUBSTEPS,
) -> list[NoiseResult]:
    """noisy_rollout across a sigma schedule, one independent stream per point."""
    return [
        noisy_rollout(
            pulse, target, NoiseSpec(float(s), samples), p0, seed + 7919 * i, substeps
        )
        for i, s in enumerate(sigmas)
    ]


# -- drift generalization -------------------------------------------------------


@dataclass(frozen=True)
class DriftSpec:
    """Binned drift scan: signed maximum drift on the x axis."""

    kind: str = "all"
    bin_width: float = 0.002
    max_drift: float = MAX_DRIFT_RANGE
    samples_center: int = 15
    samples_edge: int = 60

    def __post_init__(self):
        if self.kind not in KIND_SLOTS:
            raise ValueError(f"kind must be one of {sorted(KIND_SLOTS)}, got {self.kind!r}")
        if not 0.0 < self.bin_width <= self.max_drift:
            raise ValueError("bin_width must be positive and at most max_drift")
        if self.max_drift > MAX_DRIFT_RANGE:
            raise ValueError(f"max_drift beyond the sampled extent {MAX_DRIFT_RANGE}")
        if not 1 <= self.samples_center <= self.samples_edge:
            raise ValueError("per-bin counts must ramp from center to edge")

    def bin_edges(self) -> np.ndarray:
        n = int(round(self.max_drift / self.bin_width))
        return np.linspace(-n * self.bin_width, n * self.bin_width, 2 * n + 1)

    def quota(self, center: float) -> int:
        ramp = (self.samples_edge - self.samples_center) * abs(center) / self.max_drift
        return int(round(self.samples_center + ramp))


@dataclass(frozen=True)
class DriftSample:
    eps: np.ndarray
    max_abs_drift: float
    fidelity: float


@dataclass
class DriftBin:
    lo: float
    hi: float
    samples: list[DriftSample] = field(default_factory=list)

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def mean(self) -> float:
        return float(np.mean([s.fidelity for s in self.samples]))

    @property
    def std(self) -> float:
        return float(np.std([s.fidelity for s in self.samples]))


@dataclass
class DriftTable:
    kind: str
    spec: DriftSpec
    bins: list[DriftBin]

    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.bins])

    def means(self) -> np.ndarray:
        return np.array([b.mean for b in self.bins])

    def save(self, out_dir, stem: str = "drift") -> tuple[Path, Path]:
        """CSV of per-bin statistics plus JSONL of the raw samples."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        table = out / f"{stem}_{self.kind}_bins.csv"
        with open(table, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_center", "mean_fidelity", "std_fidelity", "count"])
            for b in self.bins:
                writer.writerow([f"{b.center:.4f}", b.mean, b.std, b.count])
        raw = out / f"{stem}_{self.kind}_samples.jsonl"
        with open(raw, "w") as fh:
            for b in self.bins:
                for s in b.samples:
                    fh.write(
                        json.dumps(
                            {
                                "eps": s.eps.tolist(),
                                "max_abs_drift": s.max_abs_drift,
                                "fidelity": s.fidelity,
                            }
                        )
                        + "\n"
                    )
        return table, raw


def _draw_in_bin(rng, lo: float, hi: float, slots) -> np.ndarray:
    """A drift vector whose signed largest-|.| component lands in [lo, hi)."""
    eps = np.zeros(len(PARAM_NAMES))
    m = rng.uniform(lo, hi)
    carrier = int(rng.choice(slots))
    for s in slots:
        if s != carrier:
            eps[s] = rng.uniform(-abs(m), abs(m))
    eps[carrier] = m
    return eps


def drift_sweep(
    source,
    spec: DriftSpec = DriftSpec(),
    target: np.ndarray | None = None,
    p0: SystemParams | None = None,
    config=None,
    seed: int = 0,
    substeps: int = DEFAULT_SUBSTEPS,
) -> DriftTable:
    """Fidelity vs signed maximum drift, binned.

    ``source`` is either a frozen :class:`PwcPulse` (evaluated on the drifted
    system; needs ``target``) or a trained agent with an ``act`` method
    (proposes a pulse per drifted environment; needs the env ``config``).
    """
    p0 = p0 or SystemParams.default()
    rng = np.random.default_rng(seed)

    if isinstance(source, PwcPulse):
        if target is None:
            raise ValueError("a fixed pulse needs the target unitary")
        drives = tuple(source.amplitudes)

        def evaluate(eps: np.ndarray) -> float:
            sim = TwoTransmonSim(p0.with_relative_drift(eps), drives)
            return corrected_fidelity(
                sim.propagate(source, substeps=substeps).matrix, target
            )

    elif hasattr(source, "act"):
        if config is None:
            raise ValueError("an agent needs the env config it was trained for")
        if source.config.state_dim != config.state_dim:
            raise ValueError(
                f"agent expects {source.config.state_dim}-dim states but the env "
                f"produces {config.state_dim}; context flags must match training"
            )
        env = TransmonGateEnv(config, seed=seed)

        def evaluate(eps: np.ndarray) -> float:
            state = env.reset(drift=eps)
            done = False
            while not done:
                state, _, done = env.step(source.act(state, noise=False))
            return float(env.last_fidelity)

    else:
        raise TypeError("source must be a PwcPulse or an agent with .act")

    edges = spec.bin_edges()
    slots = KIND_SLOTS[spec.kind]
    bins = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        b = DriftBin(float(lo), float(hi))
        for _ in range(spec.quota(b.center)):
            eps = _draw_in_bin(rng, lo, hi, slots)
            b.samples.append(
                DriftSample(eps, float(np.max(np.abs(eps))), evaluate(eps))
            )
        bins.append(b)
    return DriftTable(spec.kind, spec, bins)


# -- role of individual drives ---------------------------------------------------


def remove_drive(pulse: PwcPulse, channel: DriveChannel = DriveChannel.D1) -> PwcPulse:
    """The same pulse with one channel silenced; idempotent."""
    return pulse.without_channel(channel)


@dataclass
class RoleAnalysis:
    times_ns: np.ndarray
    s_lin_full: np.ndarray
    s_lin_removed: np.ndarray
    control_fidelity_full: np.ndarray
    control_fidelity_removed: np.ndarray

    @property
    def max_entropy_deviation(self) -> float:
        return float(np.max(np.abs(self.s_lin_full - self.s_lin_removed)))

    @property
    def max_control_deviation(self) -> float:
        return float(
            np.max(np.abs(self.control_fidelity_full - self.control_fidelity_removed))
        )


def _control_fidelity(u: np.ndarray, target: np.ndarray) -> float:
    """Control-qubit state fidelity vs the ideal gate image, over |00>, |10>.

    Uhlmann fidelity between the reduced (projected, renormalized) control
    states; the two-qubit closed form F = tr(rho sigma) + 2 sqrt(det rho
    det sigma) is exact here.
    """
    total = 0.0
    for j, idx9 in ((0, QUBIT_IDX_2Q[0]), (2, QUBIT_IDX_2Q[2])):
        psi = u[list(QUBIT_IDX_2Q), idx9]
        norm = np.linalg.norm(psi)
        if norm < 1e-12:
            total += 0.0
            continue
        rho = np.outer(psi, psi.conj()) / norm**2
        phi = target[:, j]
        sigma = np.outer(phi, phi.conj())
        # partial trace over the target qubit (second index)
        rc = rho.reshape(2, 2, 2, 2).trace(axis1=1, axis2=3)
        sc = sigma.reshape(2, 2, 2, 2).trace(axis1=1, axis2=3)
        overlap = float(np.trace(rc @ sc).real)
        dets = float((np.linalg.det(rc) * np.linalg.det(sc)).real)
        total += overlap + 2.0 * np.sqrt(max(dets, 0.0))
    return total / 2.0


def role_analysis(
    pulse: PwcPulse,
    target: np.ndarray,
    p0: SystemParams | None = None,
    substeps: int = DEFAULT_SUBSTEPS,
    stride: int = 1,
) -> RoleAnalysis:
    """Entanglement and control-qubit traces with and without the d1 drive."""
    for needed in (DriveChannel.U01, DriveChannel.D1):
        if needed not in pulse.amplitudes:
            raise ValueError(f"role analysis needs channel {needed.value} in the pulse")
    if stride < 1:
        raise ValueError("stride must be positive")
    p0 = p0 or SystemParams.default()
    sim = TwoTransmonSim(p0, tuple(pulse.amplitudes))
    stripped = remove_drive(pulse, DriveChannel.D1)

    def traces(p: PwcPulse) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        _, cums = sim.propagate_cumulative(p, substeps=substeps)
        picks = np.arange(stride - 1, cums.shape[0], stride)
        units = [np.eye(9, dtype=complex)] + [cums[i] for i in picks]
        t = np.concatenate([[0.0], (picks + 1) * DT_NS])
        s = np.array([avg_linear_entropy(u) for u in units])
        c = np.array([_control_fidelity(u, target) for u in units])
        return t, s, c

    t, s_full, c_full = traces(pulse)
    _, s_rm, c_rm = traces(stripped)
    return RoleAnalysis(t, s_full, s_rm, c_full, c_rm)


# -- fine-tuning ------------------------------------------------------------------


@dataclass
class FinetuneResult:
    episodes_to_threshold: int | None
    threshold: float
    window: int
    history: dict

    @property
    def reached(self) -> bool:
        return self.episodes_to_threshold is not None


def finetune(
    agent,
    env,
    threshold: float = 0.999,
    window: int = 100,
    max_episodes: int = 10_000,
    out_dir=None,
) -> FinetuneResult:
    """Continue training until the trailing mean score clears ``threshold``.

    Reports the episode count at which the moving-average training fidelity
    first reaches the threshold (None if the budget runs out first).  Works
    for fresh agents too, so from-scratch baselines use the same driver and
    episode counts stay comparable.
    """
    from .rl.agent import train

    env_dim = env.config.state_dim if hasattr(env, "config") else env.state_dim
    if agent.config.state_dim != env_dim:
        raise ValueError(
            f"agent state dim {agent.config.state_dim} does not match env {env_dim}"
        )

    def reached(history: dict) -> bool:
        return len(history["score"]) >= window and history["mean"][-1] >= threshold

    history = train(
        agent,
        env,
        episodes=max_episodes,
        out_dir=out_dir,
        curve_window=window,
        stop=reached,
    )
    episodes = len(history["score"])
    hit = episodes >= window and history["mean"][-1] >= threshold
    return FinetuneResult(episodes if hit else None, threshold, window, history)
