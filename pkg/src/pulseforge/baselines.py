"""Analytical pulse baselines: DRAG single-qubit gates, echoed and direct
cross-resonance schemes, calibrated with two-stage Nelder-Mead.

The CR schemes drive the control transmon at the target's frequency (u01),
with a cancellation tone on the target channel (d1); the direct scheme adds a
rotary tone that flips sign at the half-way point.  Free parameters are the
tone amplitudes and phases; initial CR amplitudes come from inverting the
block-diagonalization ZX rate so the flat-top area matches the target angle.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize

from . import kernels
from .gates import rx, zx_gate
from .metrics import corrected_fidelity
from .pulses import (
    DT_NS,
    DragPair,
    Gaussian,
    GaussianSquare,
    PulseGrid,
    PwcPulse,
    assemble_echoed,
    discretize,
    pulse_to_dict,
)
from .qutrit import TwoTransmonSim, build_hamiltonian_1q, effective_zx_rate
from .system import (
    RAD_PER_NS_PER_MHZ,
    DEFAULT_DRIVES,
    THREE_DRIVES,
    DriveChannel,
    SystemParams,
)

logger = logging.getLogger(__name__)

__all__ = [
    "CalibrationProblem",
    "CalibrationResult",
    "DurationSweep",
    "drag_problem",
    "echoed_problem",
    "direct_problem",
    "calibrate",
    "calibrate_pi_pulse",
    "duration_sweep",
    "crossing_duration",
    "propagate_1q",
]

SCHEME_N_PARAMS = {"drag": 2, "echoed": 4, "direct": 6}

# echo pi-pulse window, ticks (24.9 ns at the default grid)
DEFAULT_PI_TICKS = 112


@dataclass(frozen=True)
class CalibrationProblem:
    """One calibration task: scheme, bounded free parameters, target, duration."""

    scheme: str
    duration_ticks: int
    target: np.ndarray
    system: SystemParams
    bounds: tuple[tuple[float, float], ...]
    sigma_ns: float = 8.0
    risefall_sigmas: float = 2.0
    pi_ticks: int = DEFAULT_PI_TICKS
    pi_amps: np.ndarray | None = None
    drag_transmon: int = 1
    substeps: int = 64

    def __post_init__(self):
        if self.scheme not in SCHEME_N_PARAMS:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        want = SCHEME_N_PARAMS[self.scheme]
        if len(self.bounds) != want:
            raise ValueError(
                f"{self.scheme} takes {want} free parameters, got {len(self.bounds)} bounds"
            )
        t = np.asarray(self.target, dtype=complex)
        want_dim = 2 if self.scheme == "drag" else 4
        if t.shape != (want_dim, want_dim):
            raise ValueError(f"{self.scheme} target must be {want_dim}x{want_dim}")
        if self.duration_ticks < 1:
            raise ValueError("duration must span at least one tick")
        if self.pi_amps is not None and len(self.pi_amps) != self.pi_ticks:
            raise ValueError(
                f"pi_amps spans {len(self.pi_amps)} ticks but pi_ticks is {self.pi_ticks}"
            )

    @property
    def duration_ns(self) -> float:
        return self.duration_ticks * DT_NS

    @property
    def n_params(self) -> int:
        return SCHEME_N_PARAMS[self.scheme]


def drag_problem(
    system: SystemParams | None = None,
    duration_ns: float = 35.6,
    target: np.ndarray | None = None,
    transmon: int = 1,
    sigma_ns: float | None = None,
) -> CalibrationProblem:
    """DRAG pulse on one transmon: free real amplitude and derivative scale."""
    system = system or SystemParams.default()
    grid = PulseGrid.from_duration(duration_ns)
    if sigma_ns is None:
        sigma_ns = grid.ticks * DT_NS / 4.0
    return CalibrationProblem(
        scheme="drag",
        duration_ticks=grid.ticks,
        target=target if target is not None else rx(np.pi / 2),
        system=system,
        bounds=((0.0, 1.0), (-3.0, 3.0)),
        sigma_ns=sigma_ns,
        drag_transmon=transmon,
    )


def echoed_problem(
    system: SystemParams | None = None,
    duration_ns: float = 248.9,
    target: np.ndarray | None = None,
    pi_ticks: int = DEFAULT_PI_TICKS,
    pi_amps: np.ndarray | None = None,
    sigma_ns: float = 12.0,
    max_cr_amp: float = 0.85,
) -> CalibrationProblem:
    """Echoed CR: CR and cancellation amplitudes, then their phases.

    The halves need smooth flanks: the CR tone also shakes the control far
    off resonance, and only an adiabatic ramp keeps that deflection from
    surviving the echo as a control-axis rotation error.  The amplitude
    ceiling keeps the drive below the conditional-rate rollover, and the
    short pi window trims the static-coupling evolution the echo cannot
    protect.
    """
    system = system or SystemParams.default()
    grid = PulseGrid.from_duration(duration_ns)
    if grid.ticks <= 2 * pi_ticks:
        raise ValueError(
            f"{grid.ticks} ticks leave no room for two {pi_ticks}-tick pi pulses"
        )
    if (grid.ticks - 2 * pi_ticks) % 2 != 0:
        raise ValueError("CR halves must get an equal number of ticks")
    return CalibrationProblem(
        scheme="echoed",
        duration_ticks=grid.ticks,
        target=target if target is not None else zx_gate(),
        system=system,
        bounds=((0.0, max_cr_amp), (0.0, 0.45), (-np.pi, np.pi), (-np.pi, np.pi)),
        sigma_ns=sigma_ns,
        pi_ticks=pi_ticks,
        pi_amps=pi_amps,
    )


def direct_problem(
    system: SystemParams | None = None,
    duration_ns: float = 248.9,
    target: np.ndarray | None = None,
    sigma_ns: float = 16.0,
    max_cr_amp: float = 0.7,
) -> CalibrationProblem:
    """Echo-free CR: CR, cancellation, and rotary amplitudes, then phases.

    Wide flanks and the CR amplitude ceiling (same rollover argument as the
    echoed scheme) are what limit this family at short durations.
    """
    system = system or SystemParams.default()
    grid = PulseGrid.from_duration(duration_ns)
    return CalibrationProblem(
        scheme="direct",
        duration_ticks=grid.ticks,
        target=target if target is not None else zx_gate(),
        system=system,
        bounds=(
            (0.0, max_cr_amp),
            (0.0, 0.45),
            (0.0, 0.45),
            (-np.pi, np.pi),
            (-np.pi, np.pi),
            (-np.pi, np.pi),
        ),
        sigma_ns=sigma_ns,
    )


# ---------------------------------------------------------------------------
# pulse construction


def _gs(problem: CalibrationProblem, amp: complex) -> GaussianSquare:
    return GaussianSquare(
        amp=amp, sigma_ns=problem.sigma_ns, risefall_sigmas=problem.risefall_sigmas
    )


def build_pulse(problem: CalibrationProblem, x: np.ndarray):
    """Realize the scheme's waveforms for a parameter vector.

    Returns a PwcPulse for the two-qubit schemes, or the per-tick complex
    amplitude array for DRAG.
    """
    x = np.asarray(x, dtype=float)
    if problem.scheme == "drag":
        amp, scale = x
        grid = PulseGrid.from_ticks(problem.duration_ticks, problem.duration_ticks)
        return discretize(DragPair(amp=amp, sigma_ns=problem.sigma_ns, scale_ns=scale), grid)

    if problem.scheme == "echoed":
        cr_amp, ca_amp, cr_ph, ca_ph = x
        if problem.pi_amps is None:
            raise ValueError("echoed problem needs calibrated pi-pulse amplitudes")
        half = (problem.duration_ticks - 2 * problem.pi_ticks) // 2
        return assemble_echoed(
            cr_half=_gs(problem, cr_amp * np.exp(1j * cr_ph)),
            cancel_half=_gs(problem, ca_amp * np.exp(1j * ca_ph)),
            pi_pulse_d0=problem.pi_amps,
            half_ticks=half,
        )

    cr_amp, ca_amp, ro_amp, cr_ph, ca_ph, ro_ph = x
    n = problem.duration_ticks
    grid = PulseGrid.from_ticks(n, n)
    u01 = discretize(_gs(problem, cr_amp * np.exp(1j * cr_ph)), grid)
    d1 = discretize(_gs(problem, ca_amp * np.exp(1j * ca_ph)), grid)
    rotary = discretize(_gs(problem, ro_amp * np.exp(1j * ro_ph)), grid)
    sign = np.ones(n)
    sign[n // 2 :] = -1.0  # rotary tone flips at the midpoint
    return PwcPulse(
        grid,
        {DriveChannel.U01: u01, DriveChannel.D1: d1 + sign * rotary},
        metadata={"scheme": "direct"},
    )


def propagate_1q(system: SystemParams, transmon: int, tick_amps: np.ndarray) -> np.ndarray:
    """Chain the per-tick qutrit propagators for a resonant single-transmon drive."""
    tp = system.single_transmon(transmon)
    hs = np.stack([build_hamiltonian_1q(tp, a) for a in tick_amps])
    return kernels.chain_unitary(hs, DT_NS)


def _make_objective(
    problem: CalibrationProblem, sim: TwoTransmonSim | None
) -> Callable[[np.ndarray], float]:
    target = np.asarray(problem.target, dtype=complex)
    if problem.scheme == "drag":

        def fidelity(x: np.ndarray) -> float:
            amps = build_pulse(problem, x)
            u = propagate_1q(problem.system, problem.drag_transmon, amps)
            return corrected_fidelity(u, target)

        return fidelity

    drives = THREE_DRIVES if problem.scheme == "echoed" else DEFAULT_DRIVES
    if sim is None:
        sim = TwoTransmonSim(problem.system, drives)

    def fidelity(x: np.ndarray) -> float:
        try:
            pulse = build_pulse(problem, x)
        except ValueError:  # amplitude cap exceeded by a tone sum
            return 0.0
        prop = sim.propagate(pulse, substeps=problem.substeps)
        return corrected_fidelity(prop.matrix, target)

    return fidelity


# ---------------------------------------------------------------------------
# initialization


def _invert_zx_rate(system: SystemParams, angle_rad: float, effective_ns: float) -> float:
    """CR amplitude fraction whose flat-top ZX area matches the target angle."""
    omega_ch = system.rabi_mhz(DriveChannel.U01)

    def gap(a: float) -> float:
        w = effective_zx_rate(system, a * omega_ch).omega_zx_mhz
        return w * RAD_PER_NS_PER_MHZ * effective_ns - angle_rad

    if gap(0.9) < 0.0:
        return 0.9
    return float(brentq(gap, 1e-4, 0.9, xtol=1e-6))


def initial_params(problem: CalibrationProblem) -> np.ndarray:
    if problem.scheme == "drag":
        # area of the lifted Gaussian in rabi-angle units
        grid = PulseGrid.from_ticks(problem.duration_ticks, problem.duration_ticks)
        env = Gaussian(amp=1.0, sigma_ns=problem.sigma_ns)
        area = np.sum(env.envelope(grid.tick_mids_ns(), grid.duration_ns)) * DT_NS
        tp = problem.system.single_transmon(problem.drag_transmon)
        # rotation angle of the target, |Tr RX(theta)| = 2 cos(theta/2)
        half_tr = min(abs(np.trace(problem.target)) / 2.0, 1.0)
        angle = 2.0 * np.arccos(half_tr)
        amp0 = angle / (tp.omega_d * RAD_PER_NS_PER_MHZ * area)
        return np.array([min(amp0, 0.9), 0.0])

    gs = _gs(problem, 1.0)
    if problem.scheme == "echoed":
        half_ticks = (problem.duration_ticks - 2 * problem.pi_ticks) // 2
        half_ns = half_ticks * DT_NS
        eff = gs.mean_envelope(half_ns, half_ticks) * half_ns
        amp0 = _invert_zx_rate(problem.system, np.pi / 4, eff)
        return np.array([amp0, 0.05, 0.0, 0.0])

    dur = problem.duration_ticks * DT_NS
    eff = gs.mean_envelope(dur, problem.duration_ticks) * dur
    amp0 = _invert_zx_rate(problem.system, np.pi / 2, eff)
    return np.array([amp0, 0.05, 0.02, 0.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# calibration driver


@dataclass
class CalibrationResult:
    problem: CalibrationProblem
    params: np.ndarray
    fidelity: float
    evaluations: int
    trace: np.ndarray  # best-so-far fidelity per evaluation
    restarts: int
    flagged: bool
    seed: int
    pulse: object = None  # PwcPulse or per-tick DRAG amplitudes

    def report_dict(self) -> dict:
        return {
            "scheme": self.problem.scheme,
            "duration_ns": self.problem.duration_ns,
            "params": [float(v) for v in self.params],
            "bounds": [list(b) for b in self.problem.bounds],
            "fidelity": self.fidelity,
            "evaluations": self.evaluations,
            "restarts": self.restarts,
            "flagged": self.flagged,
            "seed": self.seed,
            "waveform": {
                "sigma_ns": self.problem.sigma_ns,
                "risefall_sigmas": self.problem.risefall_sigmas,
            },
            "nelder_mead": {"coefficients": [1.0, 2.0, 0.5, 0.5], "simplex_step": 0.1},
        }

    def save(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{self.problem.scheme}_{self.problem.duration_ticks}ticks"
        (out / f"{stem}_report.json").write_text(
            json.dumps(self.report_dict(), indent=2, allow_nan=False)
        )
        if isinstance(self.pulse, PwcPulse):
            (out / f"{stem}_pulse.json").write_text(
                json.dumps(pulse_to_dict(self.pulse), allow_nan=False)
            )
        return out / f"{stem}_report.json"


def _clip_to_bounds(x: np.ndarray, bounds) -> np.ndarray:
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return np.clip(x, lo, hi)


def _simplex(x0: np.ndarray, idx: np.ndarray, bounds, step_frac: float = 0.1) -> np.ndarray:
    """Initial simplex stepping each free coordinate by a fraction of its range."""
    pts = [x0[idx]]
    for j, k in enumerate(idx):
        lo, hi = bounds[k]
        step = step_frac * (hi - lo)
        p = x0[idx].copy()
        p[j] = p[j] + step if p[j] + step <= hi else p[j] - step
        pts.append(p)
    return np.asarray(pts)


def _run_stage(
    objective, x0, idx, bounds, budget, rng, max_restarts: int = 3
) -> tuple[np.ndarray, float, int, int, bool]:
    """Nelder-Mead over the coordinates `idx` of x0, with restart-on-collapse."""
    evals = 0
    best_x = x0.copy()
    best_f = objective(x0)
    evals += 1
    restarts = 0
    flagged = False
    cur = x0.copy()
    while evals < budget:
        simplex = _simplex(cur, idx, bounds)
        if restarts > 0:
            lo = np.array([bounds[k][0] for k in idx])
            hi = np.array([bounds[k][1] for k in idx])
            simplex = np.clip(
                simplex + rng.normal(scale=0.02, size=simplex.shape) * (hi - lo), lo, hi
            )

        def neg(sub):
            full = cur.copy()
            full[idx] = sub
            full = _clip_to_bounds(full, bounds)
            return -objective(full)

        res = minimize(
            neg,
            simplex[0],
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "maxfev": budget - evals,
                "xatol": 1e-7,
                "fatol": 1e-10,
            },
        )
        evals += res.nfev
        cand = cur.copy()
        cand[idx] = res.x
        cand = _clip_to_bounds(cand, bounds)
        if -res.fun > best_f:
            best_f = -res.fun
            best_x = cand
        if res.success or evals >= budget:
            break
        restarts += 1
        if restarts > max_restarts:
            flagged = True
            logger.warning(
                "stage did not converge after %d restarts; keeping best-so-far", max_restarts
            )
            break
        cur = best_x.copy()
    return best_x, best_f, evals, restarts, flagged


def calibrate(
    problem: CalibrationProblem,
    sim: TwoTransmonSim | None = None,
    budget: int = 300,
    seed: int = 0,
) -> CalibrationResult:
    """Maximize average gate fidelity over the scheme's free parameters.

    Echoed and direct schemes run two Nelder-Mead stages (tone amplitudes,
    then tone phases); DRAG runs one stage over both parameters.  The final
    fidelity is recomputed from the rebuilt pulse rather than trusted from
    the optimizer trace.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(seed)
    objective = _make_objective(problem, sim)

    trace: list[float] = []
    best_seen = [0.0]

    def tracked(x: np.ndarray) -> float:
        f = objective(x)
        best_seen[0] = max(best_seen[0], f)
        trace.append(best_seen[0])
        return f

    x0 = initial_params(problem)
    if seed != 0:
        # jitter the start so independent seeds explore distinct basins
        span = np.array([hi - lo for lo, hi in problem.bounds])
        x0 = _clip_to_bounds(x0 + rng.uniform(-0.08, 0.08, x0.size) * span, problem.bounds)
    n = problem.n_params
    if problem.scheme == "drag":
        stages = [np.arange(n)]
    else:
        stages = [np.arange(n // 2), np.arange(n // 2, n)]

    x = x0
    evals = 0
    restarts = 0
    flagged = False
    for i, idx in enumerate(stages):
        remaining = budget - evals
        stage_budget = remaining if i == len(stages) - 1 else max(remaining // 2, 1)
        if stage_budget < 1:
            break
        x, _, used, r, fl = _run_stage(tracked, x, idx, problem.bounds, stage_budget, rng)
        evals += used
        restarts += r
        flagged = flagged or fl

    pulse = build_pulse(problem, x)
    if problem.scheme == "drag":
        u = propagate_1q(problem.system, problem.drag_transmon, pulse)
        final = corrected_fidelity(u, problem.target)
        channel = DriveChannel.D1 if problem.drag_transmon == 1 else DriveChannel.D0
        n = problem.duration_ticks
        pulse = PwcPulse(
            PulseGrid.from_ticks(n, n),
            {channel: pulse},
            metadata={"scheme": "drag", "transmon": problem.drag_transmon},
        )
    else:
        drives = THREE_DRIVES if problem.scheme == "echoed" else DEFAULT_DRIVES
        check_sim = sim if sim is not None else TwoTransmonSim(problem.system, drives)
        prop = check_sim.propagate(pulse, substeps=problem.substeps)
        final = corrected_fidelity(prop.matrix, problem.target)

    return CalibrationResult(
        problem=problem,
        params=x,
        fidelity=final,
        evaluations=evals,
        trace=np.asarray(trace),
        restarts=restarts,
        flagged=flagged,
        seed=seed,
        pulse=pulse,
    )


def calibrate_pi_pulse(
    system: SystemParams | None = None,
    ticks: int = DEFAULT_PI_TICKS,
    seed: int = 0,
    budget: int = 200,
) -> tuple[np.ndarray, float]:
    """DRAG X(pi) on the control transmon, for use inside the echo."""
    system = system or SystemParams.default()
    problem = drag_problem(
        system=system,
        duration_ns=ticks * DT_NS,
        target=rx(np.pi),
        transmon=0,
    )
    res = calibrate(problem, budget=budget, seed=seed)
    return res.pulse.amplitudes[DriveChannel.D0].copy(), res.fidelity


# ---------------------------------------------------------------------------
# duration sweep


@dataclass
class DurationSweep:
    scheme: str
    duration_ticks: np.ndarray
    best_fidelity: np.ndarray
    all_fidelity: np.ndarray  # (n_durations, k)
    best_results: list

    @property
    def duration_ns(self) -> np.ndarray:
        return self.duration_ticks * DT_NS


def duration_sweep(
    scheme: str,
    durations_ns: Sequence[float],
    system: SystemParams | None = None,
    k: int = 12,
    budget: int = 300,
    seed: int = 0,
    **problem_kwargs,
) -> DurationSweep:
    """Best-of-k calibrations at each duration."""
    system = system or SystemParams.default()
    factory = {"drag": drag_problem, "echoed": echoed_problem, "direct": direct_problem}[
        scheme
    ]
    if scheme == "echoed" and "pi_amps" not in problem_kwargs:
        pi_ticks = problem_kwargs.get("pi_ticks", DEFAULT_PI_TICKS)
        pi_amps, _ = calibrate_pi_pulse(system, ticks=pi_ticks, seed=seed)
        problem_kwargs["pi_amps"] = pi_amps

    ticks, best, results, table = [], [], [], []
    for d in durations_ns:
        problem = factory(system=system, duration_ns=d, **problem_kwargs)
        drives = (
            THREE_DRIVES
            if scheme == "echoed"
            else DEFAULT_DRIVES
            if scheme == "direct"
            else None
        )
        sim = TwoTransmonSim(system, drives) if drives else None
        runs = [calibrate(problem, sim=sim, budget=budget, seed=seed + 1000 * j) for j in range(k)]
        fids = np.array([r.fidelity for r in runs])
        ticks.append(problem.duration_ticks)
        best.append(float(fids.max()))
        table.append(fids)
        results.append(runs[int(fids.argmax())])
        logger.info("%s sweep %.1f ns: best %.5f over %d runs", scheme, d, fids.max(), k)
    return DurationSweep(
        scheme=scheme,
        duration_ticks=np.asarray(ticks),
        best_fidelity=np.asarray(best),
        all_fidelity=np.asarray(table),
        best_results=results,
    )


def crossing_duration(sweep: DurationSweep, level: float = 0.999) -> float:
    """Duration where the best fidelity first rises through `level`.

    Linear interpolation between the bracketing sweep points (the sweep is
    expected to increase with duration in the crossing's neighborhood).
    """
    d = sweep.duration_ns
    f = sweep.best_fidelity
    for i in range(len(d) - 1):
        if f[i] < level <= f[i + 1]:
            w = (level - f[i]) / (f[i + 1] - f[i])
            return float(d[i] + w * (d[i + 1] - d[i]))
    raise ValueError(f"sweep never crosses {level}: range [{f.min():.5f}, {f.max():.5f}]")
