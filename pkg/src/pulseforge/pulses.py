"""Pulse grids, piecewise-constant pulses, analytic waveforms and pulse I/O.

Hardware emits samples on a fixed grid with ``dt = 2/9 ns``; the value is
kept exact as a Fraction so tick arithmetic never accumulates float error.
A piecewise-constant (PWC) pulse holds one complex amplitude per segment per
channel, where a segment spans an integer number of ticks.  Normalized
amplitudes are dimensionless and capped at magnitude 1; the device model
scales them by the per-channel Rabi rate.

Analytic waveforms (Gaussian, flat-top Gaussian, DRAG pair) are sampled at
tick midpoints, which keeps even- and odd-length discretizations symmetric
about the pulse center.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .errors import PulseIOError
from .system import DriveChannel

DT = Fraction(2, 9)
DT_NS = float(DT)

PULSE_SCHEMA = "pulseforge/pulse/v1"

AMP_CAP = 1.0 + 1e-12


@dataclass(frozen=True)
class PulseGrid:
    """A pulse duration expressed as segments of equal tick count."""

    segments: int
    ticks_per_segment: int

    def __post_init__(self) -> None:
        if self.segments < 1 or int(self.segments) != self.segments:
            raise ValueError(f"segments must be a positive integer, got {self.segments}")
        if self.ticks_per_segment < 1 or int(self.ticks_per_segment) != self.ticks_per_segment:
            raise ValueError(
                f"ticks_per_segment must be a positive integer, got {self.ticks_per_segment}"
            )

    @property
    def ticks(self) -> int:
        return self.segments * self.ticks_per_segment

    @property
    def segment_ns(self) -> float:
        return float(DT * self.ticks_per_segment)

    @property
    def duration(self) -> Fraction:
        """Exact duration in ns."""
        return DT * self.ticks

    @property
    def duration_ns(self) -> float:
        return float(self.duration)

    @classmethod
    def from_ticks(cls, ticks: int, segments: int = 1) -> "PulseGrid":
        if ticks % segments != 0:
            raise ValueError(
                f"{ticks} ticks cannot be split into {segments} equal segments"
            )
        return cls(segments=segments, ticks_per_segment=ticks // segments)

    @classmethod
    def from_duration(cls, duration_ns: float, segments: int = 1) -> "PulseGrid":
        """Snap a duration to the nearest tick and split it into segments.

        The segment count must divide the snapped tick count exactly.
        """
        ticks = round(duration_ns / DT_NS)
        if ticks < 1:
            raise ValueError(f"duration {duration_ns} ns is below one tick ({DT_NS:.4f} ns)")
        if ticks % segments != 0:
            lower = (ticks // segments) * segments
            upper = lower + segments
            raise ValueError(
                f"duration {duration_ns} ns snaps to {ticks} ticks, not divisible by "
                f"{segments} segments; nearest valid tick counts are {lower} and {upper}"
            )
        return cls(segments=segments, ticks_per_segment=ticks // segments)

    def tick_starts_ns(self) -> np.ndarray:
        return np.arange(self.ticks) * DT_NS

    def tick_mids_ns(self) -> np.ndarray:
        return (np.arange(self.ticks) + 0.5) * DT_NS

    def segment_boundaries_ns(self) -> np.ndarray:
        return np.arange(self.segments + 1) * self.segment_ns


def _validate_amps(amps: np.ndarray, segments: int, channel: str) -> np.ndarray:
    arr = np.asarray(amps, dtype=complex)
    if arr.shape != (segments,):
        raise ValueError(
            f"channel {channel}: expected {segments} segment amplitudes, got shape {arr.shape}"
        )
    if not (np.all(np.isfinite(arr.real)) and np.all(np.isfinite(arr.imag))):
        raise ValueError(f"channel {channel}: non-finite amplitude")
    mags = np.abs(arr)
    if mags.max(initial=0.0) > AMP_CAP:
        k = int(np.argmax(mags))
        raise ValueError(
            f"channel {channel}: |amplitude| = {mags[k]:.6f} > 1 at segment {k}"
        )
    return arr


@dataclass
class PwcPulse:
    """Piecewise-constant complex amplitudes per drive channel."""

    grid: PulseGrid
    amplitudes: dict[DriveChannel, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean: dict[DriveChannel, np.ndarray] = {}
        for ch, amps in self.amplitudes.items():
            ch = DriveChannel(ch)
            clean[ch] = _validate_amps(amps, self.grid.segments, ch.value)
        self.amplitudes = clean

    @property
    def channels(self) -> tuple[DriveChannel, ...]:
        return tuple(self.amplitudes.keys())

    def amp_matrix(self, drives: tuple[DriveChannel, ...]) -> np.ndarray:
        """(segments, len(drives)) complex amplitudes; absent channels are 0."""
        out = np.zeros((self.grid.segments, len(drives)), dtype=complex)
        for c, ch in enumerate(drives):
            if ch in self.amplitudes:
                out[:, c] = self.amplitudes[ch]
        return out

    def tick_amp_matrix(self, drives: tuple[DriveChannel, ...]) -> np.ndarray:
        """(ticks, len(drives)) amplitudes with each segment value repeated."""
        return np.repeat(self.amp_matrix(drives), self.grid.ticks_per_segment, axis=0)

    def without_channel(self, channel: DriveChannel) -> "PwcPulse":
        """Copy with one channel dropped (zeroed by omission)."""
        channel = DriveChannel(channel)
        amps = {ch: a.copy() for ch, a in self.amplitudes.items() if ch != channel}
        return PwcPulse(grid=self.grid, amplitudes=amps, metadata=dict(self.metadata))

    def active_channels(self, tol: float = 0.0) -> tuple[DriveChannel, ...]:
        return tuple(
            ch for ch, a in self.amplitudes.items() if np.abs(a).max(initial=0.0) > tol
        )


# ---------------------------------------------------------------------------
# analytic waveforms


@dataclass(frozen=True)
class Gaussian:
    """Truncated Gaussian, lifted so the edges hit exactly zero.

    The envelope is exp(-(t - T/2)^2 / (2 sigma^2)) rescaled so its edge
    value maps to 0 and its peak to ``amp``.
    """

    amp: complex
    sigma_ns: float

    def __post_init__(self) -> None:
        if self.sigma_ns <= 0:
            raise ValueError("sigma_ns must be positive")

    def envelope(self, t: np.ndarray, duration_ns: float) -> np.ndarray:
        c = duration_ns / 2.0
        g = np.exp(-0.5 * ((t - c) / self.sigma_ns) ** 2)
        g0 = math.exp(-0.5 * (c / self.sigma_ns) ** 2)
        return (g - g0) / (1.0 - g0)

    def sample(self, t: np.ndarray, duration_ns: float) -> np.ndarray:
        return self.amp * self.envelope(t, duration_ns)


@dataclass(frozen=True)
class GaussianSquare:
    """Flat-top pulse with Gaussian rise and fall flanks.

    Each flank spans ``risefall_sigmas * sigma_ns``; the Gaussian tails are
    lifted to zero at the pulse edges. The flat section has value ``amp``.
    """

    amp: complex
    sigma_ns: float
    risefall_sigmas: float = 2.0

    def __post_init__(self) -> None:
        if self.sigma_ns <= 0:
            raise ValueError("sigma_ns must be positive")
        if self.risefall_sigmas <= 0:
            raise ValueError("risefall_sigmas must be positive")

    @property
    def flank_ns(self) -> float:
        return self.risefall_sigmas * self.sigma_ns

    def envelope(self, t: np.ndarray, duration_ns: float) -> np.ndarray:
        rise = self.flank_ns
        if duration_ns < 2 * rise:
            raise ValueError(
                f"duration {duration_ns} ns shorter than two flanks ({2 * rise} ns)"
            )
        t = np.asarray(t, dtype=float)
        g0 = math.exp(-0.5 * self.risefall_sigmas**2)
        up = (np.exp(-0.5 * ((t - rise) / self.sigma_ns) ** 2) - g0) / (1 - g0)
        down = (
            np.exp(-0.5 * ((t - (duration_ns - rise)) / self.sigma_ns) ** 2) - g0
        ) / (1 - g0)
        env = np.ones_like(t)
        env = np.where(t < rise, up, env)
        env = np.where(t > duration_ns - rise, down, env)
        return np.clip(env, 0.0, 1.0)

    def sample(self, t: np.ndarray, duration_ns: float) -> np.ndarray:
        return self.amp * self.envelope(t, duration_ns)

    def mean_envelope(self, duration_ns: float, ticks: int) -> float:
        """Tick-midpoint average of the envelope, used to seed calibrations."""
        t = (np.arange(ticks) + 0.5) * (duration_ns / ticks)
        return float(self.envelope(t, duration_ns).mean())


@dataclass(frozen=True)
class DragPair:
    """DRAG waveform: Gaussian in-phase part, scaled derivative in quadrature.

    ``sample`` returns amp * (g(t) + 1j * scale_ns * g'(t)) with the
    derivative taken analytically on the lifted envelope, so the quadrature
    also vanishes smoothly with the envelope normalization.
    """

    amp: complex
    sigma_ns: float
    scale_ns: float

    def __post_init__(self) -> None:
        if self.sigma_ns <= 0:
            raise ValueError("sigma_ns must be positive")

    def envelope(self, t: np.ndarray, duration_ns: float) -> np.ndarray:
        return Gaussian(1.0, self.sigma_ns).envelope(t, duration_ns)

    def envelope_derivative(self, t: np.ndarray, duration_ns: float) -> np.ndarray:
        c = duration_ns / 2.0
        g = np.exp(-0.5 * ((t - c) / self.sigma_ns) ** 2)
        g0 = math.exp(-0.5 * (c / self.sigma_ns) ** 2)
        return (-(t - c) / self.sigma_ns**2) * g / (1.0 - g0)

    def sample(self, t: np.ndarray, duration_ns: float) -> np.ndarray:
        env = self.envelope(t, duration_ns)
        denv = self.envelope_derivative(t, duration_ns)
        return self.amp * (env + 1j * self.scale_ns * denv)


def discretize(waveform, grid: PulseGrid) -> np.ndarray:
    """Sample a waveform at tick midpoints over the grid duration.

    Raises if any sample magnitude exceeds 1, naming the first offender.
    """
    t = grid.tick_mids_ns()
    samples = np.asarray(waveform.sample(t, grid.duration_ns), dtype=complex)
    mags = np.abs(samples)
    if mags.max(initial=0.0) > AMP_CAP:
        k = int(np.argmax(mags))
        raise ValueError(
            f"discretized waveform exceeds unit amplitude at tick {k}: |a| = {mags[k]:.6f}"
        )
    return samples


def assemble_echoed(
    cr_half: GaussianSquare,
    cancel_half: GaussianSquare,
    pi_pulse_d0: np.ndarray,
    half_ticks: int,
) -> PwcPulse:
    """Assemble an echoed cross-resonance schedule at tick resolution.

    Time order: pi pulse on the control channel, inverted CR half (with its
    inverted cancellation tone on the target channel), second pi pulse, then
    the positive CR half.  Both halves share one envelope so the u01 and d1
    integrals over the schedule vanish.
    """
    pi_pulse_d0 = np.asarray(pi_pulse_d0, dtype=complex)
    pi_ticks = pi_pulse_d0.shape[0]
    if pi_ticks < 1:
        raise ValueError("pi pulse must span at least one tick")
    if half_ticks < 1:
        raise ValueError("half_ticks must be positive")

    half_grid = PulseGrid.from_ticks(half_ticks, segments=half_ticks)
    cr = discretize(cr_half, half_grid)
    cancel = discretize(cancel_half, half_grid)

    total = 2 * pi_ticks + 2 * half_ticks
    grid = PulseGrid.from_ticks(total, segments=total)
    u01 = np.zeros(total, dtype=complex)
    d1 = np.zeros(total, dtype=complex)
    d0 = np.zeros(total, dtype=complex)

    t0 = 0
    d0[t0 : t0 + pi_ticks] = pi_pulse_d0
    t0 += pi_ticks
    u01[t0 : t0 + half_ticks] = -cr
    d1[t0 : t0 + half_ticks] = -cancel
    t0 += half_ticks
    d0[t0 : t0 + pi_ticks] = pi_pulse_d0
    t0 += pi_ticks
    u01[t0 : t0 + half_ticks] = cr
    d1[t0 : t0 + half_ticks] = cancel

    return PwcPulse(
        grid=grid,
        amplitudes={
            DriveChannel.U01: u01,
            DriveChannel.D1: d1,
            DriveChannel.D0: d0,
        },
        metadata={"scheme": "echoed", "pi_ticks": pi_ticks, "half_ticks": half_ticks},
    )


# ---------------------------------------------------------------------------
# JSON serialization


def pulse_to_dict(pulse: PwcPulse) -> dict:
    channels = {}
    for ch, amps in pulse.amplitudes.items():
        channels[ch.value] = {
            "re": [float(x) for x in amps.real],
            "im": [float(x) for x in amps.imag],
        }
    return {
        "schema": PULSE_SCHEMA,
        "dt_ns": [DT.numerator, DT.denominator],
        "segments": pulse.grid.segments,
        "ticks_per_segment": pulse.grid.ticks_per_segment,
        "channels": channels,
        "metadata": pulse.metadata,
    }


def pulse_from_dict(data: Mapping) -> PwcPulse:
    schema = data.get("schema")
    if schema != PULSE_SCHEMA:
        raise PulseIOError(
            f"unsupported pulse schema {schema!r}; this build reads {PULSE_SCHEMA!r}"
        )
    dt = data.get("dt_ns")
    if tuple(dt) != (DT.numerator, DT.denominator):
        raise PulseIOError(f"pulse dt {dt} does not match the fixed grid {DT}")
    try:
        grid = PulseGrid(
            segments=int(data["segments"]),
            ticks_per_segment=int(data["ticks_per_segment"]),
        )
        amplitudes = {}
        for name, comp in data["channels"].items():
            re = np.asarray(comp["re"], dtype=float)
            im = np.asarray(comp["im"], dtype=float)
            amplitudes[DriveChannel(name)] = re + 1j * im
        pulse = PwcPulse(
            grid=grid, amplitudes=amplitudes, metadata=dict(data.get("metadata", {}))
        )
    except PulseIOError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise PulseIOError(f"malformed pulse payload: {exc}") from exc
    return pulse


def dumps_pulse(pulse: PwcPulse) -> str:
    try:
        return json.dumps(pulse_to_dict(pulse), allow_nan=False, indent=1)
    except ValueError as exc:
        raise PulseIOError(f"pulse contains non-finite values: {exc}") from exc


def loads_pulse(text: str) -> PwcPulse:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PulseIOError(f"not valid JSON: {exc}") from exc
    return pulse_from_dict(data)


def save_pulse(pulse: PwcPulse, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_pulse(pulse))


def load_pulse(path) -> PwcPulse:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_pulse(fh.read())
