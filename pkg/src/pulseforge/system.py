"""Device model: a pair of fixed-frequency transmons with four drive lines.

All frequency-like quantities (detunings, anharmonicities, exchange coupling,
drive Rabi rates) are stored in plain MHz, linear frequency.  The simulation
layer converts to angular rad/ns with :data:`RAD_PER_NS_PER_MHZ` when it
builds Hamiltonians.

The model lives in the frame rotating at the second transmon's (dressed)
frequency, so ``delta1`` is zero by construction and ``delta0`` is the
detuning of transmon 0 from transmon 1.  Drive channels follow the usual
two-line layout: ``d0``/``d1`` drive each transmon at its own frequency,
``u01``/``u10`` drive one transmon at the other's frequency (the
cross-resonance channels).  Channels driving at transmon 0's frequency
(``d0``, ``u10``) acquire an ``exp(i delta0 t)`` frame phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

RAD_PER_NS_PER_MHZ = 2.0 * math.pi * 1e-3

PARAM_NAMES = (
    "omega_d0",
    "omega_u01",
    "omega_d1",
    "omega_u10",
    "delta0",
    "delta1",
    "alpha0",
    "alpha1",
    "j",
)


class DriveChannel(str, Enum):
    """One of the four microwave drive lines."""

    D0 = "d0"
    U01 = "u01"
    D1 = "d1"
    U10 = "u10"

    @property
    def transmon(self) -> int:
        """Index of the transmon whose lowering operator the drive couples to."""
        return 0 if self in (DriveChannel.D0, DriveChannel.U01) else 1

    @property
    def rabi_param(self) -> str:
        return {
            DriveChannel.D0: "omega_d0",
            DriveChannel.U01: "omega_u01",
            DriveChannel.D1: "omega_d1",
            DriveChannel.U10: "omega_u10",
        }[self]

    @property
    def frame_delta_param(self) -> str:
        """Which detuning sets the channel's frame phase e^{i delta t}."""
        if self in (DriveChannel.D0, DriveChannel.U10):
            return "delta0"
        return "delta1"

    @property
    def carries_frame_phase(self) -> bool:
        """True for channels oscillating at transmon 0's frequency."""
        return self.frame_delta_param == "delta0"


DEFAULT_DRIVES: tuple[DriveChannel, ...] = (DriveChannel.U01, DriveChannel.D1)
THREE_DRIVES: tuple[DriveChannel, ...] = (
    DriveChannel.U01,
    DriveChannel.D1,
    DriveChannel.D0,
)


@dataclass(frozen=True)
class SystemParams:
    """Two-transmon device parameters in MHz (linear frequency).

    Attributes
    ----------
    omega_d0, omega_u01 :
        Rabi rates of the two drives attached to transmon 0's line.
    omega_d1, omega_u10 :
        Rabi rates of the two drives attached to transmon 1's line.
    delta0 :
        Detuning of transmon 0 from the rotating frame (transmon 1).
    delta1 :
        Always 0 in this frame; kept explicit so the drift machinery sees
        all nine parameters.
    alpha0, alpha1 :
        Anharmonicities, negative for transmons.
    j :
        Exchange coupling between the transmons.
    """

    omega_d0: float
    omega_u01: float
    omega_d1: float
    omega_u10: float
    delta0: float
    delta1: float
    alpha0: float
    alpha1: float
    j: float

    def __post_init__(self) -> None:
        if self.delta1 != 0.0:
            raise ValueError(
                f"delta1 must be 0 in the frame of transmon 1, got {self.delta1}"
            )
        if self.alpha0 >= 0 or self.alpha1 >= 0:
            raise ValueError("anharmonicities must be negative")
        for name in ("omega_d0", "omega_u01", "omega_d1", "omega_u10"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.j <= 0:
            raise ValueError("exchange coupling j must be positive")

    @classmethod
    def default(cls) -> "SystemParams":
        """Parameters of a representative fixed-frequency transmon pair."""
        return cls(
            omega_d0=204.7,
            omega_u01=204.7,
            omega_d1=158.5,
            omega_u10=158.5,
            delta0=-86.6,
            delta1=0.0,
            alpha0=-310.5,
            alpha1=-313.9,
            j=2.2,
        )

    def as_vector(self) -> np.ndarray:
        """The nine parameters in :data:`PARAM_NAMES` order."""
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_vector(cls, p: np.ndarray) -> "SystemParams":
        p = np.asarray(p, dtype=float)
        if p.shape != (len(PARAM_NAMES),):
            raise ValueError(f"expected {len(PARAM_NAMES)} parameters, got {p.shape}")
        return cls(**dict(zip(PARAM_NAMES, p.tolist())))

    def with_relative_drift(self, eps: np.ndarray) -> "SystemParams":
        """Apply componentwise relative drift: p -> p * (1 + eps).

        ``delta1`` is exactly zero so its drift entry has no physical effect;
        it is still accepted so drift vectors line up with PARAM_NAMES.
        """
        eps = np.asarray(eps, dtype=float)
        if eps.shape != (len(PARAM_NAMES),):
            raise ValueError(f"drift vector must have shape ({len(PARAM_NAMES)},)")
        return SystemParams.from_vector(self.as_vector() * (1.0 + eps))

    def rabi_mhz(self, channel: DriveChannel) -> float:
        return getattr(self, channel.rabi_param)

    def frame_delta_mhz(self, channel: DriveChannel) -> float:
        return getattr(self, channel.frame_delta_param)

    def single_transmon(self, index: int) -> "TransmonParams":
        """One transmon viewed in its own rotating frame (zero detuning)."""
        if index == 0:
            return TransmonParams(delta=0.0, alpha=self.alpha0, omega_d=self.omega_d0)
        if index == 1:
            return TransmonParams(delta=0.0, alpha=self.alpha1, omega_d=self.omega_d1)
        raise ValueError(f"transmon index must be 0 or 1, got {index}")


@dataclass(frozen=True)
class TransmonParams:
    """Single-transmon parameters in MHz: detuning, anharmonicity, drive Rabi."""

    delta: float
    alpha: float
    omega_d: float

    def __post_init__(self) -> None:
        if self.alpha >= 0:
            raise ValueError("anharmonicity must be negative")
        if self.omega_d <= 0:
            raise ValueError("omega_d must be positive")


def validate_drives(drives: tuple[DriveChannel, ...]) -> tuple[DriveChannel, ...]:
    drives = tuple(DriveChannel(d) for d in drives)
    if len(drives) == 0:
        raise ValueError("at least one drive channel is required")
    if len(set(drives)) != len(drives):
        raise ValueError(f"duplicate drive channels in {drives}")
    return drives
