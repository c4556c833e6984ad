"""pulseforge: microwave pulse design and analysis for transmon gates.

The package covers the full loop for one- and two-transmon gate design on
fixed-frequency transmons: a qutrit-truncated device simulator driven by
piecewise-constant pulses, gate metrics (average and worst-case fidelity,
leakage, entanglement), calibrated analytical baselines (DRAG, echoed and
direct cross-resonance), a from-scratch DDPG/TD3 agent that shapes pulses
through a gym-style environment, and robustness/drift evaluation tooling.
"""

from .system import SystemParams, DriveChannel, DEFAULT_DRIVES, THREE_DRIVES
from .pulses import PulseGrid, PwcPulse, DT_NS

__version__ = "0.1.0"

__all__ = [
    "SystemParams",
    "DriveChannel",
    "DEFAULT_DRIVES",
    "THREE_DRIVES",
    "PulseGrid",
    "PwcPulse",
    "DT_NS",
    "__version__",
]
