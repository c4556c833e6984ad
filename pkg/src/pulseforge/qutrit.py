"""Qutrit-truncated transmon simulation under piecewise-constant drives.

Each transmon keeps its lowest three levels; the pair lives in the 9-level
product space with states ordered 00, 01, 02, 10, 11, 12, 20, 21, 22.  The
frame rotates at transmon 1's frequency, so the static Hamiltonian reads

    H0 = delta0 n0 + (alpha0/2) n0(n0-1) + (alpha1/2) n1(n1-1)
         + J (b0^dag b1 + b0 b1^dag)

and a drive on channel c adds (Omega_c/2)(z_c(t) b_jc + h.c.) with
z_c(t) = a_c(t) exp(i delta_c t), where the frame phase exp(i delta0 t) is
carried only by the channels oscillating at transmon 0's frequency (d0,
u10).  All coefficients are converted from MHz to angular rad/ns here.

Propagation is split by exactness: on any tick where no phase-carrying
channel is active the Hamiltonian is constant, so the propagator is a single
eigendecomposition-based exponential (the "TISE product"); ticks with active
frame phases integrate dU/dt = -i H(t) U with classic fixed-step RK4
("TDSE"), re-unitarizing through the polar decomposition only if the drift
exceeds tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .errors import DegenerateSubspaceError, UnitarityError
from .gates import DIM_2Q, QUBIT_IDX_2Q, pauli_kron
from .pulses import DT_NS, PwcPulse
from .system import (
    RAD_PER_NS_PER_MHZ,
    DriveChannel,
    SystemParams,
    TransmonParams,
    validate_drives,
)

logger = logging.getLogger("pulseforge.qutrit")

TISE_UNITARITY_TOL = 1e-10
TDSE_UNITARITY_TOL = 1e-8
HERMITICITY_TOL = 1e-12
DEFAULT_SUBSTEPS = 64


def lowering(dim: int = 3) -> np.ndarray:
    """Truncated bosonic lowering operator."""
    b = np.zeros((dim, dim), dtype=complex)
    for n in range(1, dim):
        b[n - 1, n] = np.sqrt(n)
    return b


_B3 = lowering(3)
_N3 = _B3.conj().T @ _B3
_A3 = _B3.conj().T @ _B3.conj().T @ _B3 @ _B3  # n(n-1) diagonal
_I3 = np.eye(3, dtype=complex)

B0 = np.kron(_B3, _I3)
B1 = np.kron(_I3, _B3)


def build_hamiltonian_1q(tp: TransmonParams, amp: complex) -> np.ndarray:
    """Single-transmon Hamiltonian (rad/ns) for one constant drive amplitude."""
    k = RAD_PER_NS_PER_MHZ
    h = k * (tp.delta * _N3 + 0.5 * tp.alpha * _A3)
    z = 0.5 * k * tp.omega_d * complex(amp)
    h = h + z * _B3 + np.conj(z) * _B3.conj().T
    return h


def static_hamiltonian_2q(params: SystemParams) -> np.ndarray:
    """Drive-free two-transmon Hamiltonian in rad/ns."""
    k = RAD_PER_NS_PER_MHZ
    h = k * (
        params.delta0 * np.kron(_N3, _I3)
        + params.delta1 * np.kron(_I3, _N3)
        + 0.5 * params.alpha0 * np.kron(_A3, _I3)
        + 0.5 * params.alpha1 * np.kron(_I3, _A3)
        + params.j * (np.kron(_B3.conj().T, _B3) + np.kron(_B3, _B3.conj().T))
    )
    return h


def drive_coupling(params: SystemParams, channel: DriveChannel) -> np.ndarray:
    """B_c = (Omega_c/2) b_j in rad/ns; the drive adds z B_c + conj(z) B_c^dag."""
    b = B0 if channel.transmon == 0 else B1
    return 0.5 * RAD_PER_NS_PER_MHZ * params.rabi_mhz(channel) * b


def build_hamiltonian_2q(
    params: SystemParams,
    amps: Mapping[DriveChannel, complex],
    t_ns: float | None = None,
    frame_phases: bool = True,
) -> np.ndarray:
    """Two-transmon Hamiltonian (rad/ns) at one instant.

    ``frame_phases`` keeps the exp(i delta0 t) factors on d0/u10; driving
    those channels with phases enabled requires an explicit time.
    """
    h = static_hamiltonian_2q(params)
    for ch, amp in amps.items():
        ch = DriveChannel(ch)
        amp = complex(amp)
        if amp == 0:
            continue
        z = amp
        if frame_phases and ch.carries_frame_phase:
            if t_ns is None:
                raise ValueError(
                    f"channel {ch.value} carries a frame phase; pass t_ns or "
                    "disable frame_phases"
                )
            z = amp * np.exp(
                1j * params.frame_delta_mhz(ch) * RAD_PER_NS_PER_MHZ * t_ns
            )
        bc = drive_coupling(params, ch)
        h = h + z * bc + np.conj(z) * bc.conj().T
    defect = float(np.abs(h - h.conj().T).max())
    if defect > HERMITICITY_TOL:
        raise ValueError(f"Hamiltonian lost hermiticity: defect {defect:.2e}")
    return h


@dataclass
class Propagator:
    """A unitary propagator with its generating-time metadata."""

    matrix: np.ndarray
    t_start_ns: float
    t_end_ns: float
    method: str = "tise"
    substeps: int = 0
    unitarity_defect: float = 0.0
    reunitarized: bool = False

    @property
    def duration_ns(self) -> float:
        return self.t_end_ns - self.t_start_ns


def propagate_tise(h: np.ndarray, duration_ns: float, t_start_ns: float = 0.0) -> Propagator:
    """Exact propagator for a constant Hamiltonian over one interval."""
    u = kernels.expm_herm(np.ascontiguousarray(h, dtype=complex), duration_ns)
    defect = kernels.unitarity_defect(u)
    if defect > TISE_UNITARITY_TOL:
        raise UnitarityError(
            f"constant-Hamiltonian propagator defect {defect:.2e} exceeds "
            f"{TISE_UNITARITY_TOL:.0e}"
        )
    return Propagator(
        matrix=u,
        t_start_ns=t_start_ns,
        t_end_ns=t_start_ns + duration_ns,
        method="tise",
        unitarity_defect=defect,
    )


class TwoTransmonSim:
    """Pulse-level simulator for one parameter set and an ordered drive list.

    Precomputes the static Hamiltonian and per-channel coupling matrices so
    per-segment propagation is cheap; all pulse-facing methods take
    amplitudes ordered like ``drives``.
    """

    def __init__(
        self,
        params: SystemParams,
        drives: Sequence[DriveChannel] = None,
    ) -> None:
        from .system import DEFAULT_DRIVES

        self.params = params
        self.drives = validate_drives(tuple(drives) if drives else DEFAULT_DRIVES)
        self.h0 = np.ascontiguousarray(static_hamiltonian_2q(params))
        nc = len(self.drives)
        self.bmats = np.empty((nc, DIM_2Q, DIM_2Q), dtype=complex)
        self.deltas_rad = np.empty(nc, dtype=float)
        self.xy = np.empty((nc, 2, DIM_2Q, DIM_2Q), dtype=complex)
        for c, ch in enumerate(self.drives):
            bc = drive_coupling(params, ch)
            self.bmats[c] = bc
            self.deltas_rad[c] = params.frame_delta_mhz(ch) * RAD_PER_NS_PER_MHZ
            self.xy[c, 0] = bc + bc.conj().T
            self.xy[c, 1] = 1j * (bc - bc.conj().T)
        self.bdags = np.ascontiguousarray(self.bmats.conj().transpose(0, 2, 1))
        self._phase_mask = np.array(
            [ch.carries_frame_phase for ch in self.drives], dtype=bool
        )

    # -- Hamiltonian assembly ------------------------------------------------

    def h_of_amps(self, amps: np.ndarray) -> np.ndarray:
        """Phase-free Hamiltonian for one amplitude row (rad/ns)."""
        amps = np.asarray(amps, dtype=complex)
        h = self.h0 + np.einsum("c,cij->ij", amps.real, self.xy[:, 0])
        h = h + np.einsum("c,cij->ij", amps.imag, self.xy[:, 1])
        return np.ascontiguousarray(h)

    def h_stack(self, tick_amps: np.ndarray) -> np.ndarray:
        """Phase-free Hamiltonians for a (ticks, channels) amplitude block."""
        tick_amps = np.asarray(tick_amps, dtype=complex)
        h = (
            self.h0[None, :, :]
            + np.einsum("tc,cij->tij", tick_amps.real, self.xy[:, 0])
            + np.einsum("tc,cij->tij", tick_amps.imag, self.xy[:, 1])
        )
        return np.ascontiguousarray(h)

    def _needs_tdse(self, tick_amps: np.ndarray, frame_phases: bool) -> np.ndarray:
        """Per-tick flag: does any phase-carrying channel drive this tick?"""
        if not frame_phases or not self._phase_mask.any():
            return np.zeros(tick_amps.shape[0], dtype=bool)
        return np.abs(tick_amps[:, self._phase_mask]).sum(axis=1) > 0.0

    # -- propagation ---------------------------------------------------------

    def segment_propagator(
        self,
        amps: np.ndarray,
        ticks: int,
        t0_tick: int = 0,
        frame_phases: bool = True,
        substeps: int = DEFAULT_SUBSTEPS,
    ) -> Propagator:
        """Propagator for one constant-amplitude segment of ``ticks`` ticks."""
        amps = np.asarray(amps, dtype=complex)
        t0 = t0_tick * DT_NS
        dur = ticks * DT_NS
        phase_active = frame_phases and bool(
            np.abs(amps[self._phase_mask]).sum() > 0.0
        )
        if not phase_active:
            return propagate_tise(self.h_of_amps(amps), dur, t0)
        tick_amps = np.broadcast_to(amps, (ticks, amps.shape[0]))
        return self._tdse(np.ascontiguousarray(tick_amps), t0, substeps)

    def _tdse(self, tick_amps: np.ndarray, t0: float, substeps: int) -> Propagator:
        u = kernels.rk4_chain(
            self.h0,
            self.bmats,
            self.bdags,
            self.deltas_rad,
            tick_amps,
            DT_NS,
            t0,
            substeps,
        )
        defect = kernels.unitarity_defect(u)
        reunit = False
        if defect > TDSE_UNITARITY_TOL:
            logger.warning(
                "TDSE drifted from unitarity by %.2e (> %.0e); applying polar "
                "re-unitarization. Consider more substeps (current: %d/tick).",
                defect,
                TDSE_UNITARITY_TOL,
                substeps,
            )
            u = kernels.polar_unitary(u)
            reunit = True
        dur = tick_amps.shape[0] * DT_NS
        return Propagator(
            matrix=u,
            t_start_ns=t0,
            t_end_ns=t0 + dur,
            method="tdse",
            substeps=substeps,
            unitarity_defect=defect,
            reunitarized=reunit,
        )

    def propagate(
        self,
        pulse: PwcPulse,
        frame_phases: bool = True,
        substeps: int = DEFAULT_SUBSTEPS,
    ) -> Propagator:
        """Full-pulse propagator, mixing exact and RK4 tick runs as needed."""
        tick_amps = pulse.tick_amp_matrix(self.drives)
        nt = tick_amps.shape[0]
        tdse_mask = self._needs_tdse(tick_amps, frame_phases)
        u = np.eye(DIM_2Q, dtype=complex)
        max_defect = 0.0
        reunit = False
        methods = set()
        k = 0
        while k < nt:
            j = k + 1
            while j < nt and tdse_mask[j] == tdse_mask[k]:
                j += 1
            block = tick_amps[k:j]
            if tdse_mask[k]:
                p = self._tdse(np.ascontiguousarray(block), k * DT_NS, substeps)
                max_defect = max(max_defect, p.unitarity_defect)
                reunit = reunit or p.reunitarized
                methods.add("tdse")
                u = p.matrix @ u
            else:
                # collapse consecutive identical amplitude rows into one expm
                i = 0
                while i < block.shape[0]:
                    m = i + 1
                    while m < block.shape[0] and np.array_equal(block[m], block[i]):
                        m += 1
                    h = self.h_of_amps(block[i])
                    u = kernels.expm_herm(h, (m - i) * DT_NS) @ u
                    i = m
                methods.add("tise")
            k = j
        defect = kernels.unitarity_defect(u)
        tol = TDSE_UNITARITY_TOL if "tdse" in methods else TISE_UNITARITY_TOL
        if defect > tol:
            if "tdse" in methods:
                logger.warning(
                    "pulse propagator drifted %.2e from unitarity; polar projecting",
                    defect,
                )
                u = kernels.polar_unitary(u)
                reunit = True
            else:
                raise UnitarityError(
                    f"TISE product defect {defect:.2e} exceeds {tol:.0e}"
                )
        return Propagator(
            matrix=u,
            t_start_ns=0.0,
            t_end_ns=nt * DT_NS,
            method="+".join(sorted(methods)) if methods else "tise",
            substeps=substeps if "tdse" in methods else 0,
            unitarity_defect=max(defect, max_defect),
            reunitarized=reunit,
        )

    def propagate_cumulative(
        self,
        pulse: PwcPulse,
        frame_phases: bool = True,
        substeps: int = DEFAULT_SUBSTEPS,
    ) -> tuple[Propagator, np.ndarray]:
        """Full-pulse propagator plus every per-tick cumulative unitary."""
        tick_amps = pulse.tick_amp_matrix(self.drives)
        nt = tick_amps.shape[0]
        tdse_mask = self._needs_tdse(tick_amps, frame_phases)
        cums = np.empty((nt, DIM_2Q, DIM_2Q), dtype=complex)
        u = np.eye(DIM_2Q, dtype=complex)
        max_defect = 0.0
        k = 0
        while k < nt:
            j = k + 1
            while j < nt and tdse_mask[j] == tdse_mask[k]:
                j += 1
            block = np.ascontiguousarray(tick_amps[k:j])
            if tdse_mask[k]:
                segs = kernels.rk4_chain_cum(
                    self.h0,
                    self.bmats,
                    self.bdags,
                    self.deltas_rad,
                    block,
                    DT_NS,
                    k * DT_NS,
                    substeps,
                )
            else:
                segs = kernels.chain_unitary_cum(self.h_stack(block), DT_NS)
            cums[k:j] = segs @ u
            u = cums[j - 1]
            k = j
        defect = kernels.unitarity_defect(u)
        max_defect = max(max_defect, defect)
        reunit = False
        has_tdse = bool(tdse_mask.any())
        tol = TDSE_UNITARITY_TOL if has_tdse else TISE_UNITARITY_TOL
        if defect > tol:
            if not has_tdse:
                raise UnitarityError(
                    f"TISE product defect {defect:.2e} exceeds {tol:.0e}"
                )
            logger.warning(
                "cumulative propagator drifted %.2e from unitarity; polar projecting",
                defect,
            )
            u = kernels.polar_unitary(u)
            reunit = True
        prop = Propagator(
            matrix=u,
            t_start_ns=0.0,
            t_end_ns=nt * DT_NS,
            method="tdse" if has_tdse else "tise",
            substeps=substeps if has_tdse else 0,
            unitarity_defect=max_defect,
            reunitarized=reunit,
        )
        return prop, cums

    def evolve_basis(
        self,
        pulse: PwcPulse,
        columns: Sequence[int] = QUBIT_IDX_2Q,
        frame_phases: bool = True,
        substeps: int = DEFAULT_SUBSTEPS,
        per: str = "segment",
    ) -> np.ndarray:
        """Trajectories of selected basis columns at segment or tick boundaries.

        Returns (steps, 9, len(columns)); norms stay 1 to numerical accuracy
        because every factor applied is unitary.
        """
        if per not in ("segment", "tick"):
            raise ValueError("per must be 'segment' or 'tick'")
        _, cums = self.propagate_cumulative(pulse, frame_phases, substeps)
        cols = np.asarray(columns, dtype=int)
        if per == "tick":
            traj = cums[:, :, cols]
        else:
            stride = pulse.grid.ticks_per_segment
            traj = cums[stride - 1 :: stride][:, :, cols]
        norms = np.linalg.norm(traj, axis=1)
        err = float(np.abs(norms - 1.0).max())
        if err > 1e-9:
            raise UnitarityError(f"evolved basis states lost norm by {err:.2e}")
        return traj


def propagate_tdse(
    params: SystemParams,
    drives: Sequence[DriveChannel],
    tick_amps: np.ndarray,
    t0_tick: int = 0,
    substeps: int = DEFAULT_SUBSTEPS,
) -> Propagator:
    """RK4 propagator for a per-tick amplitude block with frame phases on."""
    sim = TwoTransmonSim(params, drives)
    return sim._tdse(
        np.ascontiguousarray(tick_amps, dtype=complex), t0_tick * DT_NS, substeps
    )


# ---------------------------------------------------------------------------
# effective cross-resonance rate


@dataclass
class ZxRate:
    """Block-diagonalization summary of the constant-drive CR Hamiltonian.

    Coefficients follow the convention H_eff = sum_AB omega_AB (A x B)/2, so
    a pure ZX term needs omega_zx * tau = pi/2 for a ZX(pi/2) gate.
    ``omega_zx_mhz`` is the conditional target rotation rate read in the
    dressed control basis (see :func:`effective_zx_rate`); ``h_eff_rad`` is
    the bare-basis effective block, useful for ZZ and Stark diagnostics.
    """

    omega_zx_mhz: float
    tau_ns: float
    h_eff_rad: np.ndarray
    subspace_weights: np.ndarray

    def pauli_coefficient_mhz(self, i: int, j: int) -> float:
        """Bare-basis coefficient omega_AB in MHz."""
        w = np.trace(self.h_eff_rad @ pauli_kron(i, j)).real / 2.0
        return float(w / RAD_PER_NS_PER_MHZ)


def block_diagonalize(
    h: np.ndarray,
    subspace: Sequence[int] = QUBIT_IDX_2Q,
    degeneracy_tol: float = 0.05,
) -> tuple[np.ndarray, np.ndarray]:
    """Least-action block diagonalization onto a bare-state subspace.

    Selects the eigenvectors whose weight in the subspace is largest, then
    maps them back onto the bare subspace basis through the polar factor of
    the overlap block, giving the effective Hamiltonian closest to the
    original basis labeling.  Returns (h_eff, per-eigenvector weights).
    """
    h = np.asarray(h)
    w, v = np.linalg.eigh(h)
    rows = np.asarray(subspace, dtype=int)
    weights = (np.abs(v[rows, :]) ** 2).sum(axis=0)
    order = np.argsort(weights)[::-1]
    m = len(rows)
    gap = weights[order[m - 1]] - weights[order[m]]
    if gap < degeneracy_tol:
        raise DegenerateSubspaceError(
            "subspace assignment is ambiguous: eigenvector weights "
            f"{weights[order[m - 1]]:.4f} (rank {m}) and {weights[order[m]]:.4f} "
            f"(rank {m + 1}) are within {degeneracy_tol}; the dressed states have "
            "crossed out of the computational subspace",
            weights=weights,
        )
    sel = np.sort(order[:m])
    x = v[np.ix_(rows, sel)]
    uu, _, vh = np.linalg.svd(x)
    ww = uu @ vh
    h_eff = ww @ np.diag(w[sel]) @ ww.conj().T
    return h_eff, weights


def effective_zx_rate(
    params: SystemParams,
    omega_bar_mhz: float,
    degeneracy_tol: float = 0.05,
) -> ZxRate:
    """ZX rate of the constant cross-resonance drive at average Rabi rate
    ``omega_bar_mhz`` on the u01 channel (no frame phases in this frame).

    After block-diagonalizing onto the computational subspace, the control
    qubit still sits in a tilted local field (detuned Rabi drive), so the
    bare-basis ZX entry alone is not the conditional rotation rate.  The
    control basis is rotated to diagonalize its local field; the entangling
    rate is then the X-Y plane magnitude of the conditional target vector,

        omega_ZX = sqrt(omega_Z'X^2 + omega_Z'Y^2),

    which reduces to the textbook second-order expression
    -(J Omega/delta0) * alpha0/(alpha0+delta0) at small drive.  The returned
    ``tau_ns`` is the ZX(pi/2) gate time (pi/2)/omega_ZX, sign fixed positive.
    """
    if omega_bar_mhz <= 0:
        raise ValueError("omega_bar_mhz must be positive")
    k = RAD_PER_NS_PER_MHZ
    h = static_hamiltonian_2q(params) + 0.5 * k * omega_bar_mhz * (
        B0 + B0.conj().T
    )
    h_eff, weights = block_diagonalize(h, QUBIT_IDX_2Q, degeneracy_tol)

    from .gates import PAULIS, I2

    # local field of the control qubit, components over (X, Y, Z)
    field = np.array(
        [np.trace(h_eff @ np.kron(PAULIS[i], I2)).real / 2.0 for i in (1, 2, 3)]
    )
    norm = np.linalg.norm(field)
    if norm > 0:
        fw, fv = np.linalg.eigh(
            field[0] * PAULIS[1] + field[1] * PAULIS[2] + field[2] * PAULIS[3]
        )
        # columns ordered so R^dag (a.sigma) R = +|a| Z
        r0 = fv[:, ::-1]
        h_dressed = np.kron(r0, I2).conj().T @ h_eff @ np.kron(r0, I2)
    else:
        h_dressed = h_eff
    zx = float(np.trace(h_dressed @ pauli_kron(3, 1)).real / 2.0)
    zy = float(np.trace(h_dressed @ pauli_kron(3, 2)).real / 2.0)
    omega_zx_rad = float(np.hypot(zx, zy))
    if omega_zx_rad == 0.0:
        raise DegenerateSubspaceError(
            "ZX coefficient vanished; block diagonalization lost the drive",
            weights=weights,
        )
    tau = (np.pi / 2.0) / omega_zx_rad
    return ZxRate(
        omega_zx_mhz=omega_zx_rad / k,
        tau_ns=tau,
        h_eff_rad=h_eff,
        subspace_weights=weights,
    )
