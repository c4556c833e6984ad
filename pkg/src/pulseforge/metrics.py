"""Figures of merit for simulated gates.

Average gate fidelity (Haar-averaged state overlap) with optional virtual-Z
correction, worst-case fidelity over initial states, leakage out of the
computational subspace, linear entropy / entangling power, and time-resolved
rotation angles with branch-cut selection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from .errors import NumericalError
from .gates import (
    PAULI_LABELS,
    PAULIS,
    QUBIT_IDX_1Q,
    QUBIT_IDX_2Q,
    pauli_kron,
)

logger = logging.getLogger(__name__)

__all__ = [
    "VirtualZAngles",
    "RotationAngleTrace",
    "overlap_matrix",
    "qubit_block",
    "avg_gate_fidelity",
    "virtual_z_correct",
    "virtual_z_matrix",
    "corrected_fidelity",
    "leakage",
    "linear_entropy",
    "avg_linear_entropy",
    "pauli_product_states",
    "entangling_product_states",
    "worst_case_fidelity",
    "rotation_angles",
]


def _as_matrix(u) -> np.ndarray:
    return np.asarray(getattr(u, "matrix", u), dtype=complex)


def qubit_block(u) -> np.ndarray:
    """Extract the computational-subspace block of a (possibly leaky) unitary.

    Accepts 9x9 (two qutrits), 3x3 (one qutrit), or an already-projected
    4x4 / 2x2 matrix, which is returned as is.
    """
    m = _as_matrix(u)
    if m.shape == (9, 9):
        idx = np.array(QUBIT_IDX_2Q)
        return m[np.ix_(idx, idx)]
    if m.shape == (3, 3):
        idx = np.array(QUBIT_IDX_1Q)
        return m[np.ix_(idx, idx)]
    if m.shape in ((4, 4), (2, 2)):
        return m
    raise ValueError(f"cannot take a qubit block of shape {m.shape}")


def overlap_matrix(u, u_target: np.ndarray) -> np.ndarray:
    """M = U_qubit . U_target^dag, the object all fidelities are built from."""
    uq = qubit_block(u)
    t = np.asarray(u_target, dtype=complex)
    if t.shape != uq.shape:
        raise ValueError(f"target shape {t.shape} does not match qubit block {uq.shape}")
    return uq @ t.conj().T


def avg_gate_fidelity(m: np.ndarray) -> float:
    """Average gate fidelity from the overlap matrix.

    F = [Tr(M M^dag) + |Tr M|^2] / (n (n + 1)), valid for n in {2, 4}.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"overlap matrix must be square, got {m.shape}")
    n = m.shape[0]
    if n not in (2, 4):
        raise ValueError(f"overlap matrix must be 2x2 or 4x4, got {n}x{n}")
    return float(
        (np.trace(m @ m.conj().T).real + abs(np.trace(m)) ** 2) / (n * (n + 1))
    )


# ---------------------------------------------------------------------------
# virtual Z correction


@dataclass(frozen=True)
class VirtualZAngles:
    """Frame-rotation angles, radians in [-pi, pi]."""

    theta0: float
    theta1: float = 0.0
    degenerate0: bool = False
    degenerate1: bool = False
    ordering: str = "01"

    def as_tuple(self) -> tuple[float, float]:
        return (self.theta0, self.theta1)


def virtual_z_matrix(theta0: float, theta1: float = 0.0, n: int = 4) -> np.ndarray:
    """diag phase corrections: Z frame rotation on each qubit."""
    if n == 2:
        return np.diag([1.0, np.exp(1j * theta0)])
    if n == 4:
        return np.diag(
            [1.0, np.exp(1j * theta1), np.exp(1j * theta0), np.exp(1j * (theta0 + theta1))]
        )
    raise ValueError(f"n must be 2 or 4, got {n}")


def _wrap(theta: float) -> float:
    return float((theta + np.pi) % (2 * np.pi) - np.pi)


def _single_angle(m: np.ndarray, which: int) -> tuple[float, bool]:
    """Closed-form angle maximizing |Tr| for one Z rotation.

    The stationarity condition tan(theta) = -Im(script_M)/Re(script_M) has two
    solutions; the second-derivative sign selects the maximizing one.  A zero
    script_M leaves the angle undetermined: return 0 and flag it.
    """
    if m.shape[0] == 2:
        mm = np.conj(m[0, 0]) * m[1, 1]
    elif which == 0:
        mm = np.conj(m[0, 0] + m[1, 1]) * (m[2, 2] + m[3, 3])
    else:
        mm = np.conj(m[0, 0] + m[2, 2]) * (m[1, 1] + m[3, 3])
    if abs(mm) < 1e-300:
        return 0.0, True
    theta = float(np.arctan2(-mm.imag, mm.real))
    if np.sin(theta) * mm.imag >= np.cos(theta) * mm.real:
        theta = theta - np.sign(theta) * np.pi if theta != 0.0 else np.pi
    return theta, False


def _apply_z(m: np.ndarray, which: int, theta: float) -> np.ndarray:
    n = m.shape[0]
    if n == 2 or which == 0:
        vz = virtual_z_matrix(theta, 0.0, n)
    else:
        vz = virtual_z_matrix(0.0, theta, n)
    return vz @ m


def _sequential(m: np.ndarray, order: tuple[int, ...], sweeps: int):
    totals = [0.0, 0.0]
    flags = [False, False]
    cur = m
    for _ in range(sweeps):
        for which in order:
            theta, degenerate = _single_angle(cur, which)
            cur = _apply_z(cur, which, theta)
            totals[which] += theta
            flags[which] = flags[which] or degenerate
    return cur, totals, flags


def virtual_z_correct(
    m: np.ndarray, order: str = "auto", sweeps: int = 2
) -> tuple[VirtualZAngles, float]:
    """Near-optimal virtual-Z correction of an overlap matrix.

    One angle is optimized at a time in closed form; `sweeps` coordinate
    passes are applied.  order "01" fixes theta0 first within each sweep,
    "10" the reverse, and "auto" runs both orderings and keeps the better
    result (preferring "01" on ties, since more Z error accumulates on the
    first transmon).  Returns the angles and the corrected fidelity, which
    never falls below the uncorrected one.
    """
    m = np.asarray(m, dtype=complex)
    n = m.shape[0]
    if m.shape != (n, n) or n not in (2, 4):
        raise ValueError(f"overlap matrix must be 2x2 or 4x4, got {m.shape}")
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    if n == 2:
        theta, degenerate = _single_angle(m, 0)
        f = avg_gate_fidelity(_apply_z(m, 0, theta))
        return VirtualZAngles(theta, 0.0, degenerate, False, "01"), f

    if order not in ("auto", "01", "10"):
        raise ValueError(f"order must be 'auto', '01' or '10', got {order!r}")
    orderings = {"01": ((0, 1),), "10": ((1, 0),), "auto": ((0, 1), (1, 0))}[order]
    best = None
    for o in orderings:
        cur, totals, flags = _sequential(m, o, sweeps)
        f = avg_gate_fidelity(cur)
        if best is None or f > best[0] + 1e-15:
            name = "01" if o == (0, 1) else "10"
            best = (f, totals, flags, name)
    f, totals, flags, name = best
    angles = VirtualZAngles(_wrap(totals[0]), _wrap(totals[1]), flags[0], flags[1], name)
    return angles, f


def corrected_fidelity(u, u_target: np.ndarray, order: str = "auto", sweeps: int = 2) -> float:
    """Average gate fidelity after virtual-Z correction; the standard score."""
    _, f = virtual_z_correct(overlap_matrix(u, u_target), order=order, sweeps=sweeps)
    return f


# ---------------------------------------------------------------------------
# leakage


def leakage(u) -> float:
    """Population escaping the computational subspace.

    L = Tr[I2 U (I1 / dim chi1) U^dag] for the maximally mixed qubit-subspace
    input; dim 9 (two qutrits) or dim 3 (one qutrit).
    """
    m = _as_matrix(u)
    if m.shape == (9, 9):
        idx = QUBIT_IDX_2Q
    elif m.shape == (3, 3):
        idx = QUBIT_IDX_1Q
    else:
        raise ValueError(f"leakage needs a 9x9 or 3x3 unitary, got {m.shape}")
    cols = m[:, list(idx)]  # U applied to each computational basis state
    retained = (np.abs(cols[list(idx), :]) ** 2).sum()
    return float(1.0 - retained / len(idx))


# ---------------------------------------------------------------------------
# entanglement


def linear_entropy(state: np.ndarray) -> float:
    """Linear entropy of one qubit's reduced state, for a two-qubit pure state.

    Dim-9 states are projected onto the computational subspace and
    renormalized first; dim-4 states are used directly.
    S = 1 - Tr[(Tr_A rho)^2], in [0, 0.5].
    """
    psi = np.asarray(state, dtype=complex).reshape(-1)
    if psi.shape == (9,):
        psi = psi[list(QUBIT_IDX_2Q)]
        norm = np.linalg.norm(psi)
        if norm < 1e-6:
            raise NumericalError(
                f"qubit-subspace norm {norm:.2e} too small for a meaningful reduced state"
            )
        psi = psi / norm
    elif psi.shape == (4,):
        psi = psi / np.linalg.norm(psi)
    else:
        raise ValueError(f"state must have dim 9 or 4, got {psi.shape}")
    s = np.linalg.svd(psi.reshape(2, 2), compute_uv=False)
    return float(1.0 - np.sum(s**4))


_EIGENSTATES_1Q = {
    "z+": np.array([1.0, 0.0], dtype=complex),
    "z-": np.array([0.0, 1.0], dtype=complex),
    "x+": np.array([1.0, 1.0], dtype=complex) / np.sqrt(2),
    "x-": np.array([1.0, -1.0], dtype=complex) / np.sqrt(2),
    "y+": np.array([1.0, 1.0j], dtype=complex) / np.sqrt(2),
    "y-": np.array([1.0, -1.0j], dtype=complex) / np.sqrt(2),
}


def pauli_product_states() -> list[tuple[str, str, np.ndarray]]:
    """All 36 products of single-qubit Pauli eigenstates, as dim-4 states."""
    out = []
    for l0, s0 in _EIGENSTATES_1Q.items():
        for l1, s1 in _EIGENSTATES_1Q.items():
            out.append((l0, l1, np.kron(s0, s1)))
    return out


def entangling_product_states() -> list[tuple[str, str, np.ndarray]]:
    """The 16 product inputs a CNOT-class gate drives to linear entropy 0.5.

    Control on the Z-conditioning qubit must have <Z> = 0 (x/y eigenstates);
    the target must have <X> = 0 (z/y eigenstates).
    """
    return [
        (l0, l1, s)
        for l0, l1, s in pauli_product_states()
        if l0[0] in "xy" and l1[0] in "zy"
    ]


def avg_linear_entropy(u) -> float:
    """Mean linear entropy over the 16 maximally-entangling product inputs."""
    m = _as_matrix(u)
    if m.shape == (9, 9):
        idx = list(QUBIT_IDX_2Q)

        def run(psi4):
            psi9 = np.zeros(9, dtype=complex)
            psi9[idx] = psi4
            return linear_entropy(m @ psi9)

    elif m.shape == (4, 4):

        def run(psi4):
            return linear_entropy(m @ psi4)

    else:
        raise ValueError(f"avg_linear_entropy needs a 9x9 or 4x4 matrix, got {m.shape}")
    return float(np.mean([run(s) for _, _, s in entangling_product_states()]))


# ---------------------------------------------------------------------------
# worst-case fidelity (generic multi-start chart minimization)


def _chart_state(x: np.ndarray, n: int) -> np.ndarray:
    """Map 2n-1 real values to a normalized n-dim state (last component real)."""
    psi = np.empty(n, dtype=complex)
    psi[: n - 1] = x[0 : 2 * n - 2 : 2] + 1j * x[1 : 2 * n - 2 : 2]
    psi[n - 1] = x[2 * n - 2]
    norm = np.linalg.norm(psi)
    if norm < 1e-12:
        return np.full(n, 1.0 / np.sqrt(n), dtype=complex)
    return psi / norm


def _state_to_chart(psi: np.ndarray) -> np.ndarray:
    n = psi.shape[0]
    phase = psi[n - 1]
    if abs(phase) > 1e-12:
        psi = psi * np.conj(phase) / abs(phase)
    x = np.empty(2 * n - 1)
    x[0 : 2 * n - 2 : 2] = psi[: n - 1].real
    x[1 : 2 * n - 2 : 2] = psi[: n - 1].imag
    x[2 * n - 2] = psi[n - 1].real
    return x


def worst_case_fidelity(
    u_qubit: np.ndarray,
    u_target: np.ndarray,
    n_starts: int = 16,
    seed: int = 0,
) -> tuple[float, np.ndarray]:
    """Minimum state fidelity |<psi|M|psi>|^2 over pure computational states.

    Multi-start Nelder-Mead over a 3- (n=2) or 7- (n=4) real-parameter chart
    of the state manifold; starts combine eigenvector pairs of M (which hold
    the exact minimum for unitary M) with random states.  Returns the best
    minimum found and the minimizing state.
    """
    m = overlap_matrix(u_qubit, u_target)
    n = m.shape[0]
    rng = np.random.default_rng(seed)

    def fval(psi: np.ndarray) -> float:
        return float(abs(np.vdot(psi, m @ psi)) ** 2)

    def objective(x: np.ndarray) -> float:
        return fval(_chart_state(x, n))

    starts: list[np.ndarray] = []
    w, v = np.linalg.eig(m)
    for i in range(n):
        starts.append(v[:, i])
        for j in range(i + 1, n):
            starts.append((v[:, i] + v[:, j]) / np.linalg.norm(v[:, i] + v[:, j]))
    while len(starts) < n_starts:
        z = rng.normal(size=n) + 1j * rng.normal(size=n)
        starts.append(z / np.linalg.norm(z))

    best_f = np.inf
    best_psi = None
    converged = False
    for psi0 in starts[: max(n_starts, len(starts))]:
        res = minimize(
            objective,
            _state_to_chart(psi0),
            method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 4000},
        )
        if res.fun < best_f:
            best_f = float(res.fun)
            best_psi = _chart_state(res.x, n)
            converged = bool(res.success)
    if not converged:
        logger.warning("worst-case search: best start did not fully converge; returning best found")
    return best_f, best_psi


# ---------------------------------------------------------------------------
# rotation angles with branch-cut selection


@dataclass
class RotationAngleTrace:
    """Time-resolved two-qubit rotation angles theta_ij for P_i x P_j.

    `theta` carries the smoothness-selected branch, `theta_principal` the
    principal matrix log.  theta[II] is a global phase and carries no
    physical meaning.  `branch_flags` marks steps with an eigenphase at the
    branch point; `jump_flags` marks residual theta_ZX jumps above the
    configured threshold (outliers are flagged, not repaired).
    """

    times_ns: np.ndarray
    theta: np.ndarray  # (nt, 4, 4)
    theta_principal: np.ndarray  # (nt, 4, 4)
    branches: np.ndarray  # (nt, 9) integer winding offsets
    branch_flags: np.ndarray  # (nt,) bool
    jump_flags: np.ndarray  # (nt,) bool
    labels: tuple = PAULI_LABELS

    def angle(self, i: int, j: int, principal: bool = False) -> np.ndarray:
        return (self.theta_principal if principal else self.theta)[:, i, j]


_COMBO_CACHE: dict[int, np.ndarray] = {}


def _combos(r: int) -> np.ndarray:
    if r not in _COMBO_CACHE:
        grids = np.meshgrid(*([np.array([-1, 0, 1])] * r), indexing="ij")
        _COMBO_CACHE[r] = np.stack([g.ravel() for g in grids], axis=1)
    return _COMBO_CACHE[r]


def _theta_from_hq(hq: np.ndarray) -> np.ndarray:
    th = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            th[i, j] = np.trace(hq @ pauli_kron(i, j)).real / 2.0
    return th


def rotation_angles(
    trace,
    times_ns: Sequence[float] | None = None,
    jump_threshold: float = 0.5,
    branch_tol: float = 1e-9,
) -> RotationAngleTrace:
    """Extract theta_ij(t) from a time-ordered trace of cumulative unitaries.

    Per step the generator i ln U is taken by eigendecomposition, projected
    onto the qubit subspace, and expanded in the Pauli product basis with
    U = exp(-i sum theta_ij P_i P_j / 2).  Integer winding offsets
    n_k in {-1, 0, +1} per eigenphase are brute-force searched to make
    theta_ZX continuous step to step (ties to fewer windings); only
    eigenvectors overlapping the qubit subspace enter the search.
    """
    if times_ns is None:
        times_ns = [getattr(p, "t_end_ns") for p in trace]
    us = np.stack([_as_matrix(p) for p in trace])
    if us.shape[1:] != (9, 9):
        raise ValueError(f"rotation_angles expects 9x9 unitaries, got {us.shape[1:]}")
    nt = us.shape[0]
    times = np.asarray(list(times_ns), dtype=float)

    idx = list(QUBIT_IDX_2Q)
    zx4 = pauli_kron(3, 1)

    theta = np.empty((nt, 4, 4))
    theta_p = np.empty((nt, 4, 4))
    branches = np.zeros((nt, 9), dtype=int)
    branch_flags = np.zeros(nt, dtype=bool)
    jump_flags = np.zeros(nt, dtype=bool)

    prev_zx = 0.0
    for k in range(nt):
        tmat, z = scipy.linalg.schur(us[k], output="complex")
        phases = np.angle(np.diag(tmat))
        branch_flags[k] = bool(np.any(np.abs(np.abs(phases) - np.pi) < branch_tol))

        vq = z[idx, :]  # qubit components of each eigenvector, (4, 9)
        h0q = (vq * (-phases)) @ vq.conj().T
        th0 = _theta_from_hq(h0q)
        theta_p[k] = th0

        # winding sensitivity of theta_ZX per eigenvector
        c = np.real(np.einsum("ik,ij,jk->k", vq.conj(), zx4, vq)) / 2.0
        relevant = np.flatnonzero(np.linalg.norm(vq, axis=0) ** 2 > 1e-10)
        cr = c[relevant]
        combos = _combos(len(relevant))
        zx_candidates = th0[3, 1] + 2.0 * np.pi * (combos @ cr)
        dist = np.abs(zx_candidates - prev_zx)
        order = np.lexsort((np.abs(combos).sum(axis=1), np.round(dist / 1e-12)))
        pick = combos[order[0]]

        n_full = np.zeros(9, dtype=int)
        n_full[relevant] = pick
        branches[k] = n_full
        hq = (vq * (-phases + 2.0 * np.pi * n_full)) @ vq.conj().T
        theta[k] = _theta_from_hq(hq)
        if abs(theta[k, 3, 1] - prev_zx) > jump_threshold:
            jump_flags[k] = True
        prev_zx = theta[k, 3, 1]

    return RotationAngleTrace(times, theta, theta_p, branches, branch_flags, jump_flags)


def reconstruct_qubit_unitary(theta: np.ndarray) -> np.ndarray:
    """exp(-i sum theta_ij P_i P_j / 2) from one step's angle matrix."""
    h = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        for j in range(4):
            h += theta[i, j] * pauli_kron(i, j) / 2.0
    return scipy.linalg.expm(-1j * h)
