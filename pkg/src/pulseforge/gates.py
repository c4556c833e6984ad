"""Target gates, Pauli algebra and qubit/qutrit embedding helpers.

Basis conventions used everywhere in the package:

* single qutrit: levels (0, 1, 2); the qubit lives on (0, 1)
* two qutrits: product states ordered 00, 01, 02, 10, 11, 12, 20, 21, 22,
  i.e. index = 3 * n0 + n1 with transmon 0 the left (kron-first) factor
* the two-qubit computational subspace therefore sits at indices (0, 1, 3, 4)

Rotation conventions: a two-qubit unitary written as
``exp(-i sum_ij theta_ij P_i x P_j / 2)`` has rotation angles theta_ij, so
``ZX(pi/2) = exp(-i (pi/4) Z x X)`` and CNOT is locally equivalent to it.
"""

from __future__ import annotations

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)

PAULIS = (I2, X, Y, Z)
PAULI_LABELS = ("I", "X", "Y", "Z")

DIM_1Q = 3
DIM_2Q = 9
QUBIT_IDX_1Q = (0, 1)
QUBIT_IDX_2Q = (0, 1, 3, 4)

STATE_LABELS_2Q = tuple(f"{a}{b}" for a in range(3) for b in range(3))


def pauli_kron(i: int, j: int) -> np.ndarray:
    """P_i x P_j on two qubits, indices into (I, X, Y, Z)."""
    return np.kron(PAULIS[i], PAULIS[j])


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta: float) -> np.ndarray:
    return np.array(
        [[np.exp(-1j * theta / 2), 0], [0, np.exp(1j * theta / 2)]], dtype=complex
    )


def ix_gate(theta: float = np.pi / 2) -> np.ndarray:
    """I on the first qubit, X rotation by theta on the second."""
    return np.kron(I2, rx(theta))


def zx_gate(theta: float = np.pi / 2) -> np.ndarray:
    """exp(-i theta/2 Z x X), the cross-resonance entangling rotation."""
    zx = pauli_kron(3, 1)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return c * np.eye(4, dtype=complex) - 1j * s * zx


def cnot_gate() -> np.ndarray:
    """CNOT with qubit 0 as control, qubit 1 as target."""
    u = np.zeros((4, 4), dtype=complex)
    u[0, 0] = u[1, 1] = u[2, 3] = u[3, 2] = 1.0
    return u


TARGETS_2Q = {
    "ix": ix_gate,
    "zx": zx_gate,
    "cnot": cnot_gate,
}


def target_2q(name: str) -> np.ndarray:
    """Look up a named two-qubit target gate (case-insensitive)."""
    key = name.strip().lower()
    if key not in TARGETS_2Q:
        raise ValueError(f"unknown target gate {name!r}; known: {sorted(TARGETS_2Q)}")
    return TARGETS_2Q[key]()


def embed_1q(u2: np.ndarray) -> np.ndarray:
    """Embed a 2x2 qubit unitary into the 3-level space, identity on level 2."""
    u = np.eye(DIM_1Q, dtype=complex)
    u[:2, :2] = u2
    return u


def embed_2q(u4: np.ndarray) -> np.ndarray:
    """Embed a 4x4 two-qubit unitary into the 9-level space.

    Acts as the identity on every state with a leaked (level-2) component.
    """
    u = np.eye(DIM_2Q, dtype=complex)
    idx = np.array(QUBIT_IDX_2Q)
    u[np.ix_(idx, idx)] = u4
    return u


def qubit_block_1q(u3: np.ndarray) -> np.ndarray:
    """The (not necessarily unitary) qubit-subspace block of a qutrit operator."""
    return np.asarray(u3)[:2, :2].copy()


def qubit_block_2q(u9: np.ndarray) -> np.ndarray:
    """The two-qubit computational block of a two-qutrit operator."""
    idx = np.array(QUBIT_IDX_2Q)
    return np.asarray(u9)[np.ix_(idx, idx)].copy()


def qubit_projector_2q() -> np.ndarray:
    """Diagonal projector onto the two-qubit computational subspace (dim 9)."""
    p = np.zeros((DIM_2Q, DIM_2Q), dtype=complex)
    for i in QUBIT_IDX_2Q:
        p[i, i] = 1.0
    return p
