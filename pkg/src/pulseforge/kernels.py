"""Hot propagation kernels, shared between the numba and numpy backends.

Every function here is written in the numba ``nopython`` subset of numpy and
is decorated by :func:`pulseforge.backend.jit`, so the exact same code runs
jit-compiled or interpreted depending on ``PULSEFORGE_BACKEND``.

Conventions: Hamiltonians are Hermitian ``complex128`` matrices in angular
units of rad/ns, times and durations are in ns, and propagators solve
``dU/dt = -i H(t) U`` with ``U(t0) = 1``.
"""

from __future__ import annotations

import numpy as np

from .backend import jit


@jit
def expm_herm(h, t):
    """exp(-i h t) for Hermitian h, via eigendecomposition.

    Exact up to the eigensolver, so it is the reference propagator for any
    interval on which the Hamiltonian is constant.
    """
    w, v = np.linalg.eigh(h)
    phases = np.exp(-1j * t * w)
    return (v * phases) @ v.conj().T


@jit
def chain_unitary(h_stack, dt):
    """Product of per-tick exponentials: U = exp(-i h[N-1] dt) ... exp(-i h[0] dt)."""
    n = h_stack.shape[1]
    u = np.eye(n, dtype=np.complex128)
    for k in range(h_stack.shape[0]):
        w, v = np.linalg.eigh(h_stack[k])
        uk = (v * np.exp(-1j * dt * w)) @ v.conj().T
        u = uk @ u
    return u


@jit
def chain_unitary_cum(h_stack, dt):
    """Like :func:`chain_unitary` but returns every cumulative product.

    ``out[k]`` is the propagator from the chain start through tick ``k``
    inclusive, so ``out[-1]`` equals :func:`chain_unitary`.
    """
    nt = h_stack.shape[0]
    n = h_stack.shape[1]
    out = np.empty((nt, n, n), dtype=np.complex128)
    u = np.eye(n, dtype=np.complex128)
    for k in range(nt):
        w, v = np.linalg.eigh(h_stack[k])
        uk = (v * np.exp(-1j * dt * w)) @ v.conj().T
        u = uk @ u
        out[k] = u
    return out


@jit
def chain_states(h_stack, dt, psi0):
    """Evolve a (n, m) block of state columns through the tick chain.

    Returns the (nt, n, m) trajectory after each tick.
    """
    nt = h_stack.shape[0]
    n = h_stack.shape[1]
    m = psi0.shape[1]
    out = np.empty((nt, n, m), dtype=np.complex128)
    psi = psi0.astype(np.complex128).copy()
    for k in range(nt):
        w, v = np.linalg.eigh(h_stack[k])
        uk = (v * np.exp(-1j * dt * w)) @ v.conj().T
        psi = uk @ psi
        out[k] = psi
    return out


@jit
def _ham_at(h0, bmats, bdags, deltas, arow, t):
    """H(t) = h0 + sum_c [a_c e^{i delta_c t} B_c + h.c.] at one instant."""
    h = h0.copy()
    for c in range(bmats.shape[0]):
        z = arow[c] * np.exp(1j * deltas[c] * t)
        h = h + z * bmats[c] + np.conj(z) * bdags[c]
    return h


@jit
def rk4_chain(h0, bmats, bdags, deltas, amps, dt, t0, substeps):
    """Classic fixed-step RK4 on the unitary across a tick chain.

    ``amps`` has one complex amplitude row per tick; within a tick the
    amplitudes are constant and only the frame phases e^{i delta_c t} vary.
    ``substeps`` RK4 steps are taken per tick.
    """
    n = h0.shape[0]
    u = np.eye(n, dtype=np.complex128)
    hs = dt / substeps
    for k in range(amps.shape[0]):
        tk = t0 + k * dt
        arow = amps[k]
        for s in range(substeps):
            t = tk + s * hs
            h1 = _ham_at(h0, bmats, bdags, deltas, arow, t)
            h2 = _ham_at(h0, bmats, bdags, deltas, arow, t + 0.5 * hs)
            h4 = _ham_at(h0, bmats, bdags, deltas, arow, t + hs)
            k1 = -1j * (h1 @ u)
            k2 = -1j * (h2 @ (u + (0.5 * hs) * k1))
            k3 = -1j * (h2 @ (u + (0.5 * hs) * k2))
            k4 = -1j * (h4 @ (u + hs * k3))
            u = u + (hs / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    return u


@jit
def rk4_chain_cum(h0, bmats, bdags, deltas, amps, dt, t0, substeps):
    """RK4 tick chain returning every cumulative propagator (see rk4_chain)."""
    n = h0.shape[0]
    nt = amps.shape[0]
    out = np.empty((nt, n, n), dtype=np.complex128)
    u = np.eye(n, dtype=np.complex128)
    hs = dt / substeps
    for k in range(nt):
        tk = t0 + k * dt
        arow = amps[k]
        for s in range(substeps):
            t = tk + s * hs
            h1 = _ham_at(h0, bmats, bdags, deltas, arow, t)
            h2 = _ham_at(h0, bmats, bdags, deltas, arow, t + 0.5 * hs)
            h4 = _ham_at(h0, bmats, bdags, deltas, arow, t + hs)
            k1 = -1j * (h1 @ u)
            k2 = -1j * (h2 @ (u + (0.5 * hs) * k1))
            k3 = -1j * (h2 @ (u + (0.5 * hs) * k2))
            k4 = -1j * (h4 @ (u + hs * k3))
            u = u + (hs / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        out[k] = u
    return out


def unitarity_defect(u: np.ndarray) -> float:
    """max |U^dag U - 1|, the unitarity drift measure used everywhere."""
    n = u.shape[0]
    return float(np.abs(u.conj().T @ u - np.eye(n)).max())


def polar_unitary(m: np.ndarray) -> np.ndarray:
    """Closest unitary to m in Frobenius norm, from the SVD polar factor."""
    uu, _, vh = np.linalg.svd(m)
    return uu @ vh
