"""Fidelity, leakage, entanglement, and rotation-angle metric checks."""

import numpy as np
import pytest
import scipy.linalg

from pulseforge.errors import NumericalError
from pulseforge.gates import QUBIT_IDX_2Q, cnot_gate, pauli_kron, zx_gate
from pulseforge.metrics import (
    avg_gate_fidelity,
    avg_linear_entropy,
    corrected_fidelity,
    entangling_product_states,
    leakage,
    linear_entropy,
    overlap_matrix,
    pauli_product_states,
    qubit_block,
    reconstruct_qubit_unitary,
    rotation_angles,
    virtual_z_correct,
    virtual_z_matrix,
    worst_case_fidelity,
)

IDX4 = list(QUBIT_IDX_2Q)


def embed4(u4: np.ndarray) -> np.ndarray:
    u9 = np.eye(9, dtype=complex)
    u9[np.ix_(IDX4, IDX4)] = u4
    return u9


def haar_states(n, count, rng):
    z = rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# average gate fidelity


def test_avg_fidelity_identity_and_traceless():
    assert avg_gate_fidelity(np.eye(4)) == pytest.approx(1.0, abs=1e-15)
    assert avg_gate_fidelity(np.eye(2)) == pytest.approx(1.0, abs=1e-15)
    # traceless unitary at n = 4: (4 + 0)/20
    m = np.diag([1, 1j, -1, -1j]).astype(complex)
    assert avg_gate_fidelity(m) == pytest.approx(0.2, abs=1e-15)


def test_avg_fidelity_global_phase_invariant(random_unitary):
    m = random_unitary(4)
    f = avg_gate_fidelity(m)
    assert avg_gate_fidelity(np.exp(0.73j) * m) == pytest.approx(f, abs=1e-13)


def test_avg_fidelity_rejects_bad_shapes():
    with pytest.raises(ValueError):
        avg_gate_fidelity(np.ones((2, 3)))
    with pytest.raises(ValueError):
        avg_gate_fidelity(np.eye(3))


def test_avg_fidelity_matches_haar_mc(rng, random_unitary):
    """Closed form vs Monte-Carlo Haar averaging (reduced-size routine check;
    the full-size run lives in the acceptance suite)."""
    for _ in range(6):
        m = overlap_matrix(random_unitary(4), random_unitary(4))
        f = avg_gate_fidelity(m)
        psi = haar_states(4, 50000, rng)
        f_mc = float(np.mean(np.abs(np.einsum("si,ij,sj->s", psi.conj(), m, psi)) ** 2))
        assert f_mc == pytest.approx(f, abs=3e-3)


def test_qubit_block_shapes(random_unitary):
    u9 = random_unitary(9)
    blk = qubit_block(u9)
    assert blk.shape == (4, 4)
    assert np.array_equal(blk, u9[np.ix_(IDX4, IDX4)])
    u3 = random_unitary(3)
    assert np.array_equal(qubit_block(u3), u3[:2, :2])
    u4 = random_unitary(4)
    assert np.array_equal(qubit_block(u4), u4)
    with pytest.raises(ValueError):
        qubit_block(np.eye(5))
    with pytest.raises(ValueError):
        overlap_matrix(u9, np.eye(2))


# ---------------------------------------------------------------------------
# virtual Z


def test_virtual_z_pure_z_error_recovers_unity():
    phi = 1.13
    m = np.diag([1.0, 1.0, np.exp(1j * phi), np.exp(1j * phi)])
    ang, f = virtual_z_correct(m)
    assert ang.theta0 == pytest.approx(-phi, abs=1e-12)
    assert f == pytest.approx(1.0, abs=1e-12)
    ang, f = virtual_z_correct(np.eye(4, dtype=complex))
    assert (ang.theta0, ang.theta1) == (0.0, 0.0)
    assert f == pytest.approx(1.0, abs=1e-15)


def test_virtual_z_never_lowers_fidelity(random_unitary):
    for _ in range(40):
        m = random_unitary(4)
        f0 = avg_gate_fidelity(m)
        for order in ("auto", "01", "10"):
            ang, f = virtual_z_correct(m, order=order, sweeps=1)
            assert f >= f0 - 1e-12
            assert -np.pi <= ang.theta0 <= np.pi
            assert -np.pi <= ang.theta1 <= np.pi


def test_virtual_z_corrected_value_consistent(random_unitary):
    m = random_unitary(4)
    ang, f = virtual_z_correct(m, order="01", sweeps=3)
    rebuilt = virtual_z_matrix(ang.theta0, ang.theta1) @ m
    assert avg_gate_fidelity(rebuilt) == pytest.approx(f, abs=1e-12)


def test_virtual_z_single_qubit_exact(random_unitary, rng):
    """n = 2 has one sinusoidal term: the closed form is the global optimum."""
    for _ in range(20):
        m = random_unitary(2)
        ang, f = virtual_z_correct(m)
        grid = np.linspace(-np.pi, np.pi, 20001)
        best = max(
            avg_gate_fidelity(np.diag([1.0, np.exp(1j * t)]) @ m) for t in grid[::100]
        )
        vals = np.abs(m[0, 0] + np.exp(1j * grid) * m[1, 1]) ** 2
        best = (np.trace(m @ m.conj().T).real + vals.max()) / 6.0
        assert f >= best - 1e-9
        assert ang.theta1 == 0.0


def test_virtual_z_degenerate_flagged():
    m = np.diag([1.0, -1.0, 1.0j, 1.0j]).astype(complex)  # block trace 0 -> script M = 0
    ang, f = virtual_z_correct(m, order="01", sweeps=1)
    assert ang.degenerate0
    assert ang.theta0 == 0.0


def test_virtual_z_sequential_near_joint_gate_like(rng):
    """Sequential closed-form passes vs joint 2-D maximization on gate-like
    overlaps (random Z phases times a small coherent error)."""
    from scipy.optimize import minimize

    for _ in range(50):
        t0, t1 = rng.uniform(-np.pi, np.pi, 2)
        h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        h = (h + h.conj().T) / 2
        h *= 0.15 / np.linalg.norm(h, 2)
        m = virtual_z_matrix(t0, t1) @ scipy.linalg.expm(-1j * h)
        _, f_seq = virtual_z_correct(m)

        gr = np.linspace(-np.pi, np.pi, 73, endpoint=False)
        tr = (
            m[0, 0]
            + np.exp(1j * gr)[None, :] * m[1, 1]
            + np.exp(1j * gr)[:, None] * m[2, 2]
            + np.exp(1j * (gr[:, None] + gr[None, :])) * m[3, 3]
        )
        k = np.unravel_index(np.argmax(np.abs(tr)), tr.shape)

        def neg(x):
            return -avg_gate_fidelity(virtual_z_matrix(x[0], x[1]) @ m)

        res = minimize(
            neg,
            (gr[k[0]], gr[k[1]]),
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-14},
        )
        assert -res.fun - f_seq < 1e-5


def test_virtual_z_validation():
    with pytest.raises(ValueError, match="order"):
        virtual_z_correct(np.eye(4), order="xx")
    with pytest.raises(ValueError, match="sweeps"):
        virtual_z_correct(np.eye(4), sweeps=0)
    with pytest.raises(ValueError):
        virtual_z_correct(np.eye(3))


def test_corrected_fidelity_end_to_end(random_unitary):
    u4 = random_unitary(4)
    f = corrected_fidelity(embed4(u4), u4)
    assert f == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# leakage


def test_leakage_block_diagonal_zero(random_unitary):
    u9 = embed4(random_unitary(4))
    assert leakage(u9) == pytest.approx(0.0, abs=1e-13)


def test_leakage_single_swap():
    # swap |01> (index 1) with |02> (index 2): one of four columns leaks fully
    u = np.eye(9, dtype=complex)
    u[1, 1] = u[2, 2] = 0.0
    u[2, 1] = u[1, 2] = 1.0
    assert leakage(u) == pytest.approx(0.25, abs=1e-15)


def test_leakage_population_conservation(random_unitary):
    u = random_unitary(9)
    retained = sum(
        np.abs(u[i, j]) ** 2 for i in QUBIT_IDX_2Q for j in QUBIT_IDX_2Q
    ) / 4.0
    assert leakage(u) + retained == pytest.approx(1.0, abs=1e-12)


def test_leakage_qutrit_and_errors(random_unitary):
    u3 = np.eye(3, dtype=complex)
    assert leakage(u3) == 0.0
    with pytest.raises(ValueError):
        leakage(np.eye(4))


# ---------------------------------------------------------------------------
# linear entropy / entangling power


def test_linear_entropy_product_and_bell():
    psi = np.zeros(9, dtype=complex)
    psi[0] = 1.0  # |00>
    assert linear_entropy(psi) == pytest.approx(0.0, abs=1e-15)
    bell = np.zeros(9, dtype=complex)
    bell[0] = bell[4] = 1 / np.sqrt(2)  # (|00> + |11>)/sqrt2
    assert linear_entropy(bell) == pytest.approx(0.5, abs=1e-14)


def test_linear_entropy_zx_plus_zero():
    plus0 = np.kron(np.array([1, 1]) / np.sqrt(2), np.array([1, 0])).astype(complex)
    out = zx_gate() @ plus0
    assert linear_entropy(out) == pytest.approx(0.5, abs=1e-13)


def test_linear_entropy_projection_and_norm_guard(rng):
    psi = rng.normal(size=9) + 1j * rng.normal(size=9)
    psi /= np.linalg.norm(psi)
    s9 = linear_entropy(psi)
    q = psi[IDX4] / np.linalg.norm(psi[IDX4])
    assert linear_entropy(q) == pytest.approx(s9, abs=1e-13)
    bad = np.zeros(9, dtype=complex)
    bad[2] = 1.0  # pure leak state
    with pytest.raises(NumericalError):
        linear_entropy(bad)
    with pytest.raises(ValueError):
        linear_entropy(np.ones(5))


def test_linear_entropy_local_unitary_invariant(random_unitary, rng):
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi /= np.linalg.norm(psi)
    s = linear_entropy(psi)
    local = np.kron(random_unitary(2), random_unitary(2))
    assert linear_entropy(local @ psi) == pytest.approx(s, abs=1e-12)


def test_entangling_census_cnot():
    census = [linear_entropy(cnot_gate() @ s) for _, _, s in pauli_product_states()]
    n_max = sum(1 for s in census if abs(s - 0.5) < 1e-12)
    n_sep = sum(1 for s in census if s < 1e-12)
    assert (n_max, n_sep) == (16, 20)
    chosen = {(a, b) for a, b, _ in entangling_product_states()}
    actual = {
        (a, b)
        for a, b, s in pauli_product_states()
        if abs(linear_entropy(cnot_gate() @ s) - 0.5) < 1e-12
    }
    assert chosen == actual


def test_avg_linear_entropy_values(random_unitary):
    assert avg_linear_entropy(cnot_gate()) == pytest.approx(0.5, abs=1e-13)
    assert avg_linear_entropy(zx_gate()) == pytest.approx(0.5, abs=1e-13)
    assert avg_linear_entropy(np.eye(4)) == pytest.approx(0.0, abs=1e-15)
    assert avg_linear_entropy(embed4(cnot_gate())) == pytest.approx(0.5, abs=1e-13)
    # local unitaries after the gate do not change it
    local = np.kron(random_unitary(2), random_unitary(2))
    assert avg_linear_entropy(local @ cnot_gate()) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        avg_linear_entropy(np.eye(3))


# ---------------------------------------------------------------------------
# worst-case fidelity (generic)


def test_worst_case_identity_and_diag():
    f, psi = worst_case_fidelity(np.eye(4), np.eye(4))
    assert f == pytest.approx(1.0, abs=1e-9)
    # diag(1,1,1,i): worst state concentrates on the odd phase
    m = np.diag([1.0, 1.0, 1.0, np.exp(1j * np.pi / 2)])
    f, psi = worst_case_fidelity(m, np.eye(4))
    # min |cos|^2 over mixing |11> with the rest: cos^2(pi/4) = 1/2
    assert f == pytest.approx(0.5, abs=1e-7)


def test_worst_case_single_qubit_dephasing():
    eps = 0.1
    m = np.array([[np.exp(-1j * eps / 2), 0], [0, np.exp(1j * eps / 2)]])
    f, psi = worst_case_fidelity(m, np.eye(2))
    assert f == pytest.approx(np.cos(eps / 2) ** 2, abs=1e-10)
    # equator state: equal weight
    assert abs(abs(psi[0]) - abs(psi[1])) < 1e-4


def test_worst_case_beats_scan_and_below_avg(random_unitary, rng):
    for k in range(5):
        u, ut = random_unitary(4), random_unitary(4)
        m = overlap_matrix(u, ut)
        f, psi = worst_case_fidelity(u, ut, seed=k)
        assert f <= avg_gate_fidelity(m) + 1e-12
        z = haar_states(4, 200000, rng)
        scan = np.abs(np.einsum("si,ij,sj->s", z.conj(), m, z)) ** 2
        assert f <= scan.min() + 1e-6
        # returned state achieves the reported value
        assert abs(np.vdot(psi, m @ psi)) ** 2 == pytest.approx(f, abs=1e-12)


# ---------------------------------------------------------------------------
# rotation angles


def _zx_ramp_trace(total_angle, steps):
    zx = pauli_kron(3, 1)
    us, ts = [], []
    for k in range(1, steps + 1):
        th = k * total_angle / steps
        us.append(embed4(scipy.linalg.expm(-1j * th * zx / 2)))
        ts.append(float(k))
    return us, ts


def test_rotation_angles_pure_generator():
    us, ts = _zx_ramp_trace(np.pi / 2, 20)
    tr = rotation_angles(us, times_ns=ts)
    assert tr.theta[-1, 3, 1] == pytest.approx(np.pi / 2, abs=1e-10)
    others = tr.theta[-1].copy()
    others[3, 1] = 0.0
    assert np.abs(others).max() < 1e-10
    # short-time: principal and smoothed branches identical
    assert np.abs(tr.theta - tr.theta_principal).max() < 1e-10
    assert not tr.jump_flags.any()


def test_rotation_angles_tracks_through_wrapping():
    us, ts = _zx_ramp_trace(3 * np.pi, 120)
    tr = rotation_angles(us, times_ns=ts)
    assert tr.theta[-1, 3, 1] == pytest.approx(3 * np.pi, abs=1e-9)
    # principal branch wraps back into (-pi, pi]
    assert abs(tr.theta_principal[-1, 3, 1]) <= np.pi + 1e-9
    assert np.abs(np.diff(tr.theta[:, 3, 1])).max() < 0.1
    assert not tr.jump_flags.any()
    assert np.abs(tr.branches[-1]).sum() > 0


def test_rotation_angles_reconstruction(random_unitary):
    rng = np.random.default_rng(2)
    h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = (h + h.conj().T) / 2
    u4 = scipy.linalg.expm(-1j * 0.8 * h / np.linalg.norm(h, 2))
    tr = rotation_angles([embed4(u4)], times_ns=[1.0])
    rec = reconstruct_qubit_unitary(tr.theta[0])
    assert np.abs(rec - u4).max() < 1e-9


def test_rotation_angles_flags_branch_point():
    u9 = np.eye(9, dtype=complex)
    u9[0, 0] = np.exp(1j * np.pi)  # eigenphase exactly at the cut
    tr = rotation_angles([u9], times_ns=[1.0])
    assert tr.branch_flags[0]


def test_rotation_angles_flags_genuine_jump():
    zx = pauli_kron(3, 1)
    us = [
        embed4(scipy.linalg.expm(-1j * 0.1 * zx / 2)),
        embed4(scipy.linalg.expm(-1j * 2.5 * zx / 2)),
    ]
    tr = rotation_angles(us, times_ns=[1.0, 2.0])
    assert tr.jump_flags[1]


def test_rotation_angles_validation():
    with pytest.raises(ValueError):
        rotation_angles([np.eye(4)], times_ns=[1.0])
