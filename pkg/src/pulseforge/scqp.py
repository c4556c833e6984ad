"""Worst-case single-qubit fidelity as a spherically constrained quadratic
program, solved exactly.

The initial state lives in the qubit subspace of a qutrit and is written as a
Bloch vector n.  State fidelity between the evolved and target states is a
quadratic polynomial in n, built from a Gell-Mann expansion of the density
matrices; its minimum over |n| = 1 follows from an eigendecomposition of the
quadratic form plus a one-dimensional secular root find for the Lagrange
multiplier.  Deterministic, needs no initial guess.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

__all__ = ["BlochQuadratic", "bloch_quadratic", "solve_sphere_min", "worst_case_scqp_1q"]

_SQRT3 = np.sqrt(3.0)

# lambda_1..3 embed the Pauli matrices in the qubit block; lambda_8 fixes the
# subspace weight. Tr[lambda_a lambda_b] = 2 delta_ab.
_L1 = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=complex)
_L2 = np.array([[0, -1j, 0], [1j, 0, 0], [0, 0, 0]], dtype=complex)
_L3 = np.array([[1, 0, 0], [0, -1, 0], [0, 0, 0]], dtype=complex)
_L8 = np.diag([1.0, 1.0, -2.0]).astype(complex) / _SQRT3
_LAMBDAS = (_L1, _L2, _L3)


@dataclass(frozen=True)
class BlochQuadratic:
    """F(n) = c + b.n + (1/2) n^T a n on the Bloch sphere |n| = 1."""

    c: float
    b: np.ndarray  # (3,)
    a: np.ndarray  # (3, 3) symmetric

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        a = np.asarray(self.a, dtype=float)
        if b.shape != (3,) or a.shape != (3, 3):
            raise ValueError("BlochQuadratic needs a 3-vector b and 3x3 matrix a")
        if np.abs(a - a.T).max() > 1e-12:
            raise ValueError("quadratic form must be symmetric to 1e-12")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", a)

    def __call__(self, n: np.ndarray) -> float:
        n = np.asarray(n, dtype=float)
        return float(self.c + self.b @ n + 0.5 * n @ self.a @ n)


def _embed_target(u_target: np.ndarray) -> np.ndarray:
    t = np.asarray(u_target, dtype=complex)
    if t.shape == (3, 3):
        return t
    if t.shape != (2, 2):
        raise ValueError(f"target must be 2x2 (or an embedded 3x3), got {t.shape}")
    e = np.eye(3, dtype=complex)
    e[:2, :2] = t
    return e


def bloch_quadratic(u_qutrit: np.ndarray, u_target: np.ndarray) -> BlochQuadratic:
    """Coefficients of the state fidelity as a function of the input Bloch vector.

    rho0 = I/3 + (1/2) sum_i n_i lambda_i + (1/(2 sqrt 3)) lambda_8 covers the
    qubit-subspace pure states; F(n) = Tr[(U rho0 U^dag)(U_t rho0 U_t^dag)]
    expands into the quadratic held here.  Leakage is handled implicitly, as
    the evolved density matrix may leave the subspace.
    """
    u = np.asarray(getattr(u_qutrit, "matrix", u_qutrit), dtype=complex)
    if u.shape != (3, 3):
        raise ValueError(f"expected a 3x3 qutrit unitary, got {u.shape}")
    ut = _embed_target(u_target)

    lam_t = [u @ l @ u.conj().T for l in _LAMBDAS]
    lam8_t = u @ _L8 @ u.conj().T
    lam_g = [ut @ l @ ut.conj().T for l in _LAMBDAS]
    lam8_g = ut @ _L8 @ ut.conj().T

    c = 1.0 / 3.0 + np.trace(lam8_t @ lam8_g).real / 12.0
    b = np.array(
        [
            (np.trace(lam8_t @ lam_g[i]) + np.trace(lam_t[i] @ lam8_g)).real / (4.0 * _SQRT3)
            for i in range(3)
        ]
    )
    a = np.array(
        [
            [
                (np.trace(lam_t[i] @ lam_g[j]) + np.trace(lam_t[j] @ lam_g[i])).real / 4.0
                for j in range(3)
            ]
            for i in range(3)
        ]
    )
    return BlochQuadratic(float(c), b, (a + a.T) / 2.0)


def solve_sphere_min(quad: BlochQuadratic) -> tuple[float, np.ndarray]:
    """Global minimum of the quadratic on the unit sphere.

    Stationarity gives (A - mu I) n = -b with A - mu I >= 0 at the global
    minimum, so mu <= d_min.  In the eigenbasis the constraint |n| = 1
    becomes the secular equation phi(mu) = sum beta_i^2/(d_i - mu)^2 = 1,
    monotone on (-inf, d_min); the hard case (b orthogonal to the bottom
    eigenspace with phi(d_min) < 1) pins mu = d_min and fills the remaining
    norm from the bottom eigenspace.
    """
    d, q = np.linalg.eigh(quad.a)
    beta = q.T @ quad.b
    d_min = d[0]
    gaps = d - d_min
    scale = max(np.abs(d).max(), np.linalg.norm(beta), 1.0)
    tol = 1e-14 * scale

    bottom = gaps < 1e-12 * scale
    if np.all(np.abs(beta[bottom]) < tol):
        rest = ~bottom
        phi_at = float(np.sum(beta[rest] ** 2 / gaps[rest] ** 2)) if rest.any() else 0.0
        if phi_at <= 1.0 + 1e-9:
            # mu = d_min; particular solution plus bottom-eigenspace filler
            y = np.zeros(3)
            y[rest] = -beta[rest] / gaps[rest]
            slack = max(1.0 - np.sum(y**2), 0.0)
            y[np.argmax(bottom)] = np.sqrt(slack)
            n = q @ y
            return quad(n), n

    # substitute u = d_min - mu > 0: phi(u) = sum beta_i^2/(gap_i + u)^2 falls
    # monotonically from +inf (or phi_at > 1) to 0, so the bracket is certain
    def g(u: float) -> float:
        with np.errstate(divide="ignore", over="ignore"):
            val = np.sum(beta**2 / (gaps + u) ** 2)
        return min(val, 1e300) - 1.0

    u_hi = 2.0 * np.linalg.norm(beta) + 1.0  # phi <= |beta|^2/u_hi^2 < 1
    u_star = brentq(g, 1e-300, u_hi, xtol=1e-250, rtol=1e-15)
    y = -beta / (gaps + u_star)
    y /= np.linalg.norm(y)  # absorb residual secular tolerance
    n = q @ y
    return quad(n), n


def worst_case_scqp_1q(u_qutrit: np.ndarray, u_target: np.ndarray) -> tuple[float, np.ndarray]:
    """Exact single-qubit worst-case fidelity and its Bloch-vector argmin."""
    quad = bloch_quadratic(u_qutrit, u_target)
    return solve_sphere_min(quad)
