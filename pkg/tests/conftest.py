import os

import numpy as np
import pytest


def pytest_collection_modifyitems(config, items):
    if os.environ.get("PULSEFORGE_STRICT") == "1":
        return
    skip = pytest.mark.skip(
        reason="long-running reproduction recipe; set PULSEFORGE_STRICT=1 to run"
    )
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)


def haar_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix."""
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def random_unitary(rng):
    """Callable fixture: random_unitary(n) -> Haar unitary, seeded per test."""

    def make(n: int) -> np.ndarray:
        return haar_unitary(rng, n)

    return make


def random_hermitian(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (z + z.conj().T)
