import numpy as np
import pytest

from pulseqml.diagnostics import FamilyKind, ModelFamily, build_family
from pulseqml.operators import ModelSpec


def two_qubit(state="00"):
    return build_family(ModelFamily(FamilyKind.TWO_QUBIT, 2, state))


def random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


def random_model(rng, d, n_controls=2):
    """Model with random Hermitian encoder/controls and a random ±1 observable."""
    q, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    signs = np.where(np.arange(d) % 2 == 0, 1.0, -1.0)
    obs = q @ np.diag(signs) @ q.conj().T
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    return ModelSpec([random_hermitian(rng, d)], [random_hermitian(rng, d) for _ in range(n_controls)],
                     (obs + obs.conj().T) / 2, psi / np.linalg.norm(psi))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
