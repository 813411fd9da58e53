"""Hermitian operators for pulse models: Pauli strings, spin irreps, Hamiltonian assembly.

Operators are dense complex ``numpy`` arrays. Qubit sites are 1-based and site 1
is the leftmost Kronecker factor, so ``pauli_string([(1, "Z")], 2)`` is Z ⊗ I.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateObservableError, InvalidArgumentError

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-12
SPECTRUM_TOL = 1e-9

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(np.abs(a - a.conj().T), initial=0.0) < tol


def as_hermitian(a, name: str = "operator", tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Validate ``a`` as a Hermitian matrix of dimension >= 2 and return it as complex."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"{name} must be a square matrix, got shape {a.shape}")
    if a.shape[0] < 2:
        raise InvalidArgumentError(f"{name} must have dimension >= 2")
    if not is_hermitian(a, tol):
        raise InvalidArgumentError(f"{name} is not Hermitian")
    return a


def as_state(v, name: str = "state") -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1 or v.shape[0] < 2:
        raise InvalidArgumentError(f"{name} must be a vector of length >= 2")
    if abs(np.linalg.norm(v) - 1.0) > NORM_TOL:
        raise InvalidArgumentError(f"{name} is not normalized (norm {np.linalg.norm(v)!r})")
    return v


def basis_state(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def product_state(*factors) -> np.ndarray:
    """Kronecker product of single-site state vectors, site 1 leftmost."""
    out = np.ones(1, dtype=complex)
    for f in factors:
        out = np.kron(out, np.asarray(f, dtype=complex))
    return out


def pauli_string(axes: Sequence[tuple[int, str]], n_qubits: int) -> np.ndarray:
    """Tensor product of Paulis on the listed sites and identity elsewhere.

    >>> pauli_string([(1, "Z"), (2, "Z")], 2).real.diagonal()
    array([ 1., -1., -1.,  1.])
    """
    if n_qubits < 1:
        raise InvalidArgumentError("n_qubits must be >= 1")
    factors = ["I"] * n_qubits
    seen = set()
    for site, axis in axes:
        if not 1 <= site <= n_qubits:
            raise InvalidArgumentError(f"site {site} out of range 1..{n_qubits}")
        if site in seen:
            raise InvalidArgumentError(f"duplicate site {site}")
        axis = axis.upper()
        if axis not in ("X", "Y", "Z"):
            raise InvalidArgumentError(f"unknown Pauli axis {axis!r}")
        seen.add(site)
        factors[site - 1] = axis
    out = np.ones((1, 1), dtype=complex)
    for f in factors:
        out = np.kron(out, PAULI[f])
    return out


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"commutator needs equal square shapes, got {a.shape} and {b.shape}")
    return a @ b - b @ a


def spin_irrep(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(Jx, Jy, Jz)`` for spin ``j = (d - 1) / 2`` in the Condon-Shortley convention.

    The basis is ordered by descending weight, ``Jz = diag(j, j - 1, ..., -j)``.
    """
    if int(d) != d or d < 2:
        raise InvalidArgumentError(f"irrep dimension must be an integer >= 2, got {d}")
    d = int(d)
    j = (d - 1) / 2
    m = j - np.arange(d)
    # <m+1|J+|m> sits just above the diagonal when weights descend
    ladder = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    jp = np.diag(ladder, k=1).astype(complex)
    jm = jp.conj().T
    jx = (jp + jm) / 2
    jy = (jp - jm) / 2j
    jz = np.diag(m).astype(complex)
    return jx, jy, jz


def rescale_observable(m: np.ndarray) -> np.ndarray:
    """Affinely map the spectrum of ``m`` onto exactly [-1, 1]."""
    m = as_hermitian(m, "observable", tol=1e-10)
    evals = np.linalg.eigvalsh(m)
    lo, hi = evals[0], evals[-1]
    if hi - lo <= SPECTRUM_TOL * max(1.0, abs(hi)):
        raise DegenerateObservableError("observable is proportional to the identity")
    eye = np.eye(m.shape[0])
    out = 2.0 * (m - lo * eye) / (hi - lo) - eye
    return (out + out.conj().T) / 2


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """One pulse-based model: ``H(x, θ) = Σ_i x_i D_i + Σ_j θ_j H_j`` measured with ``M``."""

    encoders: list
    controls: list
    observable: np.ndarray
    initial_state: np.ndarray
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.encoders) < 1:
            raise InvalidArgumentError("model needs at least one encoder")
        if len(self.controls) < 1:
            raise InvalidArgumentError("model needs at least one control")
        encoders = [as_hermitian(e, f"encoder {i}") for i, e in enumerate(self.encoders)]
        controls = [as_hermitian(c, f"control {j}") for j, c in enumerate(self.controls)]
        obs = as_hermitian(self.observable, "observable")
        psi0 = as_state(self.initial_state, "initial_state")
        dim = obs.shape[0]
        for op in encoders + controls:
            if op.shape[0] != dim:
                raise InvalidArgumentError("operator dimensions disagree")
        if psi0.shape[0] != dim:
            raise InvalidArgumentError("initial state dimension disagrees with operators")
        evals = np.linalg.eigvalsh(obs)
        if abs(evals[0] + 1) > SPECTRUM_TOL or abs(evals[-1] - 1) > SPECTRUM_TOL:
            raise InvalidArgumentError(
                f"observable spectrum must span [-1, 1], got [{evals[0]:.6g}, {evals[-1]:.6g}]"
            )
        object.__setattr__(self, "encoders", encoders)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "observable", obs)
        object.__setattr__(self, "initial_state", psi0)
        object.__setattr__(self, "_encoder_stack", np.stack(encoders))
        object.__setattr__(self, "_control_stack", np.stack(controls))

    @property
    def dim(self) -> int:
        return self.observable.shape[0]

    @property
    def n_inputs(self) -> int:
        return len(self.encoders)

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @property
    def encoder_stack(self) -> np.ndarray:
        return self._encoder_stack

    @property
    def control_stack(self) -> np.ndarray:
        return self._control_stack

    def with_initial_state(self, psi0) -> "ModelSpec":
        return ModelSpec(self.encoders, self.controls, self.observable, psi0, dict(self.labels))


def assemble_hamiltonian(model: ModelSpec, x, theta_row) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    theta_row = np.atleast_1d(np.asarray(theta_row, dtype=float))
    if x.shape != (model.n_inputs,):
        raise InvalidArgumentError(f"expected {model.n_inputs} inputs, got {x.shape}")
    if theta_row.shape != (model.n_controls,):
        raise InvalidArgumentError(f"expected {model.n_controls} control values, got {theta_row.shape}")
    if not np.all(np.isfinite(theta_row)):
        raise InvalidArgumentError("control amplitudes must be finite")
    if np.any(np.abs(x) > 1.0):
        raise InvalidArgumentError("inputs must lie in [-1, 1]")
    return np.tensordot(x, model.encoder_stack, axes=1) + np.tensordot(theta_row, model.control_stack, axes=1)
