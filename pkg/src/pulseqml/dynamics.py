"""Piecewise-constant pulse propagation and expectation-value outputs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericalIntegrityError
from .operators import ModelSpec, assemble_hamiltonian, is_hermitian

IMAG_TOL = 1e-8
# complex entries of eigenvector storage allowed per batched chunk (~128 MB)
_CHUNK_ENTRIES = 1 << 23


@dataclass(frozen=True, eq=False)
class PulseSchedule:
    """A ``K x p`` grid of control amplitudes held for ``dt`` each."""

    amplitudes: np.ndarray
    dt: float

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=float)
        if amps.ndim == 1:
            amps = amps[:, None]
        if amps.ndim != 2 or amps.shape[0] < 1 or amps.shape[1] < 1:
            raise InvalidArgumentError(f"amplitudes must be a non-empty K x p matrix, got {amps.shape}")
        if not np.all(np.isfinite(amps)):
            raise InvalidArgumentError("amplitudes must be finite")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_steps(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def n_controls(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    def split(self, k: int) -> tuple["PulseSchedule", "PulseSchedule"]:
        return PulseSchedule(self.amplitudes[:k], self.dt), PulseSchedule(self.amplitudes[k:], self.dt)


def expm_step(h, t: float) -> np.ndarray:
    """``exp(-i h t)`` through the eigendecomposition of Hermitian ``h``."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or not is_hermitian(h, 1e-10):
        raise InvalidArgumentError("expm_step needs a Hermitian matrix")
    evals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-1j * evals * t)) @ vecs.conj().T


def _check_compatible(model: ModelSpec, schedule: PulseSchedule):
    if schedule.n_controls != model.n_controls:
        raise InvalidArgumentError(
            f"schedule has {schedule.n_controls} controls, model has {model.n_controls}"
        )


def propagate(model: ModelSpec, x, schedule: PulseSchedule, psi0=None) -> np.ndarray:
    """Final state ``U_K ... U_1 |psi0>`` for one input ``x``."""
    _check_compatible(model, schedule)
    psi = model.initial_state if psi0 is None else np.asarray(psi0, dtype=complex)
    if psi.shape != (model.dim,):
        raise InvalidArgumentError("state dimension does not match model")
    for row in schedule.amplitudes:
        psi = expm_step(assemble_hamiltonian(model, x, row), schedule.dt) @ psi
    return psi


def expectation(observable: np.ndarray, psi: np.ndarray) -> float:
    value = np.vdot(psi, observable @ psi)
    if abs(value.imag) >= IMAG_TOL:
        raise NumericalIntegrityError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def predict(model: ModelSpec, x, schedule: PulseSchedule) -> float:
    return expectation(model.observable, propagate(model, x, schedule))


def _as_inputs(model: ModelSpec, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 0:
        xs = xs.reshape(1, 1)
    elif xs.ndim == 1:
        xs = xs[:, None] if model.n_inputs == 1 else xs[None, :]
    if xs.shape[1] != model.n_inputs:
        raise InvalidArgumentError(f"expected inputs with {model.n_inputs} components, got {xs.shape}")
    if np.any(np.abs(xs) > 1.0):
        raise InvalidArgumentError("inputs must lie in [-1, 1]")
    return xs


def _eigensystems(model: ModelSpec, xs: np.ndarray, amplitudes: np.ndarray):
    """Eigenpairs of every step Hamiltonian, shapes (N, K, d) and (N, K, d, d)."""
    enc = np.einsum("ni,iab->nab", xs, model.encoder_stack)
    ctl = np.einsum("kj,jab->kab", amplitudes, model.control_stack)
    return np.linalg.eigh(enc[:, None] + ctl[None])


def _chunks(n_inputs: int, n_steps: int, dim: int):
    size = max(1, _CHUNK_ENTRIES // max(1, n_steps * dim * dim))
    for start in range(0, n_inputs, size):
        yield slice(start, min(n_inputs, start + size))


def _forward(evals, vecs, dt, psi0):
    """Propagate a batch; returns final states and each step's input state in its eigenbasis."""
    n, k_steps, d = evals.shape
    phases = np.exp(-1j * evals * dt)
    psi = np.broadcast_to(psi0, (n, d)).astype(complex)
    coords = np.empty((n, k_steps, d), dtype=complex)
    for k in range(k_steps):
        v = vecs[:, k]
        c = np.einsum("nba,nb->na", v.conj(), psi)
        coords[:, k] = c
        psi = np.einsum("nab,nb->na", v, c * phases[:, k])
    return psi, coords


def predict_batch(model: ModelSpec, xs, schedule: PulseSchedule) -> np.ndarray:
    """Model outputs for many inputs at once (same values as :func:`predict`)."""
    _check_compatible(model, schedule)
    xs = _as_inputs(model, xs)
    out = np.empty(xs.shape[0])
    for sl in _chunks(xs.shape[0], schedule.n_steps, model.dim):
        evals, vecs = _eigensystems(model, xs[sl], schedule.amplitudes)
        psi, _ = _forward(evals, vecs, schedule.dt, model.initial_state)
        vals = np.einsum("na,ab,nb->n", psi.conj(), model.observable, psi)
        if np.max(np.abs(vals.imag), initial=0.0) >= IMAG_TOL:
            raise NumericalIntegrityError("expectation has a non-negligible imaginary part")
        out[sl] = vals.real
    return out


def divided_differences(evals: np.ndarray, dt: float) -> np.ndarray:
    """First divided differences of ``λ -> exp(-i λ dt)`` over all eigenvalue pairs.

    Written as ``-i dt exp(-i (a + b) dt / 2) sinc((a - b) dt / 2)``, which equals
    ``(e^{-i a dt} - e^{-i b dt}) / (a - b)`` and reaches the derivative
    ``-i dt e^{-i a dt}`` smoothly when ``a == b``.
    """
    a = evals[..., :, None]
    b = evals[..., None, :]
    return -1j * dt * np.exp(-0.5j * (a + b) * dt) * np.sinc((a - b) * dt / (2 * np.pi))


def outputs_and_gradient(model: ModelSpec, xs, schedule: PulseSchedule, weight_fn=None, steps=None):
    """Model outputs and the exact gradient of a weighted sum of outputs.

    ``weight_fn(f, rows)`` receives the outputs of the input rows selected by
    the slice ``rows`` and returns one weight per row. The returned gradient is
    ``Σ_n w_n ∂f_n/∂θ`` as a ``K x p`` array; ``None`` means unit weights.
    Restricting ``steps`` to a set of step indices leaves the other rows zero.
    """
    _check_compatible(model, schedule)
    xs = _as_inputs(model, xs)
    dt = schedule.dt
    obs = model.observable
    ctl = model.control_stack.reshape(model.n_controls, -1)
    outputs = np.empty(xs.shape[0])
    grad = np.zeros(schedule.amplitudes.shape)
    wanted = range(schedule.n_steps) if steps is None else {int(k) % schedule.n_steps for k in steps}
    for sl in _chunks(xs.shape[0], schedule.n_steps, model.dim):
        evals, vecs = _eigensystems(model, xs[sl], schedule.amplitudes)
        psi, coords = _forward(evals, vecs, dt, model.initial_state)
        chi = psi @ obs.T
        vals = np.einsum("na,na->n", psi.conj(), chi)
        if np.max(np.abs(vals.imag), initial=0.0) >= IMAG_TOL:
            raise NumericalIntegrityError("expectation has a non-negligible imaginary part")
        f = vals.real
        outputs[sl] = f
        if weight_fn is not None:
            chi = chi * np.asarray(weight_fn(f, sl), dtype=float)[:, None]
        back_phase = np.exp(1j * evals * dt)
        for k in range(schedule.n_steps - 1, -1, -1):
            v = vecs[:, k]
            chi_t = np.einsum("nba,nb->na", v.conj(), chi)
            if k in wanted:
                w = divided_differences(evals[:, k], dt) * (chi_t.conj()[:, :, None] * coords[:, k, None, :])
                # Σ_ab w_ab (V† H V)_ab == Σ_cd H_cd (conj(V) w V^T)_cd, summed over inputs
                g = np.tensordot(np.matmul(v.conj(), w), v, axes=([0, 2], [0, 2]))
                grad[k] += 2.0 * (ctl @ g.ravel()).real
            chi = np.einsum("nab,nb->na", v, chi_t * back_phase[:, k])
    return outputs, grad
