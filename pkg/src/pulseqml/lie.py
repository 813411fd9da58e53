"""Dynamical Lie algebra closures and the control-orbit subspace chain.

Two kinds of spans appear here. Lie closures of skew-Hermitian generators are
real vector spaces; the orbit spans used for the expressivity test are complex.
Both are stored as Hilbert-Schmidt orthonormal bases of ``d x d`` matrices.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, UnsupportedModelError
from .operators import ModelSpec, PAULI

NEW_DIRECTION_TOL = 1e-10
SPAN_TOL = 1e-8
DEFAULT_K_MAX = 8


def liouvillian(h: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``[-i h, x]``."""
    return -1j * (h @ x - x @ h)


class _Orthonormalizer:
    """Incremental modified Gram-Schmidt (two passes) over flattened matrices."""

    def __init__(self, d: int, real: bool, tol: float = NEW_DIRECTION_TOL):
        self.d = d
        self.real = real
        self.tol = tol
        self.vectors: list[np.ndarray] = []
        self.matrices: list[np.ndarray] = []
        self._stack = None

    def _flatten(self, a: np.ndarray) -> np.ndarray:
        flat = a.reshape(-1)
        return np.concatenate([flat.real, flat.imag]) if self.real else flat.astype(complex)

    def _unflatten(self, v: np.ndarray) -> np.ndarray:
        if self.real:
            n = self.d * self.d
            return (v[:n] + 1j * v[n:]).reshape(self.d, self.d)
        return v.reshape(self.d, self.d)

    def add(self, a: np.ndarray) -> bool:
        v = self._flatten(a)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return False
        v = v / norm
        if self.vectors:
            q = self._stack
            for _ in range(2):
                v = v - q.T @ (q.conj() @ v) if not self.real else v - q.T @ (q @ v)
        residual = np.linalg.norm(v)
        if residual <= self.tol:
            return False
        v = v / residual
        self.vectors.append(v)
        self.matrices.append(self._unflatten(v))
        self._stack = np.array(self.vectors)
        return True

    def __len__(self):
        return len(self.vectors)


@dataclass(eq=False)
class OperatorSubspace:
    """A matrix subspace with a Hilbert-Schmidt orthonormal basis."""

    dim_space: int
    basis: list
    real: bool = False
    truncated: bool = False

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def __len__(self):
        return len(self.basis)

    def _coords(self, a: np.ndarray) -> np.ndarray:
        if not self.basis:
            return np.zeros(0)
        q = np.array(self.basis).reshape(len(self.basis), -1)
        c = q.conj() @ np.asarray(a, dtype=complex).reshape(-1)
        return c.real if self.real else c

    def project(self, a: np.ndarray) -> np.ndarray:
        if not self.basis:
            return np.zeros((self.dim_space, self.dim_space), dtype=complex)
        return np.tensordot(self._coords(a), np.array(self.basis), axes=1)

    def residual(self, a: np.ndarray) -> float:
        """HS norm of the part of ``a`` outside the span."""
        return float(np.linalg.norm(np.asarray(a) - self.project(a)))

    def contains(self, a: np.ndarray, tol: float = SPAN_TOL) -> bool:
        return self.residual(a) < tol * max(1.0, float(np.linalg.norm(a)))

    def gram(self) -> np.ndarray:
        if not self.basis:
            return np.zeros((0, 0))
        q = np.array(self.basis).reshape(len(self.basis), -1)
        g = q.conj() @ q.T
        return g.real if self.real else g

    def projector_distance(self, other: "OperatorSubspace") -> float:
        """Operator-norm distance between the orthogonal projectors onto both spans."""
        if self.dimension != other.dimension:
            return 1.0
        if self.dimension == 0:
            return 0.0
        q1 = np.array(self.basis).reshape(self.dimension, -1)
        q2 = np.array(other.basis).reshape(other.dimension, -1)
        if self.real:
            q1 = np.concatenate([q1.real, q1.imag], axis=1)
            q2 = np.concatenate([q2.real, q2.imag], axis=1)
        # equal dimensions: ||P1 - P2|| = ||(I - P2) P1||
        r = q1 - (q1 @ q2.conj().T) @ q2
        return float(np.linalg.norm(r, 2))

    def same_span(self, other: "OperatorSubspace", tol: float = SPAN_TOL) -> bool:
        return self.dimension == other.dimension and self.projector_distance(other) < tol


def lie_closure(generators: Sequence[np.ndarray], max_dim: Optional[int] = None,
                tol: float = NEW_DIRECTION_TOL) -> OperatorSubspace:
    """Real Lie algebra generated by skew-Hermitian matrices.

    Every pair of basis elements is commuted exactly once, in order of
    discovery, until no commutator leaves the span or ``max_dim`` is reached.
    """
    if not generators:
        raise InvalidArgumentError("need at least one generator")
    gens = [np.asarray(g, dtype=complex) for g in generators]
    d = gens[0].shape[0]
    for g in gens:
        if g.shape != (d, d):
            raise InvalidArgumentError("generators must share one square shape")
        if np.max(np.abs(g + g.conj().T)) > 1e-10:
            raise InvalidArgumentError("generators must be skew-Hermitian")
    max_dim = d * d if max_dim is None else int(max_dim)
    if not 1 <= max_dim <= d * d:
        raise InvalidArgumentError(f"max_dim must lie in 1..{d * d}")

    ortho = _Orthonormalizer(d, real=True, tol=tol)
    truncated = False
    for g in gens:
        if len(ortho) >= max_dim:
            truncated = True
            break
        ortho.add(g)
    i = 1
    while i < len(ortho) and not truncated:
        a = ortho.matrices[i]
        for j in range(i):
            if len(ortho) >= max_dim:
                truncated = True
                break
            b = ortho.matrices[j]
            ortho.add(a @ b - b @ a)
        i += 1
    return OperatorSubspace(d, list(ortho.matrices), real=True, truncated=truncated)


def dynamical_lie_algebra(model: ModelSpec, include_drift: bool = False, **kwargs) -> OperatorSubspace:
    """Closure of ``{i H_j}`` over the controls (and the encoders when requested)."""
    ops = list(model.controls) + (list(model.encoders) if include_drift else [])
    return lie_closure([1j * h for h in ops], **kwargs)


def is_fully_controllable(closure: OperatorSubspace) -> bool:
    """True when the closure contains all of su(d)."""
    d = closure.dim_space
    if closure.dimension < d * d - 1:
        return False
    eye = np.eye(d) / np.sqrt(d)
    traceless = [b - np.trace(eye.conj().T @ b) * eye for b in closure.basis]
    flat = np.array([np.concatenate([t.real.ravel(), t.imag.ravel()]) for t in traceless])
    return int(np.linalg.matrix_rank(flat, tol=1e-8)) == d * d - 1


def orbit_span(seed, controls: Sequence[np.ndarray], tol: float = NEW_DIRECTION_TOL) -> OperatorSubspace:
    """Complex span of the seed and every nested control Liouvillian applied to it."""
    if isinstance(seed, OperatorSubspace):
        seeds = list(seed.basis)
        d = seed.dim_space
    else:
        seeds = [np.asarray(seed, dtype=complex)] if np.ndim(seed) == 2 else [np.asarray(s, complex) for s in seed]
        d = seeds[0].shape[0] if seeds else controls[0].shape[0]
    ctl = [np.asarray(h, dtype=complex) for h in controls]
    for op in seeds + ctl:
        if op.shape != (d, d):
            raise InvalidArgumentError("seed and controls must share one square shape")
    ortho = _Orthonormalizer(d, real=False, tol=tol)
    for s in seeds:
        ortho.add(s)
    i = 0
    while i < len(ortho):
        x = ortho.matrices[i]
        for h in ctl:
            ortho.add(liouvillian(h, x))
        i += 1
    return OperatorSubspace(d, list(ortho.matrices), real=False)


class SubspaceChain(list):
    """``S_0, S_1, ...`` with the detected eventual period (1 or 2) if any."""

    period: Optional[int] = None
    period_start: Optional[int] = None


def _require_univariate(model: ModelSpec):
    if model.n_inputs != 1:
        raise UnsupportedModelError("the orbit chain analysis supports single-input models only")


def s_chain(model: ModelSpec, k_max: int = DEFAULT_K_MAX) -> SubspaceChain:
    """Subspaces ``S_0 = O(M)`` and ``S_k = O(L_0 S_{k-1})`` for ``k <= k_max``.

    ``S_k`` depends only on the span of ``S_{k-1}``, so once ``S_k`` equals
    ``S_{k-1}`` or ``S_{k-2}`` the rest of the chain repeats and is filled in
    without further computation.
    """
    _require_univariate(model)
    if k_max < 0:
        raise InvalidArgumentError("k_max must be >= 0")
    drift = model.encoders[0]
    chain = SubspaceChain([orbit_span(model.observable, model.controls)])
    for k in range(1, k_max + 1):
        if chain.period is not None:
            chain.append(chain[k - chain.period])
            continue
        prev = chain[k - 1]
        images = [liouvillian(drift, b) for b in prev.basis]
        images = [a for a in images if np.linalg.norm(a) > NEW_DIRECTION_TOL]
        if images:
            s = orbit_span(images, model.controls)
        else:
            s = OperatorSubspace(model.dim, [], real=False)
        chain.append(s)
        for period in (1, 2):
            if k - period >= 0 and s.same_span(chain[k - period]):
                chain.period = period
                chain.period_start = k - period
                break
    return chain


class Verdict(str, enum.Enum):
    FAILS_NECESSARY_CONDITION = "FAILS_NECESSARY_CONDITION"
    PASSES_NECESSARY_CONDITION = "PASSES_NECESSARY_CONDITION"


@dataclass
class ExpressivityRow:
    k: int
    dimension: int
    residual: float
    vanishes: bool


@dataclass
class ExpressivityReport:
    k_max: int
    tol: float
    per_k: list = field(default_factory=list)
    period: Optional[int] = None
    period_start: Optional[int] = None
    verdict: Verdict = Verdict.PASSES_NECESSARY_CONDITION

    @property
    def conclusive(self) -> bool:
        """A pass only covers ``k <= k_max`` unless the chain was seen to repeat."""
        return self.verdict is Verdict.FAILS_NECESSARY_CONDITION or self.period is not None

    def vanishing_orders(self) -> list:
        return [row.k for row in self.per_k if row.vanishes]

    def to_dict(self) -> dict:
        return {
            "k_max": self.k_max,
            "tol": self.tol,
            "period": self.period,
            "period_start": self.period_start,
            "verdict": self.verdict.value,
            "conclusive": self.conclusive,
            "per_k": [vars(row).copy() for row in self.per_k],
        }


def expectation_residual(subspace: OperatorSubspace, psi0: np.ndarray) -> float:
    if subspace.dimension == 0:
        return 0.0
    return max(abs(np.vdot(psi0, b @ psi0)) for b in subspace.basis)


def expressivity_check(model: ModelSpec, k_max: int = DEFAULT_K_MAX, tol: float = 1e-10,
                       chain: Optional[SubspaceChain] = None) -> ExpressivityReport:
    """Test whether ``<psi0| S_k |psi0>`` collapses to {0} for some ``k <= k_max``."""
    if not tol > 0:
        raise InvalidArgumentError("tol must be positive")
    if chain is None:
        chain = s_chain(model, k_max)
    report = ExpressivityReport(k_max=k_max, tol=tol, period=chain.period, period_start=chain.period_start)
    for k, s in enumerate(chain[: k_max + 1]):
        r = expectation_residual(s, model.initial_state)
        report.per_k.append(ExpressivityRow(k, s.dimension, float(r), bool(r < tol)))
    if any(row.vanishes for row in report.per_k):
        report.verdict = Verdict.FAILS_NECESSARY_CONDITION
    return report


def pauli_labels(n_qubits: int):
    """All ``4**n`` Pauli strings as ``(label, matrix)``, site 1 leftmost."""
    for letters in itertools.product("IXYZ", repeat=n_qubits):
        m = np.ones((1, 1), dtype=complex)
        for ch in letters:
            m = np.kron(m, PAULI[ch])
        yield "".join(letters), m


def pauli_support(subspace: OperatorSubspace, tol: float = SPAN_TOL) -> list:
    """Pauli strings lying inside the span (as Hermitian matrices, or times ``i`` for real spans)."""
    d = subspace.dim_space
    n = int(round(np.log2(d)))
    if 2**n != d:
        raise InvalidArgumentError("Pauli labels need a power-of-two dimension")
    out = []
    for label, p in pauli_labels(n):
        op = 1j * p if subspace.real else p
        if subspace.contains(op / np.sqrt(d), tol):
            out.append(label)
    return out


def pauli_decompose(a: np.ndarray, tol: float = 1e-12) -> dict:
    """Coefficients ``c_P = Tr(P a) / d`` of a matrix on ``n`` qubits."""
    a = np.asarray(a, dtype=complex)
    d = a.shape[0]
    n = int(round(np.log2(d)))
    if 2**n != d:
        raise InvalidArgumentError("Pauli decomposition needs a power-of-two dimension")
    out = {}
    for label, p in pauli_labels(n):
        c = np.trace(p @ a) / d
        if abs(c) > tol:
            out[label] = complex(c)
    return out

