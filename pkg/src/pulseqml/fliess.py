"""Truncated Fliess expansion of a single-input model output in powers of ``x``.

With ``θ_0 ≡ 1`` standing for the encoder channel, the output is

    f(x) = Σ_tuples x^{#zeros} c_{j1...jn}(T) Tr(M L_{j1} ... L_{jn} ρ0)

where ``L_j ρ = [-i H_j, ρ]`` (``H_0`` is the encoder), ``ρ0 = |ψ0><ψ0|`` and
``c`` is the iterated integral with ``t1 >= t2 >= ... >= tn``. Moving the
Liouvillians onto ``M`` instead reverses their order and contributes a factor
``(-1)^n``; see :func:`observable_word_expectation`.

Tuples are organised as a tree keyed by their tail ``(j2, ..., jn)``: both the
iterated integrals and the nested Liouvillians of a tuple are obtained from
its tail by one more step, so every level is computed in a vectorised pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import PulseSchedule, predict
from .errors import BudgetExceededError, InvalidArgumentError, NumericalIntegrityError, UnsupportedModelError
from .lie import liouvillian
from .operators import ModelSpec

DEFAULT_MAX_LEN = 6
DEFAULT_SUBSTEPS = 1
DEFAULT_TUPLE_BUDGET = 200_000


@dataclass
class SeriesTruncation:
    """Coefficients ``C_k`` of the output's power series in ``x``."""

    max_len: int
    coefficients: list
    tails: list = field(default_factory=list)

    def as_array(self) -> np.ndarray:
        out = np.zeros(len(self.coefficients))
        for k, c in self.coefficients:
            out[k] = c
        return out


def _level_sizes(n_channels: int, max_len: int) -> list:
    return [n_channels**n for n in range(max_len + 1)]


def _check_budget(n_channels: int, max_len: int, budget: int):
    required = n_channels**max_len
    if required > budget:
        raise BudgetExceededError(
            f"{required} index tuples of length {max_len} exceed the budget of {budget}",
            required=required,
            budget=budget,
        )


def _channel_values(schedule: PulseSchedule) -> np.ndarray:
    """``K x (p + 1)`` amplitudes with the constant encoder channel in column 0."""
    return np.hstack([np.ones((schedule.n_steps, 1)), schedule.amplitudes])


def _integrate_tree(schedule: PulseSchedule, heads: np.ndarray, parents: np.ndarray, depth: int,
                   substeps: int = DEFAULT_SUBSTEPS) -> np.ndarray:
    """Solve ``y_i' = θ_{head_i}(t) y_{parent_i}`` with root ``y_0 ≡ 1`` over the schedule.

    On one sub-pulse the right-hand side is a constant nilpotent map ``A``
    (each application moves one level down the tree), so the step propagator
    ``exp(h A)`` is the finite sum ``Σ_{m <= depth} (h A)^m / m!`` and the
    result is exact up to rounding. ``substeps`` only splits each sub-pulse.
    """
    if substeps < 1:
        raise InvalidArgumentError("substeps must be >= 1")
    channels = _channel_values(schedule)
    h = schedule.dt / substeps
    y = np.zeros(heads.shape[0])
    y[0] = 1.0
    mask = np.ones_like(y)
    mask[0] = 0.0
    for row in channels:
        coef = row[heads] * mask
        for _ in range(substeps):
            term = y
            for m in range(1, depth + 1):
                term = (h / m) * coef * term[parents]
                y = y + term
    return y


def iterated_integral(schedule: PulseSchedule, indices, substeps: int = DEFAULT_SUBSTEPS) -> float:
    """``∫_0^T θ_{j1}(t1) ∫_0^{t1} θ_{j2}(t2) ... dt_n dt_1`` with ``θ_0 ≡ 1``."""
    indices = [int(j) for j in indices]
    p = schedule.n_controls
    if any(j < 0 or j > p for j in indices):
        raise InvalidArgumentError(f"indices must lie in 0..{p}")
    if not indices:
        return 1.0
    n = len(indices)
    # node l holds the tail of length l; its head is indices[n - l]
    heads = np.array([0] + [indices[n - l] for l in range(1, n + 1)])
    parents = np.array([0] + list(range(n)))
    return float(_integrate_tree(schedule, heads, parents, n, substeps)[-1])


def _tree_arrays(n_channels: int, max_len: int):
    """Heads and parent indices for all tuples up to ``max_len`` in level order.

    Inside level ``n`` the tuple ``(j1, ..., jn)`` has lexicographic rank
    ``j1 * c**(n-1) + rank(j2, ..., jn)``.
    """
    sizes = _level_sizes(n_channels, max_len)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    heads = [np.zeros(1, dtype=int)]
    parents = [np.zeros(1, dtype=int)]
    for n in range(1, max_len + 1):
        rank = np.arange(sizes[n])
        heads.append(rank // sizes[n - 1])
        parents.append(offsets[n - 1] + rank % sizes[n - 1])
    return np.concatenate(heads), np.concatenate(parents), offsets


def _zero_counts(n_channels: int, n: int) -> np.ndarray:
    counts = np.zeros(n_channels**n, dtype=int)
    rank = np.arange(n_channels**n)
    for _ in range(n):
        counts += (rank % n_channels) == 0
        rank //= n_channels
    return counts


def _word_expectations(model: ModelSpec, max_len: int) -> list:
    """Per level, ``Tr(M L_{j1} ... L_{jn} ρ0)`` for every tuple in lexicographic order."""
    ops = np.stack([model.encoders[0]] + list(model.controls))
    obs = model.observable
    psi = model.initial_state
    rho = np.outer(psi, psi.conj())[None]
    # Tr(M L_j R) = Tr(i [H_j, M] R): the last level needs no matrices
    dual = np.stack([1j * (h @ obs - obs @ h) for h in ops])
    out = [np.array([np.trace(obs @ rho[0])])]
    for n in range(1, max_len + 1):
        vals = np.einsum("jab,rba->jr", dual, rho).reshape(-1)
        out.append(vals)
        if n < max_len:
            # new rank = j * len(rho) + parent rank
            rho = (-1j * (np.einsum("jab,rbc->jrac", ops, rho) - np.einsum("rab,jbc->jrac", rho, ops)))
            rho = rho.reshape(-1, model.dim, model.dim)
    for vals in out:
        if np.max(np.abs(vals.imag), initial=0.0) > 1e-9:
            raise NumericalIntegrityError("nested Liouvillian expectation is not real")
    return [vals.real for vals in out]


def observable_word_expectation(model: ModelSpec, indices) -> complex:
    """``<ψ0| L_{j1} ... L_{jn} M |ψ0>`` with the Liouvillians acting on ``M``.

    Equals ``(-1)^n Tr(M L_{jn} ... L_{j1} ρ0)``.
    """
    ops = [model.encoders[0]] + list(model.controls)
    x = model.observable
    for j in reversed(list(indices)):
        x = liouvillian(ops[j], x)
    psi = model.initial_state
    return complex(np.vdot(psi, x @ psi))


def _require_univariate(model: ModelSpec):
    if model.n_inputs != 1:
        raise UnsupportedModelError("the Fliess expansion is implemented for single-input models only")


def fliess_series(model: ModelSpec, schedule: PulseSchedule, max_len: int = DEFAULT_MAX_LEN,
                  substeps: int = DEFAULT_SUBSTEPS, budget: int = DEFAULT_TUPLE_BUDGET) -> SeriesTruncation:
    """All coefficients ``C_0 ... C_max_len`` from tuples of length ``<= max_len``.

    ``tails[k]`` is the modulus of the length-``max_len`` contribution to
    ``C_k``, a rough indicator of the truncation error.
    """
    _require_univariate(model)
    if schedule.n_controls != model.n_controls:
        raise InvalidArgumentError("schedule and model disagree on the number of controls")
    if max_len < 0:
        raise InvalidArgumentError("max_len must be >= 0")
    c = model.n_controls + 1
    _check_budget(c, max_len, budget)
    heads, parents, offsets = _tree_arrays(c, max_len)
    integrals = _integrate_tree(schedule, heads, parents, max_len, substeps)
    words = _word_expectations(model, max_len)
    coeffs = np.zeros(max_len + 1)
    tails = np.zeros(max_len + 1)
    for n in range(max_len + 1):
        terms = integrals[offsets[n]:offsets[n + 1]] * words[n]
        per_k = np.bincount(_zero_counts(c, n), weights=terms, minlength=max_len + 1)
        coeffs += per_k
        if n == max_len:
            tails = np.abs(per_k)
    return SeriesTruncation(max_len, [(k, float(coeffs[k])) for k in range(max_len + 1)], [float(t) for t in tails])


def taylor_coefficient(model: ModelSpec, schedule: PulseSchedule, k: int, max_len: int = DEFAULT_MAX_LEN,
                       substeps: int = DEFAULT_SUBSTEPS, budget: int = DEFAULT_TUPLE_BUDGET) -> float:
    if not 0 <= k <= max_len:
        raise InvalidArgumentError("need 0 <= k <= max_len")
    return fliess_series(model, schedule, max_len, substeps, budget).coefficients[k][1]


def series_eval(truncation: SeriesTruncation, x: float) -> float:
    if abs(x) > 1:
        raise InvalidArgumentError("series is evaluated on [-1, 1] only")
    return float(sum(c * x**k for k, c in truncation.coefficients))


# five-point central stencils for derivatives 1..3 at offsets -2h..2h
_STENCILS = {
    1: (np.array([1, -8, 0, 8, -1]) / 12.0, 1),
    2: (np.array([-1, 16, -30, 16, -1]) / 12.0, 2),
    3: (np.array([-1, 2, 0, -2, 1]) / 2.0, 3),
}


def finite_difference_taylor(model: ModelSpec, schedule: PulseSchedule, k: int, step: float = 1e-2) -> float:
    """``f^(k)(0) / k!`` from five-point central differences of the simulated output."""
    if k == 0:
        return predict(model, [0.0], schedule)
    if k not in _STENCILS:
        raise InvalidArgumentError("finite-difference oracle covers k <= 3")
    weights, order = _STENCILS[k]
    values = np.array([predict(model, [i * step], schedule) for i in range(-2, 3)])
    return float(weights @ values / step**order / math.factorial(k))
