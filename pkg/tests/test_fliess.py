import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pulseqml.dynamics import PulseSchedule, predict
from pulseqml.errors import BudgetExceededError, InvalidArgumentError, UnsupportedModelError
from pulseqml.fliess import (
    SeriesTruncation,
    finite_difference_taylor,
    fliess_series,
    iterated_integral,
    observable_word_expectation,
    series_eval,
    taylor_coefficient,
)
from pulseqml.operators import ModelSpec, basis_state, pauli_string

from conftest import random_model, two_qubit


def shuffles(u, v):
    """All interleavings of two words, with multiplicity."""
    n = len(u) + len(v)
    for positions in itertools.combinations(range(n), len(u)):
        word, iu, iv = [], iter(u), iter(v)
        for i in range(n):
            word.append(next(iu) if i in positions else next(iv))
        yield tuple(word)


def test_empty_tuple_is_one(rng):
    assert iterated_integral(PulseSchedule(rng.normal(size=(3, 2)), 0.1), ()) == 1.0


@pytest.mark.parametrize("n", range(1, 7))
def test_drift_channel_closed_form(rng, n):
    sched = PulseSchedule(rng.normal(size=(4, 2)), 0.25)
    assert abs(iterated_integral(sched, (0,) * n) - 1.0**n / math.factorial(n)) < 1e-10


@pytest.mark.parametrize("a, n", [(0.7, 2), (-1.3, 2), (2.0, 3), (0.4, 5)])
def test_constant_control_closed_form(a, n):
    sched = PulseSchedule(np.full((5, 2), a), 0.2)
    assert abs(iterated_integral(sched, (1,) * n) - (a * sched.duration) ** n / math.factorial(n)) < 1e-10


def test_piecewise_first_moment(rng):
    # c_(1,0) = ∫ θ_1(t) t dt for the outer time carrying the control
    amps = rng.normal(size=(6, 1))
    dt = 0.15
    k = np.arange(6)
    expected = np.sum(amps[:, 0] * ((k + 1) ** 2 - k**2) * dt**2 / 2)
    assert abs(iterated_integral(PulseSchedule(amps, dt), (1, 0)) - expected) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=3), st.lists(st.integers(0, 2), min_size=1, max_size=3),
       st.integers(0, 2**32 - 1))
def test_shuffle_identity(u, v, seed):
    sched = PulseSchedule(np.random.default_rng(seed).uniform(-2, 2, (4, 2)), 0.2)
    lhs = iterated_integral(sched, tuple(u)) * iterated_integral(sched, tuple(v))
    rhs = sum(iterated_integral(sched, w) for w in shuffles(u, v))
    assert abs(lhs - rhs) < 1e-8


def test_substeps_validated():
    with pytest.raises(InvalidArgumentError):
        iterated_integral(PulseSchedule([[1.0]], 0.1), (1, 1), substeps=0)


def test_zero_schedule_series():
    series = fliess_series(two_qubit(), PulseSchedule(np.zeros((3, 2)), 0.1), max_len=6)
    c = series.as_array()
    assert abs(c[0] - 1) < 1e-12
    assert np.all(np.abs(c[1:]) < 1e-12)


def test_even_coefficients_vanish_for_odd_model(rng):
    sched = PulseSchedule(rng.uniform(-1, 1, (4, 2)), 0.1)
    c = fliess_series(two_qubit("0+"), sched, max_len=7).as_array()
    assert np.all(np.abs(c[0::2]) < 1e-12)
    assert np.max(np.abs(c[1::2])) > 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_coefficients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    model = two_qubit("00")
    sched = PulseSchedule(rng.uniform(-1, 1, (5, 2)), 0.1)
    series = fliess_series(model, sched, max_len=8)
    for k in range(4):
        assert abs(series.coefficients[k][1] - finite_difference_taylor(model, sched, k)) < 1e-4


def test_liouvillian_order_and_sign(rng):
    """The literal observable-side word differs from the state-side one by order reversal and (-1)^n."""
    model = random_model(rng, 3)
    ops = [model.encoders[0]] + list(model.controls)
    rho = np.outer(model.initial_state, model.initial_state.conj())
    for word in [(1,), (0, 2), (2, 1, 0), (1, 1, 2, 0)]:
        r = rho
        for j in reversed(word):
            h = ops[j]
            r = -1j * (h @ r - r @ h)
        state_side = np.trace(model.observable @ r)
        assert np.isclose(observable_word_expectation(model, word[::-1]), (-1) ** len(word) * state_side)


def test_series_converges_at_expected_order(rng):
    model = two_qubit("00")
    sched = PulseSchedule(rng.uniform(-1, 1, (2, 2)), 0.1)
    full = fliess_series(model, sched, max_len=10)
    k_top = 3
    top = SeriesTruncation(full.max_len, full.coefficients[: k_top + 1])
    xs = np.linspace(0.02, 0.2, 6)
    err = [abs(series_eval(top, x) - predict(model, x, sched)) for x in xs]
    slope = np.polyfit(np.log(xs), np.log(err), 1)[0]
    assert slope > k_top + 0.5


def test_series_eval_examples():
    assert series_eval(SeriesTruncation(3, [(0, 0.0), (1, 0.0)]), 0.4) == 0
    assert series_eval(SeriesTruncation(0, [(0, 1.0)]), 0.7) == 1
    with pytest.raises(InvalidArgumentError):
        series_eval(SeriesTruncation(0, [(0, 1.0)]), 1.5)


def test_taylor_coefficient_zero_order():
    assert abs(taylor_coefficient(two_qubit(), PulseSchedule(np.zeros((2, 2)), 0.1), 0) - 1) < 1e-12


def test_budget_reports_requirement():
    with pytest.raises(BudgetExceededError) as info:
        fliess_series(two_qubit(), PulseSchedule(np.zeros((2, 2)), 0.1), max_len=10, budget=1000)
    assert info.value.required == 3**10 and info.value.budget == 1000


def test_multivariate_rejected():
    zz = pauli_string([(1, "Z"), (2, "Z")], 2)
    model = ModelSpec([zz, pauli_string([(1, "Z")], 2)], [pauli_string([(1, "X")], 2)], zz, basis_state(0, 4))
    with pytest.raises(UnsupportedModelError):
        fliess_series(model, PulseSchedule([[0.0]], 0.1))
