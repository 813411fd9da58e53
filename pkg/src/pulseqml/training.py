"""Full-batch Adam fitting of pulse schedules to one-dimensional targets."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .dynamics import PulseSchedule, outputs_and_gradient, predict_batch
from .errors import InvalidArgumentError, NumericalIntegrityError, RangeViolationError
from .operators import ModelSpec

RANGE_TOL = 1e-12

# Descending-power coefficients of 2x + 3x^2 + x^3 + 10x^6 + 8x^7 - 3x^9 + 5x^10 - 13x^12
_POLY_F1 = np.poly1d([-13, 0, 5, -3, 0, 8, 10, 0, 0, 1, 3, 2, 0])


def poly_f1(x):
    return _POLY_F1(np.asarray(x, dtype=float))


def _abs_max_on_unit_interval(poly: np.poly1d) -> float:
    crit = poly.deriv().r
    crit = crit[(np.abs(crit.imag) < 1e-12) & (np.abs(crit.real) <= 1)].real
    return float(np.max(np.abs(poly(np.concatenate([crit, [-1.0, 1.0]])))))


POLY_F1_MAX = _abs_max_on_unit_interval(_POLY_F1)


def poly_f1_scaled(x):
    """The degree-12 polynomial target divided by its maximum modulus on [-1, 1]."""
    return poly_f1(x) / POLY_F1_MAX


def sigmoid_f2(x):
    x = np.asarray(x, dtype=float)
    return -np.expm1(-10 * x) / (1 + np.exp(-10 * x))


TARGETS: dict[str, Callable] = {
    "POLY_F1": poly_f1,
    "POLY_F1_SCALED": poly_f1_scaled,
    "SIGMOID_F2": sigmoid_f2,
}


@dataclass(frozen=True, eq=False)
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] == 0 or x.shape[0] != y.shape[0]:
            raise InvalidArgumentError("dataset needs matching, non-empty x and y")
        if np.any(np.abs(x) > 1):
            raise InvalidArgumentError("inputs must lie in [-1, 1]")
        if np.any(np.abs(y) > 1 + RANGE_TOL):
            raise RangeViolationError(
                f"targets reach {np.max(np.abs(y)):.6g}, outside the observable range [-1, 1]"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.y.shape[0]


def sample_target(target: Union[str, Callable], n_points: int, domain=(-1.0, 1.0)) -> Dataset:
    """Evaluate a target on ``n_points`` evenly spaced inputs, endpoints included."""
    if n_points < 2:
        raise InvalidArgumentError("n_points must be >= 2")
    if isinstance(target, str):
        try:
            fn = TARGETS[target.upper()]
        except KeyError:
            raise InvalidArgumentError(f"unknown target {target!r}; choose from {sorted(TARGETS)}") from None
    else:
        fn = target
    lo, hi = domain
    if not -1 <= lo < hi <= 1:
        raise InvalidArgumentError(f"domain {domain} must be a sub-interval of [-1, 1]")
    x = np.linspace(lo, hi, n_points)
    return Dataset(x, fn(x))


def table_dataset(rows) -> Dataset:
    rows = np.asarray(rows, dtype=float)
    return Dataset(rows[:, :-1], rows[:, -1])


def loss(model: ModelSpec, schedule: PulseSchedule, data: Dataset) -> float:
    residual = predict_batch(model, data.x, schedule) - data.y
    return float(np.mean(residual**2))


def loss_and_gradient(model: ModelSpec, schedule: PulseSchedule, data: Dataset):
    n = len(data)

    def weights(f, rows):
        return 2.0 * (f - data.y[rows]) / n

    f, grad = outputs_and_gradient(model, data.x, schedule, weights)
    return float(np.mean((f - data.y) ** 2)), grad


def gradient(model: ModelSpec, schedule: PulseSchedule, data: Dataset) -> np.ndarray:
    """Exact ``dL/dθ`` of the mean squared error, shape ``K x p``."""
    return loss_and_gradient(model, schedule, data)[1]


@dataclass
class TrainConfig:
    iterations: int = 100
    learning_rate: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise InvalidArgumentError("iterations must be >= 0")
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise InvalidArgumentError("Adam betas must lie in (0, 1)")
        if not self.adam_eps > 0:
            raise InvalidArgumentError("adam_eps must be positive")


@dataclass
class TrainResult:
    final_schedule: PulseSchedule
    loss_history: list
    grad_norms: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]


class Adam:
    def __init__(self, shape, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_rng(seed) -> np.random.Generator:
    """Counter-based Philox stream; identical draws on every platform.

    ``seed`` is a non-negative integer or a sequence of them (e.g. ``(seed, sample_index)``).
    """
    entropy = [int(s) for s in seed] if isinstance(seed, (tuple, list)) else int(seed)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def init_schedule(n_steps: int, n_controls: int, dt: float, init_scale: float = 1.0, seed=0) -> PulseSchedule:
    if n_steps < 1 or n_controls < 1:
        raise InvalidArgumentError("need at least one step and one control")
    amps = make_rng(seed).uniform(-1.0, 1.0, size=(n_steps, n_controls)) * init_scale
    return PulseSchedule(amps, dt)


def train(model: ModelSpec, schedule_init: PulseSchedule, data: Dataset, config: TrainConfig,
          callback=None) -> TrainResult:
    """Minimize the MSE with Adam; ``loss_history[i]`` is the loss before update ``i``.

    The history holds ``iterations + 1`` entries, the last one being the loss of
    the returned schedule. ``callback(iteration, loss, grad_norm)`` is invoked
    once per recorded entry.
    """
    start = time.perf_counter()
    dt = schedule_init.dt
    params = np.array(schedule_init.amplitudes)
    opt = Adam(params.shape, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    history, norms = [], []
    for it in range(config.iterations + 1):
        value, grad = loss_and_gradient(model, PulseSchedule(params, dt), data)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            raise NumericalIntegrityError(f"non-finite loss or gradient at iteration {it}")
        history.append(value)
        norms.append(float(np.linalg.norm(grad)))
        if callback is not None:
            callback(it, value, norms[-1])
        if it < config.iterations:
            params = opt.step(params, grad)
    return TrainResult(PulseSchedule(params, dt), history, norms, time.perf_counter() - start)
