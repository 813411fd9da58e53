"""Model families and gradient-variance experiments for barren-plateau diagnosis."""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .dynamics import PulseSchedule, outputs_and_gradient
from .errors import BudgetExceededError, InvalidArgumentError
from .operators import ModelSpec, basis_state, pauli_string, product_state, rescale_observable, spin_irrep
from .training import Dataset, init_schedule, sample_target

DEFAULT_DIM_BUDGET = 64
PROBE_POINTS = 16


class FamilyKind(str, enum.Enum):
    TWO_QUBIT = "two_qubit"
    SU2_IRREP = "su2_irrep"
    RING = "ring"


_INITIAL_STATES = {
    FamilyKind.TWO_QUBIT: ("00", "0+"),
    FamilyKind.SU2_IRREP: ("highest_weight",),
    FamilyKind.RING: ("zeros",),
}


@dataclass(frozen=True)
class ModelFamily:
    """A named model construction.

    ``size`` is the qubit count for ``TWO_QUBIT`` and ``RING`` and the irrep
    dimension ``d`` for ``SU2_IRREP``. ``observable`` only matters for the
    irrep family: ``"weight_sign"`` is +1 on positive weights, -1 on negative
    weights and 0 on a zero weight, which is Z on the first qubit when
    ``d = 2**n``; ``"jz"`` is ``Jz`` rescaled to [-1, 1].
    """

    kind: FamilyKind
    size: int
    initial_state: Optional[str] = None
    observable: str = "weight_sign"

    def __post_init__(self):
        kind = FamilyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is FamilyKind.TWO_QUBIT and self.size != 2:
            raise InvalidArgumentError("the two-qubit family has size 2")
        if kind is FamilyKind.RING and self.size < 2:
            raise InvalidArgumentError("the ring family needs at least 2 qubits")
        if kind is FamilyKind.SU2_IRREP and self.size < 2:
            raise InvalidArgumentError("the irrep family needs dimension >= 2")
        state = self.initial_state or _INITIAL_STATES[kind][0]
        if state not in _INITIAL_STATES[kind]:
            raise InvalidArgumentError(f"initial state {state!r} not available for {kind.value}")
        object.__setattr__(self, "initial_state", state)
        if self.observable not in ("weight_sign", "jz"):
            raise InvalidArgumentError(f"unknown observable choice {self.observable!r}")

    @property
    def hilbert_dim(self) -> int:
        return self.size if self.kind is FamilyKind.SU2_IRREP else 2**self.size


def weight_sign_observable(d: int) -> np.ndarray:
    j = (d - 1) / 2
    return np.diag(np.sign(j - np.arange(d))).astype(complex)


def build_family(family: ModelFamily) -> ModelSpec:
    kind, n = family.kind, family.size
    if kind is FamilyKind.TWO_QUBIT:
        zz = pauli_string([(1, "Z"), (2, "Z")], 2)
        second = [1.0, 0.0] if family.initial_state == "00" else np.array([1.0, 1.0]) / np.sqrt(2)
        return ModelSpec(
            encoders=[zz],
            controls=[pauli_string([(1, "X")], 2), pauli_string([(1, "Y")], 2)],
            observable=zz,
            initial_state=product_state([1.0, 0.0], second),
            labels={"encoders": ["ZZ"], "controls": ["XI", "YI"], "observable": "ZZ"},
        )
    if kind is FamilyKind.SU2_IRREP:
        jx, jy, jz = spin_irrep(n)
        obs = weight_sign_observable(n) if family.observable == "weight_sign" else rescale_observable(jz)
        return ModelSpec(
            encoders=[jz],
            controls=[jx, jy],
            observable=obs,
            initial_state=basis_state(0, n),
            labels={"encoders": ["Jz"], "controls": ["Jx", "Jy"], "observable": family.observable},
        )
    encoder = sum(pauli_string([(k, "Z")], n) for k in range(1, n + 1))
    controls, labels = [], []
    for k in range(1, n + 1):
        for axis in "XY":
            controls.append(pauli_string([(k, axis)], n))
            labels.append(f"{axis}{k}")
    for k in range(1, n + 1):
        nxt = k % n + 1
        controls.append(pauli_string([(k, "Z"), (nxt, "Z")], n))
        labels.append(f"Z{k}Z{nxt}")
    return ModelSpec(
        encoders=[encoder],
        controls=controls,
        observable=pauli_string([(1, "Z")], n),
        initial_state=basis_state(0, 2**n),
        labels={"encoders": ["sum Z"], "controls": labels, "observable": "Z1"},
    )


def probe_dataset(n_points: int = PROBE_POINTS) -> Dataset:
    return sample_target("SIGMOID_F2", n_points)


@dataclass
class VarianceRecord:
    family: str
    size: int
    K: int
    dt: float
    num_samples: int
    seed: int
    param_index: Optional[tuple]
    variance: float
    per_parameter_variances: Optional[np.ndarray] = None

    def csv_row(self) -> dict:
        idx = "all" if self.param_index is None else f"{self.param_index[0]}:{self.param_index[1]}"
        return {
            "family": self.family,
            "size": self.size,
            "K": self.K,
            "dt": self.dt,
            "num_samples": self.num_samples,
            "seed": self.seed,
            "param_index": idx,
            "variance": self.variance,
        }


def _sample_gradient(model, data, K, dt, seed, index, probe_step):
    schedule = init_schedule(K, model.n_controls, dt, 1.0, seed=(seed, index))
    n = len(data)

    def weights(f, rows):
        return 2.0 * (f - data.y[rows]) / n

    steps = None if probe_step is None else [probe_step]
    return outputs_and_gradient(model, data.x, schedule, weights, steps=steps)[1]


def gradient_samples(model: ModelSpec, K: int, dt: float, num_samples: int, seed: int,
                     probe: Union[tuple, str, None] = (0, 0), data: Optional[Dataset] = None,
                     threads: int = 1) -> np.ndarray:
    """Loss gradients at ``num_samples`` random schedules, shape ``(num_samples, K, p)``.

    Sample ``i`` is drawn from the stream seeded with ``(seed, i)``, so the
    result does not depend on ``threads``. With a single-parameter ``probe``
    only that step's gradient row is filled in.
    """
    data = probe_dataset() if data is None else data
    probe_step = None if probe in (None, "all", "ALL") else int(probe[0])

    def work(i):
        return _sample_gradient(model, data, K, dt, seed, i, probe_step)

    if threads <= 1:
        grads = [work(i) for i in range(num_samples)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            grads = list(pool.map(work, range(num_samples)))
    return np.stack(grads)


def gradient_variance(family: ModelFamily, K: int, dt: float, num_samples: int, seed: int = 0,
                      probe: Union[tuple, str] = (0, 0), data: Optional[Dataset] = None,
                      threads: int = 1) -> VarianceRecord:
    """Unbiased sample variance of ``dL/dθ`` over random initial schedules.

    ``probe`` is a zero-based ``(step, control)`` pair, default the first
    parameter, or ``"all"`` for the full ``K x p`` table (the record's
    ``variance`` is then the table mean).
    """
    if num_samples < 2:
        raise InvalidArgumentError("need at least two samples for a variance")
    model = build_family(family)
    full = probe in ("all", "ALL", None)
    if not full:
        k, j = probe
        if not (0 <= k < K and 0 <= j < model.n_controls):
            raise InvalidArgumentError(f"probe {probe} outside the {K} x {model.n_controls} parameter grid")
    grads = gradient_samples(model, K, dt, num_samples, seed, None if full else probe, data, threads)
    if full:
        table = np.var(grads, axis=0, ddof=1)
        return VarianceRecord(family.kind.value, family.size, K, dt, num_samples, seed, None,
                              float(np.mean(table)), table)
    values = grads[:, probe[0], probe[1]]
    return VarianceRecord(family.kind.value, family.size, K, dt, num_samples, seed, tuple(probe),
                          float(np.var(values, ddof=1)))


def sweep_layers(family: ModelFamily, K_values: Sequence[int], dt: float, num_samples: int, seed: int = 0,
                 threads: int = 1, **kwargs) -> list:
    K_values = list(K_values)
    if K_values != sorted(K_values):
        raise InvalidArgumentError("K values must be ascending")
    return [gradient_variance(family, K, dt, num_samples, seed, threads=threads, **kwargs) for K in K_values]


def sweep_size(kind: Union[FamilyKind, str], sizes: Sequence[int], K: int, dt: float, num_samples: int,
               seed: int = 0, threads: int = 1, dim_budget: int = DEFAULT_DIM_BUDGET,
               family_options: Optional[dict] = None, **kwargs) -> list:
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise InvalidArgumentError("sizes must be ascending")
    families = [ModelFamily(FamilyKind(kind), s, **(family_options or {})) for s in sizes]
    for fam in families:
        if fam.hilbert_dim > dim_budget:
            raise BudgetExceededError(
                f"dimension {fam.hilbert_dim} exceeds the budget of {dim_budget}",
                required=fam.hilbert_dim,
                budget=dim_budget,
            )
    return [gradient_variance(fam, K, dt, num_samples, seed, threads=threads, **kwargs) for fam in families]


def plateau_onset(records: Sequence[VarianceRecord], rel_change: float = 0.2) -> Optional[int]:
    """Smallest ``K`` from which every later step changes the variance by less than ``rel_change``."""
    values = [r.variance for r in records]
    onset = None
    for i in range(len(values) - 1, 0, -1):
        if abs(values[i] - values[i - 1]) / values[i - 1] < rel_change:
            onset = records[i - 1].K
        else:
            break
    return onset
