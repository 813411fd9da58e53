"""YAML experiment configs and the symbolic operator syntax they use.

Operator strings::

    "ZZ on (1,2)"          Pauli letters on the listed 1-based sites
    "X on 1"
    "XIZ"                  full-length Pauli label, site 1 leftmost
    "spin_irrep(5).Jx"     irrep matrices Jx, Jy, Jz
    "0.5*Z on 1 + Z on 2"  real linear combinations joined by '+'

States are bitstrings over ``0 1 + -`` (one character per qubit),
``"highest_weight"`` or ``"basis:<index>"``.
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np
import yaml

from .diagnostics import FamilyKind, ModelFamily, build_family
from .errors import InvalidArgumentError, PulseQMLError
from .operators import ModelSpec, basis_state, pauli_string, product_state, rescale_observable, spin_irrep


class ConfigError(PulseQMLError):
    """Malformed or incomplete experiment config; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


_ON = re.compile(r"^([XYZ]+)\s+on\s+\(?\s*([\d\s,]+?)\s*\)?$", re.IGNORECASE)
_LABEL = re.compile(r"^[IXYZ]+$", re.IGNORECASE)
_SPIN = re.compile(r"^spin_irrep\(\s*(\d+)\s*\)\.(J[xyz])$", re.IGNORECASE)
_TERM = re.compile(r"^(?:([-+]?[\d.eE+-]+)\s*\*\s*)?(.+)$")

_SINGLE_QUBIT = {
    "0": [1.0, 0.0],
    "1": [0.0, 1.0],
    "+": [2**-0.5, 2**-0.5],
    "-": [2**-0.5, -(2**-0.5)],
}


def load_yaml(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("--config", "top level must be a mapping")
    return data


def require(cfg: dict, key: str, where: str = ""):
    full = f"{where}.{key}" if where else key
    if not isinstance(cfg, dict) or key not in cfg:
        raise ConfigError(full, "missing")
    return cfg[key]


def _single_operator(text: str, n_qubits):
    m = _SPIN.match(text)
    if m:
        mats = dict(zip(("jx", "jy", "jz"), spin_irrep(int(m.group(1)))))
        return mats[m.group(2).lower()]
    m = _ON.match(text)
    if m:
        letters = m.group(1).upper()
        sites = [int(s) for s in re.split(r"[\s,]+", m.group(2).strip()) if s]
        if len(letters) != len(sites):
            raise InvalidArgumentError(f"{text!r}: {len(letters)} Paulis for {len(sites)} sites")
        if n_qubits is None:
            raise InvalidArgumentError(f"{text!r} needs model.n_qubits")
        return pauli_string(list(zip(sites, letters)), n_qubits)
    if _LABEL.match(text):
        axes = [(i + 1, ch) for i, ch in enumerate(text.upper()) if ch != "I"]
        return pauli_string(axes, len(text))
    raise InvalidArgumentError(f"cannot parse operator {text!r}")


def parse_operator(text: str, n_qubits=None) -> np.ndarray:
    total = None
    for raw in re.split(r"\s\+\s", str(text).strip()):
        m = _TERM.match(raw.strip())
        coef = float(m.group(1)) if m.group(1) else 1.0
        op = coef * _single_operator(m.group(2).strip(), n_qubits)
        total = op if total is None else total + op
    return total


def parse_state(text: str, dim: int) -> np.ndarray:
    text = str(text).strip()
    if text == "highest_weight":
        return basis_state(0, dim)
    if text.startswith("basis:"):
        return basis_state(int(text.split(":", 1)[1]), dim)
    if text and all(ch in _SINGLE_QUBIT for ch in text):
        state = product_state(*[_SINGLE_QUBIT[ch] for ch in text])
        if state.shape[0] != dim:
            raise InvalidArgumentError(f"state {text!r} has dimension {state.shape[0]}, model has {dim}")
        return state
    raise InvalidArgumentError(f"cannot parse state {text!r}")


def family_from_config(model_cfg: dict, where: str = "model") -> ModelFamily:
    kind = require(model_cfg, "family", where)
    try:
        kind = FamilyKind(str(kind).lower())
    except ValueError:
        raise ConfigError(f"{where}.family", f"unknown family {kind!r}; use one of "
                          f"{[k.value for k in FamilyKind]}") from None
    size = model_cfg.get("size", 2 if kind is FamilyKind.TWO_QUBIT else None)
    if size is None:
        raise ConfigError(f"{where}.size", "missing")
    try:
        return ModelFamily(kind, int(size), model_cfg.get("initial_state"),
                           model_cfg.get("observable", "weight_sign"))
    except InvalidArgumentError as exc:
        raise ConfigError(where, str(exc)) from None


def model_from_config(cfg: dict):
    """Return ``(ModelSpec, ModelFamily or None)`` from the ``model`` section."""
    model_cfg = require(cfg, "model")
    if not isinstance(model_cfg, dict):
        raise ConfigError("model", "must be a mapping")
    if "family" in model_cfg or "encoders" not in model_cfg:
        family = family_from_config(model_cfg)
        return build_family(family), family
    n_qubits = model_cfg.get("n_qubits")
    try:
        encoders = [parse_operator(t, n_qubits) for t in require(model_cfg, "encoders", "model")]
        controls = [parse_operator(t, n_qubits) for t in require(model_cfg, "controls", "model")]
        obs = parse_operator(require(model_cfg, "observable", "model"), n_qubits)
        if model_cfg.get("rescale_observable", False):
            obs = rescale_observable(obs)
        psi0 = parse_state(require(model_cfg, "initial_state", "model"), obs.shape[0])
        labels = {
            "encoders": list(model_cfg["encoders"]),
            "controls": list(model_cfg["controls"]),
            "observable": model_cfg["observable"],
        }
        return ModelSpec(encoders, controls, obs, psi0, labels), None
    except ConfigError:
        raise
    except PulseQMLError as exc:
        raise ConfigError("model", str(exc)) from None


def get_int(cfg: dict, key: str, default=None, where: str = "", minimum=None) -> int:
    full = f"{where}.{key}" if where else key
    value = cfg.get(key, default) if isinstance(cfg, dict) else default
    if value is None:
        raise ConfigError(full, "missing")
    try:
        value = int(value)
    except (TypeError, ValueError):
        raise ConfigError(full, f"expected an integer, got {value!r}") from None
    if minimum is not None and value < minimum:
        raise ConfigError(full, f"must be >= {minimum}")
    return value


def get_float(cfg: dict, key: str, default=None, where: str = "", positive=False) -> float:
    full = f"{where}.{key}" if where else key
    value = cfg.get(key, default) if isinstance(cfg, dict) else default
    if value is None:
        raise ConfigError(full, "missing")
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(full, f"expected a number, got {value!r}") from None
    if positive and not value > 0:
        raise ConfigError(full, "must be positive")
    return value
