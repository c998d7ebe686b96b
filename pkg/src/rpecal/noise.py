"""Non-systematic imperfections: depolarizing noise, faulty SPAM and raw offsets.

Every quantity here is an additive error on an outcome probability.  The
three contributions (preparation, measurement, gate) add by the triangle
inequality and the total must stay below ``1/sqrt(8)`` for robust phase
estimation to converge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .gates import GateParams, gate_power, x_gate, z_gate
from .linalg2 import (
    IDENTITY,
    as_density,
    as_effect,
    bloch_vector,
    conjugate_channel,
    density_from_bloch,
    effect_distance,
    projector,
    trace_distance,
)

ADDITIVE_THRESHOLD = 1 / math.sqrt(8)

PREP_LABELS = ("0", "+", "r")
MEAS_LABELS = ("0", "+")


def depolarize(gamma: float, rho: np.ndarray) -> np.ndarray:
    """``gamma rho + (1 - gamma) I/2``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"depolarizing survival gamma={gamma} outside [0, 1]")
    return gamma * np.asarray(rho) + (1 - gamma) * IDENTITY / 2


def depolarizing_budget(gamma: float, k: int) -> float:
    """Worst-case additive error ``(1 - gamma^k) / 2`` after ``k`` noisy gates."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"depolarizing survival gamma={gamma} outside [0, 1]")
    if k < 0:
        raise ValueError("gate count must be non-negative")
    return (1 - gamma**k) / 2


def depolarizing_crossing(gamma: float, threshold: float = ADDITIVE_THRESHOLD) -> int | None:
    """Smallest gate count whose depolarizing budget reaches ``threshold``.

    Returns ``None`` when the budget never gets there (``gamma == 1`` or a
    threshold of at least 1/2).
    """
    if gamma >= 1.0 or threshold >= 0.5:
        return None
    if gamma <= 0.0:
        return 1 if threshold <= 0.5 else None
    # first k with gamma^k <= 1 - 2 threshold
    k = max(0, math.floor(math.log(1 - 2 * threshold) / math.log(gamma)) - 1)
    while depolarizing_budget(gamma, k) < threshold:
        k += 1
    return k


def z_error_budget(alpha: float, k: int) -> float:
    """Additive error from ``k`` composite rotations built with faulty Z gates."""
    return min(1.0, 4 * k * abs(math.sin(math.pi * alpha / 4)))


def derived_preparations(params: GateParams, rho0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Build approximate ``|+>`` and ``|r>`` preparations from a ``|0>`` preparation.

    ``|+>`` comes from two X gates followed by one Z gate, ``|r>`` from six X
    gates.
    """
    rho0 = as_density(rho0)
    x = x_gate(params.phi, params.epsilon, params.theta)
    rho_plus = conjugate_channel(z_gate(params.alpha) @ gate_power(x, 2), rho0)
    rho_arrow = conjugate_channel(gate_power(x, 6), rho0)
    return rho_plus, rho_arrow


PLUS_PREP_COEFFICIENT = 0.5 * (math.pi**4 / 8 * (12 + 4 * math.pi + math.pi**2)) ** 0.25


def plus_prep_bound(xi1: float, delta0: float = 0.0) -> float:
    """Leading-order trace-distance bound for the derived ``|+>`` preparation."""
    return PLUS_PREP_COEFFICIENT * abs(xi1) + delta0


def arrow_prep_bound(epsilon: float, theta: float, delta0: float = 0.0) -> float:
    """Leading-order trace-distance bound for the derived ``|r>`` preparation."""
    return 0.5 * (9 * math.pi**2 / 2 * theta**2 * epsilon**2) ** 0.25 + delta0


@dataclass(frozen=True)
class ErrorBudget:
    delta_prep: float
    delta_meas: float
    delta_gate: float
    delta_total: float

    @property
    def admissible(self) -> bool:
        return self.delta_total < ADDITIVE_THRESHOLD


def budget_total(delta_prep: float, delta_meas: float, delta_gate: float) -> ErrorBudget:
    for name, value in (("prep", delta_prep), ("meas", delta_meas), ("gate", delta_gate)):
        if value < 0:
            raise ValueError(f"delta_{name} must be non-negative")
    return ErrorBudget(delta_prep, delta_meas, delta_gate, delta_prep + delta_meas + delta_gate)


def _ideal_preps() -> Mapping[str, np.ndarray]:
    return MappingProxyType({label: projector(label) for label in PREP_LABELS})


def _ideal_effects() -> Mapping[str, np.ndarray]:
    return MappingProxyType({label: projector(label) for label in MEAS_LABELS})


@dataclass(frozen=True)
class NoiseModel:
    """Everything that is not a systematic gate error.

    Attributes:
        gamma: depolarizing survival per elementary gate; 1 is noiseless.
        preps: prepared density operator for each ideal state label
            (``"0"``, ``"+"``, ``"r"``).
        effects: implemented POVM effect for each ideal projector
            (``"0"``, ``"+"``).
        raw_offsets: additive probability offsets keyed by
            ``(protocol, flavor, k)``; applied last, then clamped to [0, 1].
        derived_preps: build ``|+>`` and ``|r>`` from the ``|0>`` preparation
            with the faulty gates instead of using ``preps`` directly.
    """

    gamma: float = 1.0
    preps: Mapping[str, np.ndarray] = field(default_factory=_ideal_preps)
    effects: Mapping[str, np.ndarray] = field(default_factory=_ideal_effects)
    raw_offsets: Mapping[tuple[str, str, int], float] = field(default_factory=dict)
    derived_preps: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma={self.gamma} outside [0, 1]")
        preps = dict(_ideal_preps())
        preps.update({k: as_density(v) for k, v in self.preps.items()})
        effects = dict(_ideal_effects())
        effects.update({k: as_effect(v) for k, v in self.effects.items()})
        object.__setattr__(self, "preps", MappingProxyType(preps))
        object.__setattr__(self, "effects", MappingProxyType(effects))
        object.__setattr__(self, "raw_offsets", MappingProxyType(dict(self.raw_offsets)))

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls()

    @property
    def is_ideal(self) -> bool:
        return (self.gamma == 1.0 and not self.raw_offsets and not self.derived_preps
                and all(np.array_equal(v, projector(k)) for k, v in self.preps.items())
                and all(np.array_equal(v, projector(k)) for k, v in self.effects.items()))

    def offset(self, protocol: str, flavor: str, k: int) -> float:
        return self.raw_offsets.get((protocol, flavor, k), 0.0)

    def prep_error(self, label: str) -> float:
        """Trace distance of the ``label`` preparation from the ideal state."""
        return trace_distance(self.preps[label], projector(label))

    def meas_error(self, label: str) -> float:
        return effect_distance(self.effects[label], projector(label))

    def spam_budget(self) -> float:
        """Largest preparation error plus largest measurement error."""
        prep = max(self.prep_error(k) for k in self.preps)
        meas = max(self.meas_error(k) for k in self.effects)
        return prep + meas

    @classmethod
    def from_config(cls, cfg: Mapping) -> "NoiseModel":
        """Build from the ``[noise]`` table of a campaign config.

        Preparations are given per label by ``tilt`` (polar rotation of the
        Bloch vector away from the ideal direction, radians), ``azimuth`` and
        ``purity`` (Bloch vector length).  Effects take ``tilt``, ``azimuth``,
        ``visibility`` and ``offset``; the effect is
        ``offset I + visibility P`` for the rotated projector ``P``.  Raw
        offsets are a list of ``{protocol, flavor, k, value}`` tables.
        """
        preps = {}
        for label, spec in cfg.get("prep", {}).items():
            r = _perturb(bloch_vector(projector(label)), spec.get("tilt", 0.0), spec.get("azimuth", 0.0))
            preps[label] = density_from_bloch(spec.get("purity", 1.0) * r)
        effects = {}
        for label, spec in cfg.get("meas", {}).items():
            r = _perturb(bloch_vector(projector(label)), spec.get("tilt", 0.0), spec.get("azimuth", 0.0))
            proj = density_from_bloch(r)
            effects[label] = spec.get("offset", 0.0) * IDENTITY + spec.get("visibility", 1.0) * proj
        offsets = {(o["protocol"], o["flavor"], int(o["k"])): float(o["value"])
                   for o in cfg.get("raw_offsets", [])}
        return cls(gamma=cfg.get("gamma", 1.0), preps=preps, effects=effects,
                   raw_offsets=offsets, derived_preps=cfg.get("derived_preps", False))


def _perturb(r: np.ndarray, tilt: float, azimuth: float) -> np.ndarray:
    """Rotate unit vector ``r`` by ``tilt`` towards a perpendicular direction set by ``azimuth``."""
    r = np.asarray(r, dtype=float)
    if tilt == 0.0:
        return r
    helper = np.array([0.0, 0.0, 1.0]) if abs(r[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(r, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(r, e1)
    direction = math.cos(azimuth) * e1 + math.sin(azimuth) * e2
    return math.cos(tilt) * r + math.sin(tilt) * direction
