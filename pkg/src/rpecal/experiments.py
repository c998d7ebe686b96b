"""Calibration experiments: sequences, exact outcome probabilities and sampling.

Each protocol has a cos-flavor and a sin-flavor experiment whose success
probabilities are ``(1 + cos(kA))/2`` and ``(1 + sin(kA))/2`` up to additive
errors:

- alpha: ``Z^k`` between ``|+>`` (cos) or ``|r>`` (sin) and a ``|+>`` measurement.
- epsilon: ``X^k`` between ``|0>`` (cos) or ``|r>`` (sin) and a ``|0>`` measurement.
- theta_composite: ``U^k`` with ``U = Z X^q Z Z X^q Z``, same states as epsilon.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Literal, Protocol

import numpy as np

from .gates import GateParams, composite_u, gate_power, signed_rotation_angle, x_gate, z_gate
from .linalg2 import dagger, expectation, ket
from .noise import NoiseModel, depolarize, derived_preparations

ProtocolName = Literal["alpha", "epsilon", "theta_composite"]
Flavor = Literal["cos", "sin"]

PROTOCOLS: tuple[str, ...] = ("alpha", "epsilon", "theta_composite")
FLAVORS: tuple[str, ...] = ("cos", "sin")

_PREP = {
    ("alpha", "cos"): "+", ("alpha", "sin"): "r",
    ("epsilon", "cos"): "0", ("epsilon", "sin"): "r",
    ("theta_composite", "cos"): "0", ("theta_composite", "sin"): "r",
}
_MEAS = {"alpha": "+", "epsilon": "0", "theta_composite": "0"}

# stream tags for seed derivation; values are part of the reproducibility contract
_PROTOCOL_TAG = {"alpha": 1, "epsilon": 2, "theta_composite": 3, "replay": 4, "synthetic": 5}
_TIE_TAG = 101


@dataclass(frozen=True)
class ExperimentSpec:
    protocol: str
    flavor: str
    k: int
    shots: int
    q: int = 4

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if self.k < 1 or self.shots < 1:
            raise ValueError("k and shots must be at least 1")

    @property
    def prep_label(self) -> str:
        return _PREP[self.protocol, self.flavor]

    @property
    def meas_label(self) -> str:
        return _MEAS[self.protocol]


@dataclass(frozen=True)
class OutcomeCounts:
    a0: int
    a_plus: int
    shots: int

    def __post_init__(self):
        if not (0 <= self.a0 <= self.shots and 0 <= self.a_plus <= self.shots):
            raise ValueError(f"counts ({self.a0}, {self.a_plus}) outside [0, {self.shots}]")


def unit_gate(protocol: str, params: GateParams, q: int = 4) -> np.ndarray:
    if protocol == "alpha":
        return z_gate(params.alpha)
    if protocol == "epsilon":
        return x_gate(params.phi, params.epsilon, params.theta)
    if protocol == "theta_composite":
        return composite_u(params.epsilon, params.theta, params.alpha, q, params.phi)
    raise ValueError(f"unknown protocol {protocol!r}")


def gates_per_unit(protocol: str, q: int = 4) -> int:
    return 4 + 2 * q if protocol == "theta_composite" else 1


def gate_count(protocol: str, flavor: str, k: int, q: int = 4, derived_preps: bool = False) -> int:
    """Elementary gates applied in one shot of the experiment."""
    n = k * gates_per_unit(protocol, q)
    if derived_preps:
        prep = _PREP[protocol, flavor]
        n += {"0": 0, "+": 3, "r": 6}[prep]
    return n


def ideal_probability(protocol: str, flavor: str, k: int, params: GateParams, q: int = 4) -> float:
    """Success probability with perfect preparation and measurement."""
    spec = ExperimentSpec(protocol, flavor, k, 1, q)
    g = gate_power(unit_gate(protocol, params, q), k)
    amp = ket(spec.meas_label).conj() @ g @ ket(spec.prep_label)
    return float(abs(amp) ** 2)


def template_phase(protocol: str, params: GateParams) -> float:
    """The phase ``A`` the ideal experiments encode, before wrapping.

    For the composite protocol this is the signed rotation angle, which only
    matches the template up to small axis-tilt residuals.
    """
    if protocol == "alpha":
        return -math.pi / 2 * (1 + params.alpha)
    if protocol == "epsilon":
        return params.phi * (1 + params.epsilon)
    if protocol == "theta_composite":
        return signed_rotation_angle(unit_gate(protocol, params))
    raise ValueError(f"unknown protocol {protocol!r}")


def noisy_probability(spec: ExperimentSpec, params: GateParams, noise: NoiseModel) -> float:
    """Success probability under faulty SPAM, per-gate depolarizing and raw offsets.

    Depolarizing noise commutes with every unitary channel, so ``n`` gates each
    followed by ``Lambda_gamma`` equal the ideal sequence followed by
    ``Lambda_{gamma^n}``.
    """
    if noise.derived_preps and spec.prep_label != "0":
        rho_plus, rho_arrow = derived_preparations(params, noise.preps["0"])
        rho = rho_plus if spec.prep_label == "+" else rho_arrow
    else:
        rho = noise.preps[spec.prep_label]
    g = gate_power(unit_gate(spec.protocol, params, spec.q), spec.k)
    out = g @ rho @ dagger(g)
    n = gate_count(spec.protocol, spec.flavor, spec.k, spec.q, noise.derived_preps)
    if noise.gamma < 1.0:
        out = depolarize(noise.gamma**n, out)
    p = expectation(noise.effects[spec.meas_label], out)
    p += noise.offset(spec.protocol, spec.flavor, spec.k)
    return min(1.0, max(0.0, p))


def stream_seed(root_seed: int, tag: int, *index: int) -> np.random.SeedSequence:
    """Independent RNG stream for ``(tag, *index)`` under ``root_seed``."""
    return np.random.SeedSequence(entropy=int(root_seed), spawn_key=(int(tag), *map(int, index)))


def sample(spec: ExperimentSpec, p_cos: float, p_sin: float, seed: int,
           generation: int = 0) -> OutcomeCounts:
    """Draw cos- and sin-flavor success counts, ``spec.shots`` each.

    The stream depends only on ``(seed, protocol, k, generation)``; the
    flavor of ``spec`` is ignored since both flavors are drawn together.
    """
    for p in (p_cos, p_sin):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")
    rng = np.random.default_rng(stream_seed(seed, _PROTOCOL_TAG[spec.protocol], spec.k, generation))
    a0 = int(rng.binomial(spec.shots, p_cos))
    a_plus = int(rng.binomial(spec.shots, p_sin))
    return OutcomeCounts(a0, a_plus, spec.shots)


def tie_angle(seed: int, generation: int, block: int = 0) -> float:
    """Uniform angle in ``(-pi, pi]`` for the ``a0 = a_plus = M/2`` tie."""
    u = np.random.default_rng(stream_seed(seed, _TIE_TAG, generation, block)).random()
    return math.pi - 2 * math.pi * u


def phase_from_counts(counts: OutcomeCounts, tie: float | None = None) -> float:
    """``atan2(2 a_plus/M - 1, 2 a0/M - 1)`` in ``(-pi, pi]``.

    Args:
        counts: cos/sin success counts.
        tie: the angle to return when both arguments vanish.  Required in
            that case; see :func:`tie_angle` for the seeded choice.
    """
    m = counts.shots
    if 2 * counts.a0 == m and 2 * counts.a_plus == m:
        if tie is None:
            raise ValueError("counts sit at the tie point; a tie angle is required")
        return tie
    angle = math.atan2(2 * counts.a_plus / m - 1, 2 * counts.a0 / m - 1)
    return math.pi if angle == -math.pi else angle


class ExperimentOracle(Protocol):
    """Anything that answers both flavors of the ``k``-th experiment."""

    def __call__(self, k: int, shots: int, generation: int, seed: int) -> OutcomeCounts: ...


class SimulatorOracle:
    """Oracle backed by :func:`noisy_probability` and :func:`sample`."""

    def __init__(self, protocol: str, params: GateParams, noise: NoiseModel | None = None, q: int = 4):
        if protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {protocol!r}")
        self.protocol = protocol
        self.params = params
        self.noise = noise if noise is not None else NoiseModel.ideal()
        self.q = q
        self._cache: dict[int, tuple[float, float]] = {}

    def probabilities(self, k: int) -> tuple[float, float]:
        if k not in self._cache:
            self._cache[k] = tuple(
                noisy_probability(ExperimentSpec(self.protocol, f, k, 1, self.q), self.params, self.noise)
                for f in FLAVORS
            )
        return self._cache[k]

    def __call__(self, k: int, shots: int, generation: int, seed: int) -> OutcomeCounts:
        p_cos, p_sin = self.probabilities(k)
        return sample(ExperimentSpec(self.protocol, "cos", k, shots, self.q), p_cos, p_sin, seed, generation)


@dataclass(frozen=True)
class TranscriptRecord:
    """One generation of one protocol: the experiment and what it returned."""

    protocol: str
    generation: int
    k: int
    shots: int
    a0: int
    a_plus: int
    seed: int

    @property
    def counts(self) -> OutcomeCounts:
        return OutcomeCounts(self.a0, self.a_plus, self.shots)


TRANSCRIPT_FIELDS = ("protocol", "generation", "k", "shots", "a0", "a_plus", "seed")


def write_transcript_csv(records: Iterable[TranscriptRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRANSCRIPT_FIELDS, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow(asdict(rec))


def read_transcript_csv(path: str | Path) -> list[TranscriptRecord]:
    with open(path, newline="") as fh:
        return [_record_from_dict(row) for row in csv.DictReader(fh)]


def write_transcript_jsonl(records: Iterable[TranscriptRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")


def read_transcript_jsonl(path: str | Path) -> list[TranscriptRecord]:
    with open(path) as fh:
        return [_record_from_dict(json.loads(line)) for line in fh if line.strip()]


def read_transcript(path: str | Path) -> list[TranscriptRecord]:
    """Read a transcript, choosing the format from the file suffix."""
    path = Path(path)
    if path.suffix in (".jsonl", ".json"):
        return read_transcript_jsonl(path)
    return read_transcript_csv(path)


def _record_from_dict(row: dict) -> TranscriptRecord:
    return TranscriptRecord(
        protocol=str(row["protocol"]),
        generation=int(row["generation"]),
        k=int(row["k"]),
        shots=int(row["shots"]),
        a0=int(row["a0"]),
        a_plus=int(row["a_plus"]),
        seed=int(row["seed"]),
    )


class ReplayOracle:
    """Oracle answering from a recorded transcript of a single protocol run."""

    def __init__(self, records: Iterable[TranscriptRecord]):
        self._by_generation = {r.generation: r for r in records}

    def __call__(self, k: int, shots: int, generation: int, seed: int) -> OutcomeCounts:
        try:
            rec = self._by_generation[generation]
        except KeyError:
            raise LookupError(f"transcript has no generation {generation}") from None
        if rec.k != k or rec.shots != shots:
            raise LookupError(
                f"transcript generation {generation} has k={rec.k}, shots={rec.shots}; "
                f"requested k={k}, shots={shots}"
            )
        return rec.counts


def derive_seed(root_seed: int, tag: int) -> int:
    """A 63-bit child seed for an independent stage of a larger computation."""
    state = stream_seed(root_seed, tag).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))
