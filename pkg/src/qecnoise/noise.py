"""Error-type and noise-model injection, plus the Pauli channel samplers."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import Circuit, Instruction, Pauli

__all__ = [
    "ErrorType",
    "NoiseModel",
    "NoiseSpec",
    "NoiseError",
    "apply_error_type",
    "apply_noise_model",
    "apply_noise",
    "injection_plan",
    "strip_noise",
    "sample_depolarize1",
    "sample_depolarize2",
]


class NoiseError(ValueError):
    pass


class ErrorType(enum.Enum):
    DEPOLARIZING = "depolarizing"
    GATE = "gate"
    READOUT = "readout"
    RESET = "reset"


class NoiseModel(enum.Enum):
    CODE_CAPACITY = "code_capacity"
    PHENOMENOLOGICAL = "phenomenological"
    CIRCUIT_LEVEL = "circuit_level"


MODEL_COMPONENTS: dict[NoiseModel, tuple[ErrorType, ...]] = {
    NoiseModel.CODE_CAPACITY: (ErrorType.DEPOLARIZING, ErrorType.GATE),
    NoiseModel.PHENOMENOLOGICAL: (ErrorType.READOUT, ErrorType.RESET),
    NoiseModel.CIRCUIT_LEVEL: (
        ErrorType.DEPOLARIZING,
        ErrorType.GATE,
        ErrorType.READOUT,
        ErrorType.RESET,
    ),
}

NOISE_SOURCES = {e.value: e for e in ErrorType} | {m.value: m for m in NoiseModel}


def parse_source(name: str | ErrorType | NoiseModel) -> ErrorType | NoiseModel:
    if isinstance(name, (ErrorType, NoiseModel)):
        return name
    key = name.strip().lower().replace("-", "_").replace(" ", "_")
    try:
        return NOISE_SOURCES[key]
    except KeyError:
        raise NoiseError(f"unknown noise source {name!r}; expected one of {sorted(NOISE_SOURCES)}") from None


@dataclass(frozen=True)
class NoiseSpec:
    source: ErrorType | NoiseModel
    p: float

    def __post_init__(self):
        object.__setattr__(self, "source", parse_source(self.source))
        if not 0.0 <= self.p <= 1.0:
            raise NoiseError(f"probability {self.p} outside [0, 1]")

    @property
    def components(self) -> tuple[ErrorType, ...]:
        if isinstance(self.source, ErrorType):
            return (self.source,)
        return MODEL_COMPONENTS[self.source]

    def to_json(self) -> dict:
        return {"source": self.source.value, "p": self.p}

    @classmethod
    def from_json(cls, obj: dict) -> "NoiseSpec":
        return cls(obj["source"], float(obj["p"]))


def _memory_structure(circuit: Circuit) -> tuple[tuple[int, ...], list[int]]:
    """Data qubits and round-start positions of a memory-experiment circuit.

    Data qubits are the targets of the final measurement; a round starts at every
    reset that touches no data qubit.
    """
    last_m = next((i for i in reversed(circuit.instructions) if i.opcode == "M"), None)
    if last_m is None:
        raise NoiseError("depolarizing injection needs a memory circuit ending in M")
    data = tuple(sorted(set(last_m.targets)))
    ds = set(data)
    starts = [
        k
        for k, ins in enumerate(circuit.instructions)
        if ins.opcode == "R" and ds.isdisjoint(ins.targets)
    ]
    return data, starts


Insertion = tuple[int, int, Instruction]  # (anchor index, slot, instruction)

# slot ordering around an anchor instruction: before < anchor < after-reset < round start
_BEFORE, _AFTER, _ROUND = -1, 1, 2


def injection_plan(
    circuit: Circuit,
    kinds: Iterable[ErrorType],
    p: float,
    strict: bool = False,
) -> set[Insertion]:
    """Noise insertions for ``kinds`` keyed by their anchor in the clean circuit.

    ``strict`` adds a Z flip next to every readout/reset X flip.
    """
    if not 0.0 <= p <= 1.0:
        raise NoiseError(f"probability {p} outside [0, 1]")
    if circuit.has_noise():
        raise NoiseError("circuit already contains noise instructions")
    kinds = set(kinds)
    plan: set[Insertion] = set()
    flips = ("X_ERROR", "Z_ERROR") if strict else ("X_ERROR",)
    if ErrorType.DEPOLARIZING in kinds:
        data, starts = _memory_structure(circuit)
        for k in starts:
            plan.add((k, _ROUND, Instruction("DEPOLARIZE1", data, p)))
    for k, ins in enumerate(circuit.instructions):
        op = ins.opcode
        if ErrorType.GATE in kinds and op == "H":
            plan.add((k, _AFTER, Instruction("DEPOLARIZE1", ins.targets, p)))
        if ErrorType.GATE in kinds and op in ("CX", "CZ"):
            plan.add((k, _AFTER, Instruction("DEPOLARIZE2", ins.targets, p)))
        if ErrorType.READOUT in kinds and op in ("M", "MR"):
            for name in flips:
                plan.add((k, _BEFORE, Instruction(name, ins.targets, p)))
        if ErrorType.RESET in kinds and op in ("R", "MR"):
            for name in flips:
                plan.add((k, _AFTER, Instruction(name, ins.targets, p)))
    return plan


def _materialize(circuit: Circuit, plan: set[Insertion]) -> Circuit:
    before: dict[int, list[Instruction]] = {}
    after: dict[int, list[tuple[int, str, Instruction]]] = {}
    for k, slot, ins in plan:
        if slot == _BEFORE:
            before.setdefault(k, []).append(ins)
        else:
            after.setdefault(k, []).append((slot, ins.opcode, ins))
    out: list[Instruction] = []
    for k, ins in enumerate(circuit.instructions):
        out += sorted(before.get(k, ()), key=lambda i: i.opcode)
        out.append(ins)
        out += [i for _, _, i in sorted(after.get(k, ()), key=lambda t: (t[0], t[1]))]
    return Circuit(circuit.num_qubits, tuple(out), circuit.coords)


def apply_error_type(circuit: Circuit, t: ErrorType | str, p: float, strict: bool = False) -> Circuit:
    t = parse_source(t)
    if not isinstance(t, ErrorType):
        raise NoiseError(f"{t} is a noise model, not an error type")
    return _materialize(circuit, injection_plan(circuit, [t], p, strict))


def apply_noise_model(circuit: Circuit, m: NoiseModel | str, p: float, strict: bool = False) -> Circuit:
    m = parse_source(m)
    if not isinstance(m, NoiseModel):
        raise NoiseError(f"{m} is an error type, not a noise model")
    return _materialize(circuit, injection_plan(circuit, MODEL_COMPONENTS[m], p, strict))


def apply_noise(circuit: Circuit, spec: NoiseSpec, strict: bool = False) -> Circuit:
    return _materialize(circuit, injection_plan(circuit, spec.components, spec.p, strict))


def strip_noise(circuit: Circuit) -> Circuit:
    return circuit.without_noise()


def sample_depolarize1(p: float, rng: np.random.Generator) -> Pauli:
    """I with probability 1-p, otherwise X, Y or Z uniformly."""
    if not 0.0 <= p <= 1.0:
        raise NoiseError(f"probability {p} outside [0, 1]")
    if rng.random() >= p:
        return Pauli.I
    return Pauli(1 + int(rng.integers(3)))


def sample_depolarize2(p: float, rng: np.random.Generator) -> tuple[Pauli, Pauli]:
    """(I, I) with probability 1-p, otherwise one of the 15 other pairs uniformly."""
    if not 0.0 <= p <= 1.0:
        raise NoiseError(f"probability {p} outside [0, 1]")
    if rng.random() >= p:
        return Pauli.I, Pauli.I
    k = 1 + int(rng.integers(15))
    return Pauli(k & 3), Pauli(k >> 2)
