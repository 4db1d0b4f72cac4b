"""Pauli algebra and the stabilizer-circuit representation with its text format."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

__all__ = [
    "Pauli",
    "PauliString",
    "Instruction",
    "Circuit",
    "CircuitError",
    "ParseError",
    "Violation",
    "compose",
    "conjugate_through",
    "parse_circuit",
    "serialize",
    "validate",
    "NOISE_OPS",
    "GATE_OPS",
    "ANNOTATION_OPS",
]


class CircuitError(ValueError):
    """Raised for malformed circuits or invalid operations on them."""


class ParseError(CircuitError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class Pauli(enum.IntEnum):
    """Single-qubit Pauli, encoded as (x bit) | (z bit << 1)."""

    I = 0
    X = 1
    Z = 2
    Y = 3

    @property
    def x(self) -> bool:
        return bool(self & 1)

    @property
    def z(self) -> bool:
        return bool(self & 2)

    @classmethod
    def from_bits(cls, x: bool, z: bool) -> "Pauli":
        return cls(int(bool(x)) | (int(bool(z)) << 1))


@dataclass(frozen=True)
class PauliString:
    """Phase-less Pauli operator on ``n`` qubits as two bitmasks (bit q = qubit q)."""

    n: int
    x_mask: int = 0
    z_mask: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("negative qubit count")
        limit = 1 << self.n
        if not (0 <= self.x_mask < limit and 0 <= self.z_mask < limit):
            raise ValueError(f"mask wider than {self.n} qubits")

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n)

    @classmethod
    def single(cls, n: int, qubit: int, pauli: Pauli | str) -> "PauliString":
        p = Pauli[pauli] if isinstance(pauli, str) else Pauli(pauli)
        return cls(n, int(p.x) << qubit, int(p.z) << qubit)

    @classmethod
    def from_text(cls, text: str) -> "PauliString":
        """Parse a dense string such as ``"XIZY"`` (qubit 0 first)."""
        x = z = 0
        for q, ch in enumerate(text):
            p = Pauli[ch]
            x |= int(p.x) << q
            z |= int(p.z) << q
        return cls(len(text), x, z)

    def __getitem__(self, qubit: int) -> Pauli:
        return Pauli.from_bits((self.x_mask >> qubit) & 1, (self.z_mask >> qubit) & 1)

    def __mul__(self, other: "PauliString") -> "PauliString":
        return compose(self, other)

    def __str__(self) -> str:
        return "".join(self[q].name for q in range(self.n))

    @property
    def weight(self) -> int:
        return bin(self.x_mask | self.z_mask).count("1")

    def is_identity(self) -> bool:
        return self.x_mask == 0 and self.z_mask == 0


def compose(a: PauliString, b: PauliString) -> PauliString:
    """Product of two Pauli strings with the phase dropped."""
    if a.n != b.n:
        raise ValueError(f"size mismatch: {a.n} vs {b.n} qubits")
    return PauliString(a.n, a.x_mask ^ b.x_mask, a.z_mask ^ b.z_mask)


NOISE_OPS = frozenset({"X_ERROR", "Z_ERROR", "DEPOLARIZE1", "DEPOLARIZE2"})
GATE_OPS = frozenset({"H", "CX", "CZ"})
ANNOTATION_OPS = frozenset({"DETECTOR", "OBSERVABLE_INCLUDE"})
MEASURE_OPS = frozenset({"M", "MR"})
RESET_OPS = frozenset({"R", "MR"})
PAIR_OPS = frozenset({"CX", "CZ", "DEPOLARIZE2"})
OPCODES = frozenset({"R", "M", "MR", "TICK"}) | NOISE_OPS | GATE_OPS | ANNOTATION_OPS


@dataclass(frozen=True)
class Instruction:
    """One circuit instruction.

    ``targets`` are qubit indices, except for DETECTOR and OBSERVABLE_INCLUDE where
    they are look-back distances ``k`` meaning ``rec[-k]``. ``arg`` is the channel
    probability for noise opcodes and the observable index for OBSERVABLE_INCLUDE.
    """

    opcode: str
    targets: tuple[int, ...] = ()
    arg: float | None = None

    def __post_init__(self):
        if self.opcode not in OPCODES:
            raise CircuitError(f"unknown opcode {self.opcode!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))

    @property
    def is_noise(self) -> bool:
        return self.opcode in NOISE_OPS

    def pairs(self) -> list[tuple[int, int]]:
        t = self.targets
        return [(t[i], t[i + 1]) for i in range(0, len(t) - 1, 2)]

    def __str__(self) -> str:
        return _format_instruction(self)


@dataclass(frozen=True)
class Circuit:
    """Immutable ordered instruction list with optional lattice coordinates."""

    num_qubits: int
    instructions: tuple[Instruction, ...] = ()
    coords: Mapping[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        object.__setattr__(self, "coords", dict(sorted(self.coords.items())))

    def __len__(self) -> int:
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Circuit):
            return NotImplemented
        return (
            self.num_qubits == other.num_qubits
            and self.instructions == other.instructions
            and dict(self.coords) == dict(other.coords)
        )

    def __hash__(self) -> int:
        return hash((self.num_qubits, self.instructions))

    @property
    def num_measurements(self) -> int:
        return sum(len(i.targets) for i in self.instructions if i.opcode in MEASURE_OPS)

    @property
    def num_detectors(self) -> int:
        return sum(1 for i in self.instructions if i.opcode == "DETECTOR")

    @property
    def num_observables(self) -> int:
        obs = [int(i.arg) for i in self.instructions if i.opcode == "OBSERVABLE_INCLUDE"]
        return max(obs) + 1 if obs else 0

    def count(self, opcode: str) -> int:
        """Number of target entries (pairs for two-qubit opcodes) of ``opcode``."""
        n = sum(len(i.targets) for i in self.instructions if i.opcode == opcode)
        return n // 2 if opcode in PAIR_OPS else n

    def without_noise(self) -> "Circuit":
        return Circuit(
            self.num_qubits,
            tuple(i for i in self.instructions if not i.is_noise),
            self.coords,
        )

    def has_noise(self) -> bool:
        return any(i.is_noise for i in self.instructions)

    def __str__(self) -> str:
        return serialize(self)


def _gate_error(gate: Instruction) -> CircuitError:
    return CircuitError(f"unsupported gate for conjugation: {gate.opcode}")


def conjugate_through(gate: Instruction, frame: PauliString) -> PauliString:
    """Conjugate ``frame`` by a Clifford gate (H, CX or CZ), phases dropped."""
    if gate.opcode not in GATE_OPS:
        raise _gate_error(gate)
    x, z = frame.x_mask, frame.z_mask
    if gate.opcode == "H":
        for q in gate.targets:
            if q >= frame.n:
                raise CircuitError(f"target {q} outside {frame.n}-qubit frame")
            bx, bz = (x >> q) & 1, (z >> q) & 1
            if bx != bz:
                x ^= 1 << q
                z ^= 1 << q
        return PauliString(frame.n, x, z)
    if len(gate.targets) % 2:
        raise CircuitError(f"{gate.opcode} needs an even number of targets")
    for c, t in gate.pairs():
        if max(c, t) >= frame.n or c == t:
            raise CircuitError(f"invalid pair ({c}, {t})")
        if gate.opcode == "CX":
            x ^= ((x >> c) & 1) << t
            z ^= ((z >> t) & 1) << c
        else:
            z ^= ((x >> c) & 1) << t
            z ^= ((x >> t) & 1) << c
    return PauliString(frame.n, x, z)


# ---------------------------------------------------------------------------
# Text format

_LINE_RE = re.compile(r"^([A-Z_][A-Z0-9_]*)(?:\(([^)]*)\))?\s*(.*)$")
_REC_RE = re.compile(r"^rec\[-(\d+)\]$")
_PROB_RE = re.compile(r"^\d*\.?\d+(?:[eE][-+]?\d+)?$")


def _fmt_float(v: float) -> str:
    return repr(float(v))


def _format_instruction(ins: Instruction) -> str:
    op = ins.opcode
    if op == "TICK":
        return "TICK"
    if op == "DETECTOR":
        return " ".join(["DETECTOR", *(f"rec[-{k}]" for k in ins.targets)])
    if op == "OBSERVABLE_INCLUDE":
        head = f"OBSERVABLE_INCLUDE({int(ins.arg)})"
        return " ".join([head, *(f"rec[-{k}]" for k in ins.targets)])
    head = op if ins.arg is None else f"{op}({_fmt_float(ins.arg)})"
    return " ".join([head, *map(str, ins.targets)])


def serialize(circuit: Circuit) -> str:
    """Canonical text form; ``parse_circuit(serialize(c)) == c``."""
    lines = []
    for q, (x, y) in circuit.coords.items():
        lines.append(f"QUBIT_COORDS({_fmt_float(x)}, {_fmt_float(y)}) {q}")
    lines.extend(_format_instruction(i) for i in circuit.instructions)
    return "\n".join(lines) + ("\n" if lines else "")


def parse_circuit(text: str, num_qubits: int | None = None) -> Circuit:
    """Parse the line-oriented circuit format.

    ``num_qubits`` defaults to one more than the largest qubit index seen.
    """
    instructions: list[Instruction] = []
    coords: dict[int, tuple[float, float]] = {}
    max_q = -1
    n_meas = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise ParseError(lineno, f"cannot parse {raw.strip()!r}")
        op, argtext, rest = m.group(1), m.group(2), m.group(3).split()
        if op == "QUBIT_COORDS":
            try:
                xy = tuple(float(v) for v in (argtext or "").split(","))
                (q,) = (int(t) for t in rest)
            except ValueError:
                raise ParseError(lineno, "QUBIT_COORDS expects (x, y) and one qubit") from None
            if len(xy) != 2:
                raise ParseError(lineno, "QUBIT_COORDS expects two coordinates")
            coords[q] = (xy[0], xy[1])
            max_q = max(max_q, q)
            continue
        if op not in OPCODES:
            raise ParseError(lineno, f"unknown opcode {op!r}")
        arg = None
        if op in NOISE_OPS:
            if argtext is None or not _PROB_RE.match(argtext.strip()):
                raise ParseError(lineno, f"malformed probability {argtext!r}")
            arg = float(argtext)
            if not 0.0 <= arg <= 1.0:
                raise ParseError(lineno, f"probability {arg} outside [0, 1]")
        elif op == "OBSERVABLE_INCLUDE":
            if argtext is None or not argtext.strip().isdigit():
                raise ParseError(lineno, "OBSERVABLE_INCLUDE needs an integer index")
            arg = float(int(argtext))
        elif argtext is not None:
            raise ParseError(lineno, f"{op} takes no argument")
        targets = []
        if op in ANNOTATION_OPS:
            for tok in rest:
                rm = _REC_RE.match(tok)
                if not rm or int(rm.group(1)) < 1:
                    raise ParseError(lineno, f"bad measurement reference {tok!r}")
                k = int(rm.group(1))
                if k > n_meas:
                    raise ParseError(lineno, f"rec[-{k}] refers before the first measurement")
                targets.append(k)
        else:
            for tok in rest:
                if not tok.isdigit():
                    raise ParseError(lineno, f"bad qubit target {tok!r}")
                targets.append(int(tok))
            if targets:
                max_q = max(max_q, max(targets))
            if op in PAIR_OPS and len(targets) % 2:
                raise ParseError(lineno, f"{op} needs an even number of targets")
            if op in MEASURE_OPS:
                n_meas += len(targets)
        instructions.append(Instruction(op, tuple(targets), arg))
    n = max_q + 1 if num_qubits is None else num_qubits
    return Circuit(n, tuple(instructions), coords)


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    index: int
    message: str

    def __str__(self) -> str:
        return f"instruction {self.index}: {self.message}"


def validate(circuit: Circuit) -> list[Violation]:
    """Check every structural invariant; returns one entry per violation."""
    out: list[Violation] = []
    n_meas = 0
    for idx, ins in enumerate(circuit.instructions):
        op = ins.opcode
        if op in NOISE_OPS:
            if ins.arg is None or not 0.0 <= ins.arg <= 1.0:
                out.append(Violation(idx, f"{op} probability {ins.arg} outside [0, 1]"))
        elif op == "OBSERVABLE_INCLUDE":
            if ins.arg is None or ins.arg < 0 or ins.arg != int(ins.arg):
                out.append(Violation(idx, "observable index must be a non-negative integer"))
        elif ins.arg is not None:
            out.append(Violation(idx, f"{op} must not carry an argument"))
        if op in ANNOTATION_OPS:
            for k in ins.targets:
                if k < 1 or k > n_meas:
                    out.append(
                        Violation(idx, f"rec[-{k}] does not resolve ({n_meas} earlier measurements)")
                    )
            continue
        for q in ins.targets:
            if not 0 <= q < circuit.num_qubits:
                out.append(Violation(idx, f"qubit {q} outside 0..{circuit.num_qubits - 1}"))
        if op in PAIR_OPS:
            if len(ins.targets) % 2:
                out.append(Violation(idx, f"{op} has an odd number of targets"))
            for a, b in ins.pairs():
                if a == b:
                    out.append(Violation(idx, f"{op} pair acts twice on qubit {a}"))
        if op == "TICK" and ins.targets:
            out.append(Violation(idx, "TICK takes no targets"))
        if op in MEASURE_OPS:
            n_meas += len(ins.targets)
    return out


def measurement_qubits(circuit: Circuit) -> list[int]:
    """Qubit measured by each measurement record, in record order."""
    out: list[int] = []
    for ins in circuit.instructions:
        if ins.opcode in MEASURE_OPS:
            out.extend(ins.targets)
    return out


def resolve_annotations(circuit: Circuit) -> tuple[list[list[int]], list[list[int]]]:
    """Absolute record indices for every detector and every observable."""
    detectors: list[list[int]] = []
    observables: dict[int, list[int]] = {}
    n_meas = 0
    for ins in circuit.instructions:
        if ins.opcode in MEASURE_OPS:
            n_meas += len(ins.targets)
        elif ins.opcode == "DETECTOR":
            detectors.append([n_meas - k for k in ins.targets])
        elif ins.opcode == "OBSERVABLE_INCLUDE":
            observables.setdefault(int(ins.arg), []).extend(n_meas - k for k in ins.targets)
    n_obs = max(observables) + 1 if observables else 0
    return detectors, [observables.get(i, []) for i in range(n_obs)]


def ensure_valid(circuit: Circuit) -> None:
    problems = validate(circuit)
    if problems:
        shown = "; ".join(map(str, problems[:5]))
        more = f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""
        raise CircuitError(f"invalid circuit: {shown}{more}")


def pauli_string(n: int, paulis: Iterable[tuple[int, Pauli | str]]) -> PauliString:
    """Build a PauliString from (qubit, pauli) pairs."""
    out = PauliString.identity(n)
    for q, p in paulis:
        out = compose(out, PauliString.single(n, q, p))
    return out

