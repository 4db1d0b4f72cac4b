"""Memory-experiment circuits for rotated/unrotated surface codes and the repetition code."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .core import Circuit, Instruction

__all__ = [
    "CodeSpec",
    "LayoutMap",
    "SpecError",
    "FAMILIES",
    "build_layout",
    "build_memory",
    "build_rotated_surface",
    "build_unrotated_surface",
    "build_repetition",
    "stabilizer_schedule",
    "default_rounds",
    "resource_count",
    "qubit_count",
]

FAMILIES = ("rotated", "unrotated", "repetition")

Coord = tuple[int, int]

# CX order per check type, as (dx, dy) offsets from the ancilla to its data qubits.
# The last two steps of each order are chosen perpendicular to the logical operator
# that the corresponding hook error would extend, so hooks never shorten the distance.
_ROTATED_ORDER = {
    "X": ((1, 1), (-1, 1), (1, -1), (-1, -1)),
    "Z": ((1, 1), (1, -1), (-1, 1), (-1, -1)),
}
_UNROTATED_ORDER = {
    "X": ((0, 1), (1, 0), (-1, 0), (0, -1)),
    "Z": ((0, 1), (1, 0), (-1, 0), (0, -1)),
}


class SpecError(ValueError):
    """Invalid code parameters."""


@dataclass(frozen=True)
class CodeSpec:
    family: str
    distance: int
    rounds: int | None = None
    basis: str = "Z"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SpecError(f"unknown code family {self.family!r}")
        if self.distance < 3 or self.distance % 2 == 0:
            raise SpecError(f"distance must be odd and >= 3, got {self.distance}")
        if self.rounds is None:
            object.__setattr__(self, "rounds", default_rounds(self.distance))
        if self.rounds < 1:
            raise SpecError(f"rounds must be >= 1, got {self.rounds}")
        if self.basis not in ("Z", "X"):
            raise SpecError(f"basis must be 'Z' or 'X', got {self.basis!r}")
        if self.family == "repetition" and self.basis != "Z":
            raise SpecError("the repetition code only protects a Z-basis memory")


@dataclass(frozen=True)
class LayoutMap:
    """Qubit placement and check structure of one code patch.

    ``plaquettes`` maps each ancilla index to its data qubits in CX-step order, with
    ``None`` at steps where the (boundary) check has no partner.
    """

    family: str
    distance: int
    basis: str
    data_qubits: dict[Coord, int]
    x_ancillas: dict[Coord, int]
    z_ancillas: dict[Coord, int]
    plaquettes: dict[int, tuple[int | None, ...]]
    logical_z: tuple[int, ...]
    logical_x: tuple[int, ...]
    coords: dict[int, Coord] = field(default_factory=dict)

    @property
    def num_qubits(self) -> int:
        return len(self.data_qubits) + len(self.x_ancillas) + len(self.z_ancillas)

    @property
    def data(self) -> list[int]:
        return sorted(self.data_qubits.values())

    @property
    def ancillas(self) -> list[int]:
        return sorted([*self.x_ancillas.values(), *self.z_ancillas.values()])

    @property
    def x_ancilla_set(self) -> frozenset[int]:
        return frozenset(self.x_ancillas.values())

    @property
    def z_ancilla_set(self) -> frozenset[int]:
        return frozenset(self.z_ancillas.values())

    def check_type(self, ancilla: int) -> str:
        if ancilla in self.x_ancilla_set:
            return "X"
        if ancilla in self.z_ancilla_set:
            return "Z"
        raise KeyError(f"qubit {ancilla} is not an ancilla")

    def support(self, ancilla: int) -> list[int]:
        return [q for q in self.plaquettes[ancilla] if q is not None]

    @property
    def observable(self) -> tuple[int, ...]:
        """Data support of the logical operator measured by the memory experiment."""
        return self.logical_z if self.basis == "Z" else self.logical_x


def default_rounds(distance: int) -> int:
    """Rounds used throughout the benchmarks: three per unit of distance."""
    if distance < 1:
        raise SpecError("distance must be >= 1")
    return 3 * distance


def qubit_count(family: str, distance: int) -> int:
    """Closed-form physical qubit count of a patch."""
    d = distance
    if family == "rotated":
        return 2 * d * d - 1
    if family == "unrotated":
        return (2 * d - 1) ** 2
    if family == "repetition":
        return 2 * d - 1
    raise SpecError(f"unknown code family {family!r}")


def _index(data: dict[Coord, str]) -> dict[Coord, int]:
    # row-major over (y, x) so indices follow the lattice picture
    return {c: i for i, c in enumerate(sorted(data, key=lambda c: (c[1], c[0])))}


def _finish(family, d, basis, kinds, order, lz, lx) -> LayoutMap:
    index = _index(kinds)
    data = {c: index[c] for c, k in kinds.items() if k == "D"}
    xa = {c: index[c] for c, k in kinds.items() if k == "X"}
    za = {c: index[c] for c, k in kinds.items() if k == "Z"}
    plaquettes = {}
    for anc_map, t in ((xa, "X"), (za, "Z")):
        for (x, y), a in anc_map.items():
            plaquettes[a] = tuple(data.get((x + dx, y + dy)) for dx, dy in order[t])
    return LayoutMap(
        family=family,
        distance=d,
        basis=basis,
        data_qubits=data,
        x_ancillas=xa,
        z_ancillas=za,
        plaquettes=dict(sorted(plaquettes.items())),
        logical_z=tuple(sorted(data[c] for c in lz)),
        logical_x=tuple(sorted(data[c] for c in lx)),
        coords={i: c for c, i in index.items()},
    )


def _rotated_layout(d: int, basis: str) -> LayoutMap:
    kinds: dict[Coord, str] = {}
    for r in range(d):
        for c in range(d):
            kinds[(2 * c + 1, 2 * r + 1)] = "D"
    for y in range(0, 2 * d + 1, 2):
        for x in range(0, 2 * d + 1, 2):
            t = "X" if ((x + y) // 2) % 2 == 0 else "Z"
            on_tb = y in (0, 2 * d)
            on_lr = x in (0, 2 * d)
            if on_tb and on_lr:
                continue
            if on_tb and t != "X":
                continue
            if on_lr and t != "Z":
                continue
            kinds[(x, y)] = t
    # X strings end on the top/bottom edges, Z strings on the left/right edges.
    lz = [(2 * c + 1, 1) for c in range(d)]
    lx = [(1, 2 * r + 1) for r in range(d)]
    return _finish("rotated", d, basis, kinds, _ROTATED_ORDER, lz, lx)


def _unrotated_layout(d: int, basis: str) -> LayoutMap:
    n = 2 * d - 1
    kinds: dict[Coord, str] = {}
    for y in range(n):
        for x in range(n):
            if (x + y) % 2 == 0:
                kinds[(x, y)] = "D"
            else:
                kinds[(x, y)] = "X" if x % 2 == 1 else "Z"
    lz = [(x, 0) for x in range(0, n, 2)]
    lx = [(0, y) for y in range(0, n, 2)]
    return _finish("unrotated", d, basis, kinds, _UNROTATED_ORDER, lz, lx)


def _repetition_layout(d: int) -> LayoutMap:
    kinds: dict[Coord, str] = {}
    for i in range(2 * d - 1):
        kinds[(i, 0)] = "D" if i % 2 == 0 else "Z"
    order = {"Z": ((-1, 0), (1, 0))}
    layout = _finish("repetition", d, "Z", kinds, order, [(0, 0)], [])
    # no X checks: the chain protects Z-basis information only
    return layout


def build_layout(spec: CodeSpec) -> LayoutMap:
    if spec.family == "rotated":
        return _rotated_layout(spec.distance, spec.basis)
    if spec.family == "unrotated":
        return _unrotated_layout(spec.distance, spec.basis)
    return _repetition_layout(spec.distance)


def _cx_layers(layout: LayoutMap) -> list[Instruction]:
    steps = max(len(p) for p in layout.plaquettes.values())
    xs = layout.x_ancilla_set
    layers = []
    for k in range(steps):
        targets: list[int] = []
        for a, plaq in layout.plaquettes.items():
            if k >= len(plaq) or plaq[k] is None:
                continue
            q = plaq[k]
            targets += (a, q) if a in xs else (q, a)
        if targets:
            layers.append(Instruction("CX", tuple(targets)))
    return layers


def stabilizer_schedule(layout: LayoutMap) -> list[Instruction]:
    """One round of stabilizer measurement.

    Z checks collect data parity with data->ancilla CX; X checks are conjugated by
    H and use ancilla->data CX. Every check follows the same local step order.
    """
    anc = tuple(layout.ancillas)
    xanc = tuple(sorted(layout.x_ancilla_set))
    block = [Instruction("R", anc), Instruction("TICK")]
    if xanc:
        block += [Instruction("H", xanc), Instruction("TICK")]
    for layer in _cx_layers(layout):
        block += [layer, Instruction("TICK")]
    if xanc:
        block += [Instruction("H", xanc), Instruction("TICK")]
    block.append(Instruction("M", anc))
    return block


def build_memory(spec: CodeSpec) -> Circuit:
    """Noiseless memory experiment for any family."""
    layout = build_layout(spec)
    basis = spec.basis
    data = tuple(layout.data)
    anc = tuple(layout.ancillas)
    checked = layout.z_ancilla_set if basis == "Z" else layout.x_ancilla_set

    ins: list[Instruction] = [Instruction("R", data)]
    if basis == "X":
        ins.append(Instruction("H", data))
    ins.append(Instruction("TICK"))

    n_meas = 0
    last: dict[int, int] = {}  # ancilla -> absolute record index of latest measurement
    for r in range(spec.rounds):
        ins += stabilizer_schedule(layout)
        rec = {a: n_meas + i for i, a in enumerate(anc)}
        n_meas += len(anc)
        for a in anc:
            if r == 0:
                if a in checked:
                    ins.append(Instruction("DETECTOR", (n_meas - rec[a],)))
            else:
                ins.append(Instruction("DETECTOR", (n_meas - rec[a], n_meas - last[a])))
        last = rec
        ins.append(Instruction("TICK"))

    if basis == "X":
        ins.append(Instruction("H", data))
    ins.append(Instruction("M", data))
    drec = {q: n_meas + i for i, q in enumerate(data)}
    n_meas += len(data)
    for a in anc:
        if a not in checked:
            continue
        refs = [drec[q] for q in layout.support(a)] + [last[a]]
        ins.append(Instruction("DETECTOR", tuple(n_meas - i for i in refs)))
    obs = tuple(n_meas - drec[q] for q in layout.observable)
    ins.append(Instruction("OBSERVABLE_INCLUDE", obs, 0.0))
    coords = {q: (float(x), float(y)) for q, (x, y) in layout.coords.items()}
    return Circuit(layout.num_qubits, tuple(ins), coords)


def _require(spec: CodeSpec, family: str) -> None:
    if spec.family != family:
        raise SpecError(f"expected a {family} spec, got {spec.family!r}")


def build_rotated_surface(spec: CodeSpec) -> Circuit:
    _require(spec, "rotated")
    return build_memory(spec)


def build_unrotated_surface(spec: CodeSpec) -> Circuit:
    _require(spec, "unrotated")
    return build_memory(spec)


def build_repetition(spec: CodeSpec) -> Circuit:
    _require(spec, "repetition")
    return build_memory(spec)


class Resources(NamedTuple):
    qubits: int
    gates: int


def resource_count(spec: CodeSpec) -> Resources:
    """Qubits and H + two-qubit gate count of the built circuit."""
    c = build_memory(spec)
    gates = c.count("H") + c.count("CX") + c.count("CZ")
    return Resources(c.num_qubits, gates)


def gates_per_round(spec: CodeSpec) -> int:
    block = stabilizer_schedule(build_layout(spec))
    return sum(
        len(i.targets) // (2 if i.opcode in ("CX", "CZ") else 1)
        for i in block
        if i.opcode in ("H", "CX", "CZ")
    )
