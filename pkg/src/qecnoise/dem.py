"""Detector error models and their reduction to matching graphs.

Extraction runs once backwards over the circuit, tracking for every qubit which
detectors/observables an X or a Z flip at the current position would toggle.
Each noise channel component then reads its signature off those sensitivity
masks, which is equivalent to propagating the single Pauli forward through the
rest of the circuit.
"""

from __future__ import annotations

import csv
import io
import math
import re
import warnings
from dataclasses import dataclass, field

from .core import Circuit, ensure_valid, measurement_qubits, resolve_annotations
from .codegen import LayoutMap

__all__ = [
    "ErrorMechanism",
    "DetectorErrorModel",
    "MatchingGraph",
    "Edge",
    "BOUNDARY",
    "DemError",
    "extract_dem",
    "merge_probabilities",
    "dem_to_matching_graph",
    "split_xz",
    "parse_dem",
    "decoding_graphs",
    "detectors_of_class",
    "edge_weight",
]

BOUNDARY = -1


class DemError(ValueError):
    pass


def merge_probabilities(ps) -> float:
    """Probability that an odd number of independent events fire."""
    out = 0.0
    for p in sorted(ps):
        out = out * (1.0 - p) + p * (1.0 - out)
    return out


@dataclass(frozen=True)
class ErrorMechanism:
    p: float
    detectors: tuple[int, ...]
    observables: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise DemError(f"mechanism probability {self.p} outside (0, 1)")
        if not self.detectors and not self.observables:
            raise DemError("silent mechanism")
        object.__setattr__(self, "detectors", tuple(sorted(set(self.detectors))))
        object.__setattr__(self, "observables", tuple(sorted(set(self.observables))))

    @property
    def signature(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return self.detectors, self.observables

    @property
    def obs_mask(self) -> int:
        return sum(1 << k for k in self.observables)

    def __str__(self) -> str:
        parts = [f"error({self.p!r})"]
        parts += [f"D{d}" for d in self.detectors]
        parts += [f"L{o}" for o in self.observables]
        return " ".join(parts)


@dataclass(frozen=True)
class DetectorErrorModel:
    num_detectors: int
    num_observables: int
    mechanisms: tuple[ErrorMechanism, ...]
    # measured qubits behind each detector, used to classify it by check type
    detector_qubits: tuple[tuple[int, ...], ...] | None = None
    detector_coords: tuple[tuple[float, ...], ...] | None = None
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self):
        seen = set()
        for m in self.mechanisms:
            if m.signature in seen:
                raise DemError(f"duplicate signature {m.signature}")
            seen.add(m.signature)
            if m.detectors and m.detectors[-1] >= self.num_detectors:
                raise DemError(f"detector D{m.detectors[-1]} out of range")
            if m.observables and m.observables[-1] >= self.num_observables:
                raise DemError(f"observable L{m.observables[-1]} out of range")

    def __len__(self) -> int:
        return len(self.mechanisms)

    def to_text(self) -> str:
        return "".join(f"{m}\n" for m in self.mechanisms)

    @staticmethod
    def from_mechanisms(
        mechs, num_detectors: int, num_observables: int, **kw
    ) -> "DetectorErrorModel":
        """Build a model from possibly repeated signatures, merging them."""
        acc: dict[tuple, list[float]] = {}
        for m in mechs:
            acc.setdefault(m.signature, []).append(m.p)
        out = []
        for (dets, obs), ps in sorted(acc.items()):
            p = merge_probabilities(ps)
            if p > 0.0:
                out.append(ErrorMechanism(min(p, 1.0 - 1e-16), dets, obs))
        return DetectorErrorModel(num_detectors, num_observables, tuple(out), **kw)


_DEM_LINE = re.compile(r"^error\(([^)]*)\)((?:\s+[DL]\d+)*)\s*$")


def parse_dem(text: str, num_detectors: int | None = None, num_observables: int | None = None) -> DetectorErrorModel:
    mechs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _DEM_LINE.match(line)
        if not m:
            raise DemError(f"line {lineno}: cannot parse {raw!r}")
        toks = m.group(2).split()
        dets = [int(t[1:]) for t in toks if t[0] == "D"]
        obs = [int(t[1:]) for t in toks if t[0] == "L"]
        mechs.append(ErrorMechanism(float(m.group(1)), tuple(dets), tuple(obs)))
    nd = num_detectors if num_detectors is not None else 1 + max((d for m in mechs for d in m.detectors), default=-1)
    no = num_observables if num_observables is not None else 1 + max((o for m in mechs for o in m.observables), default=-1)
    return DetectorErrorModel.from_mechanisms(mechs, nd, no)


def _bits(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def _detector_coords(circuit: Circuit, dets: list[list[int]], mq: list[int]) -> tuple:
    # time coordinate: index of the measurement layer holding the detector's latest record
    layer_of = []
    for layer, ins in enumerate(i for i in circuit.instructions if i.opcode in ("M", "MR")):
        layer_of += [layer] * len(ins.targets)
    out = []
    for refs in dets:
        last = max(refs)
        q = mq[last]
        xy = circuit.coords.get(q, (float(q), 0.0))
        out.append((float(xy[0]), float(xy[1]), float(layer_of[last])))
    return tuple(out)


def extract_dem(noisy: Circuit) -> DetectorErrorModel:
    ensure_valid(noisy)
    dets, obs = resolve_annotations(noisy)
    nd = len(dets)
    recmask = [0] * noisy.num_measurements
    for k, refs in enumerate(dets):
        for r in refs:
            recmask[r] ^= 1 << k
    for k, refs in enumerate(obs):
        for r in refs:
            recmask[r] ^= 1 << (nd + k)

    n = noisy.num_qubits
    sx = [0] * n
    sz = [0] * n
    contributions: dict[int, list[float]] = {}

    def add(mask: int, p: float) -> None:
        if mask and p > 0:
            contributions.setdefault(mask, []).append(p)

    m = noisy.num_measurements
    for ins in reversed(noisy.instructions):
        op, t = ins.opcode, ins.targets
        if op in ("M", "MR"):
            m -= len(t)
            for j in range(len(t) - 1, -1, -1):
                q = t[j]
                if op == "M":
                    sx[q] ^= recmask[m + j]
                else:
                    sx[q] = recmask[m + j]
                    sz[q] = 0
        elif op == "R":
            for q in t:
                sx[q] = 0
                sz[q] = 0
        elif op == "H":
            for q in reversed(t):
                sx[q], sz[q] = sz[q], sx[q]
        elif op == "CX":
            for c, tg in reversed(ins.pairs()):
                sx[c] ^= sx[tg]
                sz[tg] ^= sz[c]
        elif op == "CZ":
            for c, tg in reversed(ins.pairs()):
                sx[c] ^= sz[tg]
                sx[tg] ^= sz[c]
        elif op == "X_ERROR":
            for q in t:
                add(sx[q], ins.arg)
        elif op == "Z_ERROR":
            for q in t:
                add(sz[q], ins.arg)
        elif op == "DEPOLARIZE1":
            p = ins.arg / 3
            for q in t:
                add(sx[q], p)
                add(sx[q] ^ sz[q], p)
                add(sz[q], p)
        elif op == "DEPOLARIZE2":
            p = ins.arg / 15
            for a, b in ins.pairs():
                for k in range(1, 16):
                    mask = 0
                    if k & 1:
                        mask ^= sx[a]
                    if k & 2:
                        mask ^= sz[a]
                    if k & 4:
                        mask ^= sx[b]
                    if k & 8:
                        mask ^= sz[b]
                    add(mask, p)

    low = (1 << nd) - 1
    mechs = []
    for mask, ps in contributions.items():
        p = merge_probabilities(ps)
        if p <= 0.0:
            continue
        d = tuple(_bits(mask & low))
        o = tuple(k - nd for k in _bits(mask >> nd << nd))
        mechs.append(ErrorMechanism(min(p, 1.0 - 1e-16), d, o))
    mechs.sort(key=lambda e: e.signature)
    mq = measurement_qubits(noisy)
    return DetectorErrorModel(
        nd,
        len(obs),
        tuple(mechs),
        detector_qubits=tuple(tuple(sorted({mq[r] for r in refs})) for refs in dets),
        detector_coords=_detector_coords(noisy, dets, mq),
    )


def _detector_classes(dem: DetectorErrorModel, layout: LayoutMap) -> list[str]:
    if dem.detector_qubits is None:
        raise DemError("model carries no detector qubits; cannot classify detectors")
    xs, zs = layout.x_ancilla_set, layout.z_ancilla_set
    out = []
    for k, qs in enumerate(dem.detector_qubits):
        kinds = {"X" for q in qs if q in xs} | {"Z" for q in qs if q in zs}
        if len(kinds) != 1:
            raise DemError(f"detector D{k} cannot be classified by check type (qubits {qs})")
        out.append(kinds.pop())
    return out


def split_xz(dem: DetectorErrorModel, layout: LayoutMap) -> tuple[DetectorErrorModel, DetectorErrorModel]:
    """Split into (X-check half, Z-check half).

    Each mechanism contributes its X-check detectors to one half and its Z-check
    detectors to the other. Observables follow the half whose checks detect the
    errors that flip them: Z checks for a Z-basis memory, X checks for X basis.
    """
    cls = _detector_classes(dem, layout)
    obs_half = layout.basis
    halves: dict[str, list[ErrorMechanism]] = {"X": [], "Z": []}
    notes: list[str] = list(dem.diagnostics)
    for m in dem.mechanisms:
        parts = {"X": [d for d in m.detectors if cls[d] == "X"], "Z": [d for d in m.detectors if cls[d] == "Z"]}
        if parts["X"] and parts["Z"] and max(len(parts["X"]), len(parts["Z"])) > 2:
            notes.append(f"mechanism {m} spans both check types with more than two detectors in one")
        for h in ("X", "Z"):
            o = m.observables if h == obs_half else ()
            if parts[h] or o:
                halves[h].append(ErrorMechanism(m.p, tuple(parts[h]), o))
    out = []
    for h in ("X", "Z"):
        no = dem.num_observables
        out.append(
            DetectorErrorModel.from_mechanisms(
                halves[h],
                dem.num_detectors,
                no,
                detector_qubits=dem.detector_qubits,
                detector_coords=dem.detector_coords,
                diagnostics=tuple(notes),
            )
        )
    return out[0], out[1]


def detectors_of_class(dem: DetectorErrorModel, layout: LayoutMap, kind: str) -> tuple[int, ...]:
    return tuple(k for k, c in enumerate(_detector_classes(dem, layout)) if c == kind)


@dataclass(frozen=True)
class Edge:
    u: int
    v: int  # BOUNDARY for boundary edges
    weight: float
    p: float
    obs_mask: int


def edge_weight(p: float) -> float:
    if p >= 0.5:
        if p > 0.5:
            warnings.warn(f"edge probability {p:.3g} > 1/2 clamped to weight 0", RuntimeWarning, stacklevel=3)
        return 0.0
    return math.log((1.0 - p) / p)


@dataclass(frozen=True)
class MatchingGraph:
    """Weighted graph over a subset of detectors plus a single boundary node.

    ``detector_ids`` lists the global detector indices of the graph's nodes;
    ``Edge.u``/``Edge.v`` use the same global indices.
    """

    num_detectors: int
    num_observables: int
    detector_ids: tuple[int, ...]
    edges: tuple[Edge, ...]
    coords: dict[int, tuple[float, ...]] = field(default_factory=dict)
    diagnostics: tuple[str, ...] = ()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["u", "v", "weight", "p", "obs_mask"])
        for e in self.edges:
            w.writerow([e.u, "B" if e.v == BOUNDARY else e.v, repr(e.weight), repr(e.p), e.obs_mask])
        return buf.getvalue()

    def neighbors(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {d: [] for d in self.detector_ids}
        adj[BOUNDARY] = []
        for e in self.edges:
            adj[e.u].append(e.v)
            adj[e.v].append(e.u)
        return adj

    def unreachable(self) -> list[int]:
        """Detectors with no path to the boundary."""
        adj = self.neighbors()
        seen = {BOUNDARY}
        stack = [BOUNDARY]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return [d for d in self.detector_ids if d not in seen]


def _decompose(dets: tuple[int, ...], obs_mask: int, known: dict[tuple[int, int], int]):
    """Partition ``dets`` into known edges whose observable masks XOR to ``obs_mask``."""
    if not dets:
        return [] if obs_mask == 0 else None
    u, rest = dets[0], dets[1:]
    options = [((u, BOUNDARY), rest)]
    options += [((u, v), rest[:i] + rest[i + 1 :]) for i, v in enumerate(rest)]
    for key, remaining in options:
        if key in known:
            sub = _decompose(remaining, obs_mask ^ known[key], known)
            if sub is not None:
                return [key] + sub
    return None


def dem_to_matching_graph(dem: DetectorErrorModel, detectors=None) -> MatchingGraph:
    """Reduce ``dem`` to a matching graph on ``detectors`` (default: all)."""
    if not dem.mechanisms:
        raise DemError("empty detector error model")
    node_ids = tuple(range(dem.num_detectors)) if detectors is None else tuple(sorted(detectors))
    nodes = set(node_ids)
    notes: list[str] = []
    pieces: dict[tuple[int, int], dict[int, list[float]]] = {}
    hyper: list[ErrorMechanism] = []

    def key_of(dets: tuple[int, ...]) -> tuple[int, int]:
        return (dets[0], BOUNDARY) if len(dets) == 1 else (dets[0], dets[1])

    for m in dem.mechanisms:
        if not set(m.detectors) <= nodes:
            raise DemError(f"mechanism {m} touches detectors outside the graph")
        if len(m.detectors) == 0:
            notes.append(f"undetectable mechanism {m} dropped")
        elif len(m.detectors) <= 2:
            pieces.setdefault(key_of(m.detectors), {}).setdefault(m.obs_mask, []).append(m.p)
        else:
            hyper.append(m)

    # observable mask of the dominant graph-like mechanism on each edge
    def dominant(by_mask: dict[int, list[float]]) -> int:
        return max(by_mask, key=lambda k: (merge_probabilities(by_mask[k]), -k))

    known = {k: dominant(v) for k, v in pieces.items()}
    for m in hyper:
        parts = _decompose(m.detectors, m.obs_mask, known)
        if parts is None:
            notes.append(f"mechanism {m} has no decomposition into existing edges; dropped")
            continue
        for key in parts:
            pieces[key].setdefault(known[key], []).append(m.p)

    edges = []
    for (u, v), by_mask in sorted(pieces.items()):
        mask = dominant(by_mask)
        if len(by_mask) > 1:
            notes.append(f"edge ({u}, {v}) carries conflicting observable masks; kept {mask}")
        p = merge_probabilities([p for ps in by_mask.values() for p in ps])
        p = min(p, 1.0 - 1e-16)
        edges.append(Edge(u, v, edge_weight(p), p, mask))
    coords = {}
    if dem.detector_coords is not None:
        coords = {d: dem.detector_coords[d] for d in node_ids}
    graph = MatchingGraph(dem.num_detectors, dem.num_observables, node_ids, tuple(edges), coords)
    lost = graph.unreachable()
    if lost:
        notes.append(f"{len(lost)} detectors cannot reach the boundary (first: D{lost[0]})")
    return MatchingGraph(
        dem.num_detectors, dem.num_observables, node_ids, tuple(edges), coords, tuple(dem.diagnostics) + tuple(notes)
    )


def decoding_graphs(dem: DetectorErrorModel, layout: LayoutMap | None = None) -> list[MatchingGraph]:
    """Graphs a decoder should use: X/Z halves when a layout is given, else one graph."""
    if layout is None or layout.family == "repetition":
        return [dem_to_matching_graph(dem)]
    xdem, zdem = split_xz(dem, layout)
    out = []
    for kind, half in (("X", xdem), ("Z", zdem)):
        dets = detectors_of_class(dem, layout, kind)
        if dets and half.mechanisms:
            out.append(dem_to_matching_graph(half, dets))
    return out

