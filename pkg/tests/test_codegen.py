from __future__ import annotations

from collections import deque

import numpy as np
import pytest

from chp import run_noiseless
from qecnoise.codegen import (
    FAMILIES,
    CodeSpec,
    SpecError,
    build_layout,
    build_memory,
    build_repetition,
    build_rotated_surface,
    build_unrotated_surface,
    default_rounds,
    gates_per_round,
    qubit_count,
    resource_count,
    stabilizer_schedule,
)
from qecnoise.core import Circuit, Instruction, validate
from qecnoise.dem import BOUNDARY, decoding_graphs, extract_dem
from qecnoise.noise import NoiseSpec, apply_noise
from qecnoise.sim import sample_batch


def test_spec_validation():
    assert CodeSpec("rotated", 5).rounds == 15
    for bad in [("hexagonal", 3), ("rotated", 4), ("rotated", 1)]:
        with pytest.raises(SpecError):
            CodeSpec(*bad)
    with pytest.raises(SpecError):
        CodeSpec("rotated", 3, rounds=0)
    with pytest.raises(SpecError):
        CodeSpec("repetition", 3, basis="X")


@pytest.mark.parametrize("d,r", [(3, 9), (5, 15), (25, 75)])
def test_default_rounds(d, r):
    assert default_rounds(d) == r


@pytest.mark.parametrize("d", [3, 5, 7, 9])
def test_qubit_formulas(d):
    rot = build_layout(CodeSpec("rotated", d))
    assert rot.num_qubits == 2 * d * d - 1 == qubit_count("rotated", d)
    assert len(rot.data) == d * d
    assert len(rot.x_ancillas) == len(rot.z_ancillas) == (d * d - 1) // 2
    unr = build_layout(CodeSpec("unrotated", d))
    assert unr.num_qubits == (2 * d - 1) ** 2 == qubit_count("unrotated", d)
    assert len(unr.data) == d * d + (d - 1) ** 2
    assert len(unr.ancillas) == 2 * d * (d - 1)
    assert build_layout(CodeSpec("repetition", d)).num_qubits == 2 * d - 1


def test_small_patch_counts():
    assert build_rotated_surface(CodeSpec("rotated", 3)).num_qubits == 17
    unr = build_layout(CodeSpec("unrotated", 3))
    assert (len(unr.x_ancillas), len(unr.z_ancillas)) == (6, 6)
    assert build_unrotated_surface(CodeSpec("unrotated", 5)).num_qubits == 81
    assert resource_count(CodeSpec("unrotated", 7)).qubits == 169
    assert build_repetition(CodeSpec("repetition", 3)).num_qubits == 5
    with pytest.raises(SpecError):
        build_repetition(CodeSpec("rotated", 3))


def test_gate_count_is_direct_count():
    spec = CodeSpec("rotated", 3)
    # 24 CX (4 per bulk check, 2 per boundary check) plus 2 H layers over 4 X checks
    assert gates_per_round(spec) == 24 + 8
    assert resource_count(spec).gates == spec.rounds * gates_per_round(spec)


@pytest.mark.parametrize("family", ["rotated", "unrotated"])
@pytest.mark.parametrize("d", [3, 5])
def test_every_data_qubit_has_both_checks(family, d):
    lay = build_layout(CodeSpec(family, d))
    for q in lay.data:
        kinds = {lay.check_type(a) for a in lay.ancillas if q in lay.support(a)}
        assert kinds == {"X", "Z"}


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("d", [3, 5, 7])
def test_schedule_layers_disjoint(family, d):
    block = stabilizer_schedule(build_layout(CodeSpec(family, d)))
    assert sum(i.opcode == "M" for i in block) == 1
    for ins in block:
        if ins.opcode == "CX":
            assert len(set(ins.targets)) == len(ins.targets)


def test_schedule_round_shape():
    lay = build_layout(CodeSpec("rotated", 3))
    block = stabilizer_schedule(lay)
    assert len(next(i for i in block if i.opcode == "M").targets) == 8
    # a bulk Z plaquette: four CX with the ancilla as target
    a = next(a for a in lay.z_ancilla_set if len(lay.support(a)) == 4)
    cx = [p for i in block if i.opcode == "CX" for p in i.pairs() if a in p]
    assert len(cx) == 4 and all(t == a for _, t in cx)


MEMORIES = [(f, b) for f in FAMILIES for b in ("Z", "X") if (f, b) != ("repetition", "X")]


@pytest.mark.parametrize("family, basis", MEMORIES)
def test_noiseless_detectors_deterministic_under_tableau(family, basis):
    c = build_memory(CodeSpec(family, 3, 3, basis))
    assert validate(c) == []
    for seed in range(3):
        _, dets, obs = run_noiseless(c, seed)
        assert not any(dets) and not any(obs)


def test_repetition_blind_to_z():
    c = build_memory(CodeSpec("repetition", 3))
    ins = list(c.instructions)
    ins.insert(1, Instruction("Z_ERROR", (0,), 1.0))
    noisy = Circuit(c.num_qubits, tuple(ins), c.coords)
    b = sample_batch(noisy, 100, 1)
    assert not b.detectors.any() and not b.observables.any()


def _with_error(c: Circuit, pos: int, q: int) -> Circuit:
    ins = list(c.instructions)
    ins.insert(pos, Instruction("X_ERROR", (q,), 1.0))
    return Circuit(c.num_qubits, tuple(ins), c.coords)


@pytest.mark.parametrize("family", FAMILIES)
def test_single_data_error_never_silently_flips_logical(family):
    spec = CodeSpec(family, 3, 2)
    c = build_memory(spec)
    data = build_layout(spec).data
    for pos in range(1, len(c.instructions)):
        for q in data:
            b = sample_batch(_with_error(c, pos, q), 1, 0)
            assert b.detectors.any() or not b.observables.any()


def _graph_distance(g) -> int | None:
    adj: dict[int, list[tuple[int, int]]] = {}
    for e in g.edges:
        adj.setdefault(e.u, []).append((e.v, e.obs_mask & 1))
        adj.setdefault(e.v, []).append((e.u, e.obs_mask & 1))
    start = (BOUNDARY, 0)
    dist = {start: 0}
    todo = deque([start])
    while todo:
        u, par = todo.popleft()
        for v, o in adj.get(u, []):
            s = (v, par ^ o)
            if s not in dist:
                dist[s] = dist[(u, par)] + 1
                todo.append(s)
    return dist.get((BOUNDARY, 1))


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("d", [3, 5])
def test_circuit_distance_not_reduced_by_hooks(family, d):
    spec = CodeSpec(family, d)
    dem = extract_dem(apply_noise(build_memory(spec), NoiseSpec("circuit_level", 1e-3)))
    found = [_graph_distance(g) for g in decoding_graphs(dem, build_layout(spec))]
    assert min(x for x in found if x is not None) == d
