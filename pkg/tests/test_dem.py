from __future__ import annotations

import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qecnoise.codegen import FAMILIES, CodeSpec, build_layout, build_memory
from qecnoise.core import Circuit, Instruction
from qecnoise.dem import (
    BOUNDARY,
    DemError,
    DetectorErrorModel,
    ErrorMechanism,
    dem_to_matching_graph,
    decoding_graphs,
    edge_weight,
    extract_dem,
    merge_probabilities,
    parse_dem,
    split_xz,
)
from qecnoise.noise import NoiseSpec, apply_noise
from qecnoise.sim import sample_batch


def test_merge_two_equal():
    assert merge_probabilities([0.1, 0.1]) == pytest.approx(0.18, abs=1e-15)
    assert merge_probabilities([]) == 0.0


@given(st.lists(st.floats(0.0, 0.5), max_size=8), st.randoms())
def test_merge_order_independent(ps, rnd):
    shuffled = list(ps)
    rnd.shuffle(shuffled)
    assert merge_probabilities(ps) == merge_probabilities(shuffled)
    # closed form: (1 - prod(1 - 2p)) / 2
    assert merge_probabilities(ps) == pytest.approx((1 - np.prod([1 - 2 * p for p in ps])) / 2, abs=1e-12)


def _after_first_round(spec: CodeSpec, q: int, p: float = 0.01) -> Circuit:
    c = build_memory(spec)
    k = next(i for i, x in enumerate(c.instructions) if x.opcode == "M")
    ins = list(c.instructions)
    ins.insert(k + 1, Instruction("X_ERROR", (q,), p))
    return Circuit(c.num_qubits, tuple(ins), c.coords)


def test_bulk_x_error_two_detectors():
    spec = CodeSpec("rotated", 3)
    q = build_layout(spec).data_qubits[(3, 3)]
    dem = extract_dem(_after_first_round(spec, q))
    (m,) = dem.mechanisms
    assert len(m.detectors) == 2 and m.observables == ()


def test_boundary_error_before_readout():
    spec = CodeSpec("rotated", 3)
    lay = build_layout(spec)
    q = next(q for q in lay.observable if sum(q in lay.support(a) for a in lay.z_ancilla_set) == 1)
    c = build_memory(spec)
    ins = list(c.instructions)
    last_m = max(i for i, x in enumerate(ins) if x.opcode == "M")
    ins.insert(last_m, Instruction("X_ERROR", (q,), 0.01))
    (m,) = extract_dem(Circuit(c.num_qubits, tuple(ins))).mechanisms
    assert len(m.detectors) == 1 and m.observables == (0,)


def test_mechanism_validation_and_text():
    with pytest.raises(DemError):
        ErrorMechanism(0.0, (1,))
    with pytest.raises(DemError):
        ErrorMechanism(0.1, ())
    m = ErrorMechanism(0.25, (3, 1, 3), (0,))
    assert m.detectors == (1, 3) and str(m) == "error(0.25) D1 D3 L0"
    with pytest.raises(DemError):
        DetectorErrorModel(4, 1, (m, ErrorMechanism(0.1, (1, 3), (0,))))
    dem = parse_dem("error(0.1) D0 D1\nerror(0.1) D1 D0\n# comment\nerror(0.2) D2 L0\n")
    assert len(dem) == 2 and dem.num_detectors == 3
    assert dem.mechanisms[0].p == pytest.approx(0.18)
    assert parse_dem(dem.to_text()) == dem
    with pytest.raises(DemError):
        parse_dem("oops D0")


def test_graph_examples():
    g = dem_to_matching_graph(parse_dem("error(0.5) D0 D1"))
    (e,) = g.edges
    assert (e.u, e.v, e.weight) == (0, 1, 0.0)
    g = dem_to_matching_graph(parse_dem("error(0.01) D0"))
    (e,) = g.edges
    assert e.v == BOUNDARY and e.weight == pytest.approx(math.log(99))
    with pytest.raises(DemError):
        dem_to_matching_graph(parse_dem(""))


def test_weight_clamp_warns():
    with pytest.warns(RuntimeWarning):
        assert edge_weight(0.7) == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert edge_weight(0.5) == 0.0


@given(st.floats(1e-12, 0.5, exclude_max=True))
def test_weights_finite_nonnegative(p):
    w = edge_weight(p)
    assert math.isfinite(w) and w >= 0


def test_phenomenological_has_time_edges():
    spec = CodeSpec("rotated", 3)
    dem = extract_dem(apply_noise(build_memory(spec), NoiseSpec("phenomenological", 0.01)))
    coords = dem.detector_coords
    for g in decoding_graphs(dem, build_layout(spec)):
        pos = {coords[d]: d for d in g.detector_ids}
        adj = g.neighbors()
        for d in g.detector_ids:
            x, y, t = coords[d]
            nxt = pos.get((x, y, t + 1))
            if nxt is not None:
                assert nxt in adj[d]


def _dem_of(ins, n):
    return extract_dem(Circuit(n, tuple(ins)))


def test_split_xz_by_pauli():
    spec = CodeSpec("rotated", 3, 2)
    lay = build_layout(spec)
    clean = build_memory(spec)
    q = lay.data_qubits[(3, 3)]
    first_m = next(i for i, x in enumerate(clean.instructions) if x.opcode == "M")

    def halves(op):
        ins = list(clean.instructions)
        ins.insert(first_m + 1, Instruction(op, (q,), 0.03))
        return split_xz(_dem_of(ins, clean.num_qubits), lay)

    xh, zh = halves("X_ERROR")
    assert (len(xh.mechanisms), len(zh.mechanisms)) == (0, 1)
    xh, zh = halves("Z_ERROR")
    assert (len(xh.mechanisms), len(zh.mechanisms)) == (1, 0)
    # Y shares its X part with the X term and its Z part with the Z term
    xh, zh = halves("DEPOLARIZE1")
    for half in (xh, zh):
        (m,) = half.mechanisms
        assert m.p == pytest.approx(merge_probabilities([0.01, 0.01]))


_COMPONENTS1 = {"X": ("X_ERROR",), "Z": ("Z_ERROR",), "Y": ("X_ERROR", "Z_ERROR")}


def _components(ins: Instruction):
    """(probability share, [(qubit, ops), ...]) for every Pauli term of one channel target."""
    if ins.opcode in ("X_ERROR", "Z_ERROR"):
        for q in ins.targets:
            yield ins.arg, [(q, (ins.opcode,))]
    elif ins.opcode == "DEPOLARIZE1":
        for q in ins.targets:
            for ops in _COMPONENTS1.values():
                yield ins.arg / 3, [(q, ops)]
    else:
        for a, b in ins.pairs():
            for pa, pb in itertools.product(["I", "X", "Z", "Y"], repeat=2):
                if pa == pb == "I":
                    continue
                term = [(q, _COMPONENTS1[s]) for q, s in ((a, pa), (b, pb)) if s != "I"]
                yield ins.arg / 15, term


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("source", ["circuit_level", "depolarizing"])
def test_dem_matches_forced_single_errors(family, source):
    """Every Pauli term, forced to happen, fires exactly its mechanism; probabilities merge as stated."""
    spec = CodeSpec(family, 3, 2)
    noisy = apply_noise(build_memory(spec), NoiseSpec(source, 0.01))
    clean_ins = [x for x in noisy.instructions if not x.is_noise]
    expected: dict[tuple, list[float]] = {}
    kept = 0
    for idx, ins in enumerate(noisy.instructions):
        if not ins.is_noise:
            continue
        pos = sum(1 for x in noisy.instructions[:idx] if not x.is_noise)
        for share, term in _components(ins):
            forced = [Instruction(op, (q,), 1.0) for q, ops in term for op in ops]
            circ = Circuit(noisy.num_qubits, tuple(clean_ins[:pos] + forced + clean_ins[pos:]))
            b = sample_batch(circ, 1, 0)
            dets = tuple(np.flatnonzero(b.detectors[0]).tolist())
            obs = tuple(np.flatnonzero(b.observables[0]).tolist())
            if dets or obs:
                expected.setdefault((dets, obs), []).append(share)
                kept += 1
    dem = extract_dem(noisy)
    got = {m.signature: m.p for m in dem.mechanisms}
    assert kept > 0
    assert set(got) == set(expected)
    for sig, ps in expected.items():
        assert got[sig] == pytest.approx(merge_probabilities(ps), rel=1e-12)


def test_dem_independent_of_noise_order():
    noisy = apply_noise(build_memory(CodeSpec("rotated", 3, 2)), NoiseSpec("circuit_level", 0.02))
    ins = list(noisy.instructions)
    # reverse every maximal run of consecutive noise instructions; they commute
    out, run = [], []
    for x in ins + [None]:
        if x is not None and x.is_noise:
            run.append(x)
            continue
        out += run[::-1]
        run = []
        if x is not None:
            out.append(x)
    shuffled = Circuit(noisy.num_qubits, tuple(out))
    assert shuffled != noisy
    a, b = extract_dem(noisy), extract_dem(shuffled)
    assert [m.signature for m in a.mechanisms] == [m.signature for m in b.mechanisms]
    assert [m.p for m in a.mechanisms] == pytest.approx([m.p for m in b.mechanisms], rel=1e-14)


@pytest.mark.parametrize("family", FAMILIES)
def test_graph_edges_cover_all_detectors(family):
    spec = CodeSpec(family, 5)
    dem = extract_dem(apply_noise(build_memory(spec), NoiseSpec("circuit_level", 1e-3)))
    graphs = decoding_graphs(dem, build_layout(spec))
    covered = set()
    for g in graphs:
        assert g.unreachable() == []
        for e in g.edges:
            assert e.weight >= 0 and math.isfinite(e.weight)
        covered |= set(g.detector_ids)
        assert g.to_csv().startswith("u,v,weight,p,obs_mask\n")
    assert covered == set(range(dem.num_detectors))


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("source", ["circuit_level", "depolarizing", "gate", "readout", "reset",
                                    "code_capacity", "phenomenological"])
def test_memory_graphs_drop_nothing(family, source):
    spec = CodeSpec(family, 5)
    dem = extract_dem(apply_noise(build_memory(spec), NoiseSpec(source, 1e-3)))
    for g in decoding_graphs(dem, build_layout(spec)):
        assert not [n for n in g.diagnostics if "dropped" in n and "undetectable" not in n]
        assert not [n for n in g.diagnostics if "conflicting" in n]
