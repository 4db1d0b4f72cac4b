from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from qecnoise.codegen import FAMILIES, CodeSpec, build_memory
from qecnoise.core import (
    Circuit,
    CircuitError,
    Instruction,
    ParseError,
    Pauli,
    PauliString,
    compose,
    conjugate_through,
    parse_circuit,
    serialize,
    validate,
)
from qecnoise.noise import NOISE_SOURCES, NoiseSpec, apply_noise

N = 4
strings = st.builds(
    PauliString, st.just(N), st.integers(0, 2**N - 1), st.integers(0, 2**N - 1)
)


def P(text: str) -> PauliString:
    return PauliString.from_text(text)


def test_pauli_bits():
    assert [p.name for p in Pauli] == ["I", "X", "Z", "Y"]
    assert Pauli.Y.x and Pauli.Y.z
    assert Pauli.from_bits(1, 0) is Pauli.X


def test_compose_examples():
    assert compose(P("X"), P("Z")) == P("Y")
    assert compose(P("XZ"), P("XZ")).is_identity()
    assert compose(P("II"), P("YX")) == P("YX")
    with pytest.raises(ValueError):
        compose(P("X"), P("XX"))


@given(strings, strings, strings)
def test_compose_group_laws(a, b, c):
    assert compose(compose(a, b), c) == compose(a, compose(b, c))
    assert compose(a, b) == compose(b, a)
    assert compose(a, a).is_identity()
    assert compose(PauliString.identity(N), a) == a


def test_conjugation_examples():
    assert conjugate_through(Instruction("H", (0,)), P("X")) == P("Z")
    assert conjugate_through(Instruction("CX", (0, 1)), P("XI")) == P("XX")
    assert conjugate_through(Instruction("CZ", (0, 1)), P("XI")) == P("XZ")
    assert conjugate_through(Instruction("CX", (0, 1)), P("IZ")) == P("ZZ")
    with pytest.raises(CircuitError):
        conjugate_through(Instruction("M", (0,)), P("X"))


gates = st.one_of(
    st.builds(lambda q: Instruction("H", (q,)), st.integers(0, N - 1)),
    st.builds(
        lambda op, pr: Instruction(op, pr),
        st.sampled_from(["CX", "CZ"]),
        st.permutations(range(N)).map(lambda t: t[:2]),
    ),
)


@given(gates, strings)
def test_conjugation_is_involution(g, frame):
    assert conjugate_through(g, conjugate_through(g, frame)) == frame


def test_parse_examples():
    c = parse_circuit("H 0\nCX 0 1\nM 1")
    assert len(c) == 3 and c.num_qubits == 2
    assert len(parse_circuit("")) == 0
    with pytest.raises(ParseError) as err:
        parse_circuit("FOO 1")
    assert "line 1" in str(err.value)


def test_parse_annotations_and_comments():
    c = parse_circuit("R 0 1\nM 0 1  # both\nDETECTOR rec[-1] rec[-2]\nOBSERVABLE_INCLUDE(0) rec[-1]\n")
    assert c.num_detectors == 1 and c.num_observables == 1
    assert c.instructions[2].targets == (1, 2)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("source", sorted(NOISE_SOURCES))
def test_round_trip_generated(family, source):
    c = apply_noise(build_memory(CodeSpec(family, 3, 2)), NoiseSpec(source, 0.0123))
    assert validate(c) == []
    assert parse_circuit(serialize(c)) == c
    assert serialize(parse_circuit(serialize(c))) == serialize(c)


def test_validate_reports():
    bad_ref = Circuit(2, (Instruction("M", (0, 1)), Instruction("DETECTOR", (5,))))
    assert len(validate(bad_ref)) == 1
    bad_p = Circuit(1, (Instruction("X_ERROR", (0,), 1.5),))
    assert "outside" in validate(bad_p)[0].message
    odd = Circuit(3, (Instruction("CX", (0, 1, 2)),))
    assert validate(odd)
    assert validate(build_memory(CodeSpec("rotated", 3))) == []


def test_noise_never_changes_annotations():
    clean = build_memory(CodeSpec("rotated", 3))
    noisy = apply_noise(clean, NoiseSpec("circuit_level", 0.01))
    assert noisy.num_detectors == clean.num_detectors
    assert noisy.num_observables == clean.num_observables
    assert noisy.without_noise() == clean
