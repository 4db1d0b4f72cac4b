"""Surface and repetition code memory experiments under configurable Pauli noise."""

from __future__ import annotations

from .codegen import CodeSpec, LayoutMap, SpecError, build_layout, build_memory, qubit_count
from .core import Circuit, CircuitError, Instruction, ParseError, parse_circuit, serialize
from .noise import ErrorType, NoiseModel, NoiseSpec, apply_noise
from .sim import ShotBatch, sample_batch
from .dem import DetectorErrorModel, MatchingGraph, decoding_graphs, extract_dem
from .decode import MatchingDecoder, Syndrome, decode_batch, mwpm_decode
from .bench import (
    ExperimentSpec,
    ResultRow,
    ShotPolicy,
    estimate_threshold,
    fit_distance_scaling,
    fit_rounds_curve,
    per_round_rate,
    project_qubits,
    run_sweep,
)

__version__ = "0.1.0"
