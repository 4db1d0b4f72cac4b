"""Bit-packed Pauli-frame Monte Carlo sampling and a dense state-vector oracle.

Shots are packed 64 per ``uint64`` word along the last axis, so every gate is a
handful of word-level XORs over all shots of a block. Randomness is drawn from a
Philox stream keyed by (seed, block index) with a fixed block size, which makes
any shot range reproducible regardless of how shots are split across workers.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator

import numpy as np

from .core import Circuit, CircuitError, ensure_valid, resolve_annotations

__all__ = [
    "BLOCK_SHOTS",
    "ShotBatch",
    "FrameProgram",
    "sample_batch",
    "iter_blocks",
    "dense_oracle_sample",
    "logical_error_count",
    "block_rng",
]

BLOCK_SHOTS = 4096
_WORDS = BLOCK_SHOTS // 64
# above this probability, noise masks are drawn densely instead of by geometric skips
_DENSE_P = 0.02
DENSE_MAX_QUBITS = 12


def block_rng(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one block of shots."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(block), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def _pack(bits: np.ndarray) -> np.ndarray:
    """Pack a (rows, shots) bool array into (rows, ceil(shots/64)) uint64."""
    rows, shots = bits.shape
    pad = (-shots) % 64
    if pad:
        bits = np.concatenate([bits, np.zeros((rows, pad), dtype=bool)], axis=1)
    return np.ascontiguousarray(np.packbits(bits, axis=1, bitorder="little")).view("<u8").astype(np.uint64, copy=False)


def _unpack(words: np.ndarray, shots: int) -> np.ndarray:
    """Inverse of ``_pack``: (rows, words) uint64 to (rows, shots) bool."""
    if words.shape[1] == 0:
        return np.zeros((words.shape[0], shots), dtype=bool)
    u8 = np.ascontiguousarray(words).astype("<u8", copy=False).view(np.uint8)
    return np.unpackbits(u8, axis=1, bitorder="little", count=shots).astype(bool)


@dataclass
class ShotBatch:
    """Detector and observable bits for a batch of shots, stored detector-major."""

    shots: int
    det_bits: np.ndarray  # (num_detectors, words) uint64
    obs_bits: np.ndarray  # (num_observables, words) uint64

    @property
    def num_detectors(self) -> int:
        return self.det_bits.shape[0]

    @property
    def num_observables(self) -> int:
        return self.obs_bits.shape[0]

    @property
    def detectors(self) -> np.ndarray:
        """(shots, num_detectors) bool matrix."""
        return _unpack(self.det_bits, self.shots).T

    @property
    def observables(self) -> np.ndarray:
        """(shots, num_observables) bool matrix."""
        return _unpack(self.obs_bits, self.shots).T

    @classmethod
    def from_bool(cls, detectors: np.ndarray, observables: np.ndarray) -> "ShotBatch":
        detectors = np.asarray(detectors, dtype=bool)
        observables = np.asarray(observables, dtype=bool)
        if detectors.shape[0] != observables.shape[0]:
            raise ValueError("detector and observable row counts differ")
        return cls(detectors.shape[0], _pack(detectors.T), _pack(observables.T))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ShotBatch):
            return NotImplemented
        return (
            self.shots == other.shots
            and np.array_equal(self.detectors, other.detectors)
            and np.array_equal(self.observables, other.observables)
        )

    @staticmethod
    def concatenate(batches: list["ShotBatch"]) -> "ShotBatch":
        dets = np.concatenate([b.detectors for b in batches], axis=0)
        obs = np.concatenate([b.observables for b in batches], axis=0)
        return ShotBatch.from_bool(dets, obs)

    def detector_fire_counts(self) -> np.ndarray:
        return _popcount_rows(self.det_bits)

    # raw dump: three little-endian u64 header fields, then one row per shot holding
    # the detector bits followed by the observable bits, little-endian bit order,
    # each row padded to a whole byte
    def dump(self, fh: BinaryIO) -> None:
        fh.write(struct.pack("<QQQ", self.shots, self.num_detectors, self.num_observables))
        rows = np.concatenate([self.detectors, self.observables], axis=1)
        fh.write(np.packbits(rows, axis=1, bitorder="little").tobytes())

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.dump(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, fh: BinaryIO) -> "ShotBatch":
        shots, nd, no = struct.unpack("<QQQ", fh.read(24))
        width = (nd + no + 7) // 8
        raw = np.frombuffer(fh.read(shots * width), dtype=np.uint8).reshape(shots, width)
        rows = np.unpackbits(raw, axis=1, bitorder="little", count=nd + no).astype(bool)
        return cls.from_bool(rows[:, :nd], rows[:, nd:])

    @classmethod
    def from_bytes(cls, data: bytes) -> "ShotBatch":
        return cls.load(io.BytesIO(data))


_POP8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def _popcount_rows(words: np.ndarray) -> np.ndarray:
    if words.size == 0:
        return np.zeros(words.shape[0], dtype=np.int64)
    return _POP8[np.ascontiguousarray(words).view(np.uint8)].reshape(words.shape[0], -1).sum(axis=1)


# ---------------------------------------------------------------------------
# Compiled frame program


def _split_disjoint(pairs: list[tuple[int, int]]) -> list[list[tuple[int, int]]]:
    """Split a pair list into consecutive runs whose qubits do not repeat."""
    runs: list[list[tuple[int, int]]] = []
    used: set[int] = set()
    for a, b in pairs:
        if not runs or a in used or b in used:
            runs.append([])
            used = set()
        runs[-1].append((a, b))
        used.update((a, b))
    return runs


def _split_unique(targets: tuple[int, ...]) -> list[list[int]]:
    runs: list[list[int]] = []
    used: set[int] = set()
    for q in targets:
        if not runs or q in used:
            runs.append([])
            used = set()
        runs[-1].append(q)
        used.add(q)
    return runs


class FrameProgram:
    """A circuit lowered to array operations on packed Pauli frames."""

    def __init__(self, circuit: Circuit):
        ensure_valid(circuit)
        self.circuit = circuit
        self.num_qubits = circuit.num_qubits
        self.num_measurements = circuit.num_measurements
        ops: list[tuple] = []
        m = 0
        for ins in circuit.instructions:
            op = ins.opcode
            if op in ("TICK", "DETECTOR", "OBSERVABLE_INCLUDE"):
                continue
            if op in ("CX", "CZ"):
                for run in _split_disjoint(ins.pairs()):
                    arr = np.array(run, dtype=np.intp)
                    ops.append((op, arr[:, 0].copy(), arr[:, 1].copy()))
            elif op == "DEPOLARIZE2":
                if ins.arg > 0:
                    arr = np.array(ins.pairs(), dtype=np.intp).reshape(-1, 2)
                    ops.append((op, arr[:, 0].copy(), arr[:, 1].copy(), float(ins.arg)))
            elif op in ("X_ERROR", "Z_ERROR", "DEPOLARIZE1"):
                if ins.arg > 0:
                    ops.append((op, np.array(ins.targets, dtype=np.intp), float(ins.arg)))
            elif op in ("M", "MR"):
                t = np.array(ins.targets, dtype=np.intp)
                ops.append((op, t, m))
                m += len(t)
            else:  # H, R
                for run in _split_unique(ins.targets):
                    ops.append((op, np.array(run, dtype=np.intp)))
        self.ops = ops
        dets, obs = resolve_annotations(circuit)
        self.num_detectors = len(dets)
        self.num_observables = len(obs)
        self._det_groups = _group_by_len(dets)
        self._obs_refs = [np.array(o, dtype=np.intp) for o in obs]

    def run_block(self, rng: np.random.Generator, words: int = _WORDS) -> tuple[np.ndarray, np.ndarray]:
        """Simulate ``64 * words`` shots; returns packed (detectors, observables)."""
        nq = self.num_qubits
        x = np.zeros((nq, words), dtype=np.uint64)
        z = np.zeros((nq, words), dtype=np.uint64)
        rec = np.zeros((self.num_measurements, words), dtype=np.uint64)
        shots = 64 * words
        for op in self.ops:
            kind = op[0]
            if kind == "CX":
                c, t = op[1], op[2]
                x[t] ^= x[c]
                z[c] ^= z[t]
            elif kind == "H":
                t = op[1]
                tmp = x[t]
                x[t] = z[t]
                z[t] = tmp
            elif kind == "M":
                t, m0 = op[1], op[2]
                rec[m0 : m0 + len(t)] = x[t]
            elif kind == "R":
                x[op[1]] = 0
                z[op[1]] = 0
            elif kind == "CZ":
                c, t = op[1], op[2]
                z[t] ^= x[c]
                z[c] ^= x[t]
            elif kind == "MR":
                t, m0 = op[1], op[2]
                rec[m0 : m0 + len(t)] = x[t]
                x[t] = 0
                z[t] = 0
            elif kind == "DEPOLARIZE2":
                _depolarize2(rng, x, z, op[1], op[2], op[3], shots)
            else:
                _single_noise(rng, kind, x, z, op[1], op[2], shots)
        det = np.zeros((self.num_detectors, words), dtype=np.uint64)
        for ids, refs in self._det_groups:
            acc = rec[refs[:, 0]].copy()
            for j in range(1, refs.shape[1]):
                acc ^= rec[refs[:, j]]
            det[ids] = acc
        obs = np.zeros((self.num_observables, words), dtype=np.uint64)
        for k, refs in enumerate(self._obs_refs):
            if len(refs):
                obs[k] = np.bitwise_xor.reduce(rec[refs], axis=0)
        return det, obs


def _group_by_len(dets: list[list[int]]) -> list[tuple[np.ndarray, np.ndarray]]:
    groups: dict[int, list[int]] = {}
    for i, d in enumerate(dets):
        groups.setdefault(len(d), []).append(i)
    out = []
    for n, ids in sorted(groups.items()):
        if n == 0:
            continue
        refs = np.array([dets[i] for i in ids], dtype=np.intp).reshape(len(ids), n)
        out.append((np.array(ids, dtype=np.intp), refs))
    return out


def _bernoulli_hits(rng: np.random.Generator, p: float, n: int) -> np.ndarray:
    """Sorted indices in [0, n) of independent Bernoulli(p) successes."""
    if p >= 1.0:
        return np.arange(n, dtype=np.int64)
    if p >= _DENSE_P:
        return np.flatnonzero(rng.random(n) < p)
    mean = n * p
    out = []
    pos = -1
    while True:
        k = int(mean + 6.0 * np.sqrt(mean) + 16)
        gaps = rng.geometric(p, size=k)
        hits = pos + np.cumsum(gaps)
        if hits[-1] >= n:
            out.append(hits[hits < n])
            break
        out.append(hits)
        pos = int(hits[-1])
    return np.concatenate(out) if len(out) > 1 else out[0]


def _flip(words: np.ndarray, rows: np.ndarray, shots: np.ndarray) -> None:
    if len(rows):
        bits = np.left_shift(np.uint64(1), (shots & 63).astype(np.uint64))
        np.bitwise_xor.at(words, (rows, shots >> 6), bits)


def _single_noise(rng, kind, x, z, targets, p, shots) -> None:
    hits = _bernoulli_hits(rng, p, len(targets) * shots)
    rows = targets[hits // shots]
    sh = hits % shots
    if kind == "X_ERROR":
        _flip(x, rows, sh)
    elif kind == "Z_ERROR":
        _flip(z, rows, sh)
    else:  # DEPOLARIZE1: 1 -> X, 2 -> Z, 3 -> Y
        k = rng.integers(1, 4, size=len(hits))
        xs = (k & 1).astype(bool)
        zs = (k & 2).astype(bool)
        _flip(x, rows[xs], sh[xs])
        _flip(z, rows[zs], sh[zs])


def _depolarize2(rng, x, z, a, b, p, shots) -> None:
    hits = _bernoulli_hits(rng, p, len(a) * shots)
    pair = hits // shots
    sh = hits % shots
    k = rng.integers(1, 16, size=len(hits))
    for bit, words, qs in ((1, x, a), (2, z, a), (4, x, b), (8, z, b)):
        sel = (k & bit).astype(bool)
        _flip(words, qs[pair[sel]], sh[sel])


def iter_blocks(
    program: FrameProgram, seed: int, first_block: int, num_blocks: int
) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(block index, det words, obs words)`` for consecutive blocks."""
    for b in range(first_block, first_block + num_blocks):
        det, obs = program.run_block(block_rng(seed, b))
        yield b, det, obs


def sample_batch(
    circuit: Circuit | FrameProgram, shots: int, seed: int, start: int = 0
) -> ShotBatch:
    """Sample shots ``start .. start+shots-1`` of the stream defined by ``seed``."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    program = circuit if isinstance(circuit, FrameProgram) else FrameProgram(circuit)
    stop = start + shots
    b0, b1 = start // BLOCK_SHOTS, (stop - 1) // BLOCK_SHOTS
    dets, obss = [], []
    for b, det, obs in iter_blocks(program, seed, b0, b1 - b0 + 1):
        lo = max(start - b * BLOCK_SHOTS, 0)
        hi = min(stop - b * BLOCK_SHOTS, BLOCK_SHOTS)
        dets.append(_unpack(det, BLOCK_SHOTS)[:, lo:hi])
        obss.append(_unpack(obs, BLOCK_SHOTS)[:, lo:hi])
    d = np.concatenate(dets, axis=1)
    o = np.concatenate(obss, axis=1)
    return ShotBatch(shots, _pack(d), _pack(o))


def logical_error_count(batch: ShotBatch, predictions: np.ndarray) -> int:
    """Shots where any predicted observable bit differs from the sampled one."""
    predictions = np.asarray(predictions, dtype=bool)
    actual = batch.observables
    if predictions.shape != actual.shape:
        raise ValueError(f"prediction shape {predictions.shape} != observable shape {actual.shape}")
    return int(np.any(predictions != actual, axis=1).sum())


# ---------------------------------------------------------------------------
# Dense oracle


def dense_oracle_sample(
    circuit: Circuit, shots: int, seed: int, max_qubits: int = DENSE_MAX_QUBITS, chunk: int = 8192
) -> ShotBatch:
    """Brute-force state-vector sampling with explicit Pauli channel draws.

    Independent of the frame sampler: every shot carries its own amplitudes and
    measurement outcomes are drawn from the Born rule.
    """
    ensure_valid(circuit)
    n = circuit.num_qubits
    if n > max_qubits:
        raise CircuitError(f"dense oracle limited to {max_qubits} qubits, circuit has {n}")
    rng = np.random.default_rng(seed)
    dets, obs = resolve_annotations(circuit)
    det_rows, obs_rows = [], []
    done = 0
    while done < shots:
        s = min(chunk, shots - done)
        records = _dense_run(circuit, n, s, rng)
        det_rows.append(
            np.stack([np.bitwise_xor.reduce(records[:, d], axis=1) if d else np.zeros(s, bool) for d in dets], axis=1)
            if dets
            else np.zeros((s, 0), bool)
        )
        obs_rows.append(
            np.stack([np.bitwise_xor.reduce(records[:, o], axis=1) if o else np.zeros(s, bool) for o in obs], axis=1)
            if obs
            else np.zeros((s, 0), bool)
        )
        done += s
    return ShotBatch.from_bool(np.concatenate(det_rows), np.concatenate(obs_rows))


def _dense_run(circuit: Circuit, n: int, shots: int, rng: np.random.Generator) -> np.ndarray:
    dim = 1 << n
    idx = np.arange(dim)
    psi = np.zeros((shots, dim), dtype=np.complex128)
    psi[:, 0] = 1.0
    records: list[np.ndarray] = []
    sqrt_half = np.sqrt(0.5)

    def bit(q):
        return (idx >> q) & 1

    def apply_x(q, mask=None):
        perm = idx ^ (1 << q)
        if mask is None:
            psi[:] = psi[:, perm]
        elif mask.any():
            psi[mask] = psi[mask][:, perm]

    def apply_z(q, mask=None):
        sign = 1 - 2 * bit(q)
        if mask is None:
            psi[:] = psi * sign
        elif mask.any():
            psi[mask] = psi[mask] * sign

    def measure(q):
        one = bit(q).astype(bool)
        p1 = np.sum(np.abs(psi[:, one]) ** 2, axis=1)
        out = rng.random(shots) < p1
        keep = np.where(out[:, None], one[None, :], ~one[None, :])
        psi[:] = np.where(keep, psi, 0)
        norm = np.sqrt(np.where(out, p1, 1 - p1))
        psi[:] = psi / np.where(norm > 0, norm, 1.0)[:, None]
        return out

    for ins in circuit.instructions:
        op = ins.opcode
        if op == "H":
            for q in ins.targets:
                perm = idx ^ (1 << q)
                sign = 1 - 2 * bit(q)
                psi[:] = sqrt_half * (psi[:, perm] + sign * psi)
        elif op == "CX":
            for c, t in ins.pairs():
                perm = np.where(bit(c) == 1, idx ^ (1 << t), idx)
                psi[:] = psi[:, perm]
        elif op == "CZ":
            for a, b in ins.pairs():
                psi[:] = psi * (1 - 2 * (bit(a) & bit(b)))
        elif op in ("R", "M", "MR"):
            for q in ins.targets:
                out = measure(q)
                if op != "R":
                    records.append(out)
                if op != "M":
                    apply_x(q, out)
        elif op in ("X_ERROR", "Z_ERROR"):
            for q in ins.targets:
                hit = rng.random(shots) < ins.arg
                (apply_x if op == "X_ERROR" else apply_z)(q, hit)
        elif op == "DEPOLARIZE1":
            for q in ins.targets:
                hit = rng.random(shots) < ins.arg
                k = rng.integers(1, 4, size=shots)
                apply_x(q, hit & ((k & 1) == 1))
                apply_z(q, hit & ((k & 2) == 2))
        elif op == "DEPOLARIZE2":
            for a, b in ins.pairs():
                hit = rng.random(shots) < ins.arg
                k = rng.integers(1, 16, size=shots)
                apply_x(a, hit & ((k & 1) > 0))
                apply_z(a, hit & ((k & 2) > 0))
                apply_x(b, hit & ((k & 4) > 0))
                apply_z(b, hit & ((k & 8) > 0))
    if not records:
        return np.zeros((shots, 0), dtype=bool)
    return np.stack(records, axis=1)
