"""Sweeps, per-round rates, threshold estimates, regression fits and projections."""

from __future__ import annotations

import csv
import io
import json
import math
import multiprocessing as mp
import struct
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence, TextIO

import numpy as np

from .codegen import FAMILIES, CodeSpec, SpecError, build_layout, build_memory, qubit_count
from .decode import MatchingDecoder, decode_batch
from .dem import decoding_graphs, extract_dem
from .noise import NOISE_SOURCES, NoiseError, NoiseSpec, apply_noise, parse_source
from .sim import BLOCK_SHOTS, FrameProgram, ShotBatch, block_rng, logical_error_count

__all__ = [
    "ShotPolicy",
    "ExperimentSpec",
    "ResultRow",
    "FitResult",
    "SurfaceFit",
    "ThresholdEstimate",
    "Projection",
    "Improvement",
    "FitError",
    "NoCrossingError",
    "SaturationWarning",
    "CSV_COLUMNS",
    "run_sweep",
    "iter_sweep",
    "run_cell",
    "cell_seed",
    "per_round_rate",
    "estimate_threshold",
    "fit_distance_scaling",
    "fit_rounds_curve",
    "fit_scaling_surface",
    "project_qubits",
    "improvement_factor",
    "write_csv",
    "read_csv",
    "rows_to_csv",
    "default_p_grid",
    "table_ii",
    "table_iii",
]

CSV_COLUMNS = (
    "family", "distance", "rounds", "noise", "p_phys", "shots",
    "failures", "p_shot", "p_round", "stderr", "seed",
)


class FitError(ValueError):
    pass


class NoCrossingError(ValueError):
    """Two distance curves do not cross inside the swept grid."""

    def __init__(self, pair: tuple[int, int], larger_better: bool | None):
        self.pair = pair
        # True: the larger distance wins everywhere, so any threshold lies above the grid
        self.larger_better = larger_better
        if larger_better is None:
            where = "no common usable grid points"
        elif larger_better:
            where = "larger distance is better at every grid point"
        else:
            where = "larger distance is worse at every grid point"
        super().__init__(f"distances {pair[0]} and {pair[1]} do not cross: {where}")


class SaturationWarning(RuntimeWarning):
    pass


def default_p_grid() -> tuple[float, ...]:
    """Twelve log-spaced points from 1e-4 to 5e-2."""
    return tuple(float(x) for x in np.geomspace(1e-4, 5e-2, 12))


# ---------------------------------------------------------------------------
# Specs and rows


@dataclass(frozen=True)
class ShotPolicy:
    """Fixed shot count, or sample whole blocks until ``target_failures`` or ``max_shots``."""

    fixed: int | None = None
    target_failures: int = 100
    max_shots: int = 10_000_000

    def __post_init__(self):
        if self.fixed is not None and self.fixed < 0:
            raise SpecError("fixed shot count must be >= 0")
        if self.target_failures < 1 or self.max_shots < 1:
            raise SpecError("adaptive policy needs positive target and cap")

    def to_json(self) -> dict:
        if self.fixed is not None:
            return {"fixed": self.fixed}
        return {"target_failures": self.target_failures, "max_shots": self.max_shots}

    @classmethod
    def from_json(cls, obj) -> "ShotPolicy":
        if isinstance(obj, int):
            return cls(fixed=obj)
        unknown = set(obj) - {"fixed", "target_failures", "max_shots"}
        if unknown:
            raise SpecError(f"unknown shot policy fields {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class ExperimentSpec:
    families: tuple[str, ...]
    distances: tuple[int, ...]
    noise: tuple[str, ...]
    p_grid: tuple[float, ...]
    # None means three rounds per unit of distance; otherwise every listed count is run
    rounds: tuple[int, ...] | None = None
    shots: ShotPolicy = field(default_factory=ShotPolicy)
    seed: int = 0
    basis: str = "Z"

    def __post_init__(self):
        for name in ("families", "distances", "noise", "p_grid"):
            value = getattr(self, name)
            if isinstance(value, (str, int, float)):
                value = (value,)
            object.__setattr__(self, name, tuple(value))
            if not getattr(self, name):
                raise SpecError(f"{name} must be nonempty")
        if self.rounds is not None:
            object.__setattr__(self, "rounds", tuple(int(r) for r in self.rounds))
            if not self.rounds or min(self.rounds) < 1:
                raise SpecError("explicit rounds must be a nonempty list of positive counts")
        for f in self.families:
            if f not in FAMILIES:
                raise SpecError(f"unknown code family {f!r}")
        for d in self.distances:
            if not isinstance(d, (int, np.integer)) or d < 3 or d % 2 == 0:
                raise SpecError(f"distance must be an odd integer >= 3, got {d!r}")
        try:
            object.__setattr__(self, "noise", tuple(parse_source(s).value for s in self.noise))
        except NoiseError as exc:
            raise SpecError(str(exc)) from None
        for p in self.p_grid:
            # p = 0 is accepted so that noiseless control sweeps share the same path
            if not 0.0 <= p <= 0.5:
                raise SpecError(f"physical error rate {p} outside [0, 0.5]")
        if not 0 <= self.seed < 2**64:
            raise SpecError("seed must fit in 64 bits")
        if self.basis not in ("Z", "X"):
            raise SpecError("basis must be 'Z' or 'X'")

    def rounds_for(self, distance: int) -> tuple[int, ...]:
        return (3 * distance,) if self.rounds is None else self.rounds

    def cells(self) -> list[tuple]:
        """Grid cells in output order: family, distance, rounds, noise, p."""
        out = []
        for fam in self.families:
            for d in self.distances:
                for r in self.rounds_for(d):
                    for src in self.noise:
                        for p in self.p_grid:
                            out.append((fam, int(d), int(r), src, float(p)))
        return out

    def to_json(self) -> dict:
        return {
            "families": list(self.families),
            "distances": list(self.distances),
            "rounds": None if self.rounds is None else list(self.rounds),
            "noise": list(self.noise),
            "p_grid": list(self.p_grid),
            "shots": self.shots.to_json(),
            "seed": self.seed,
            "basis": self.basis,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentSpec":
        obj = dict(obj)
        unknown = set(obj) - {"families", "distances", "rounds", "noise", "p_grid", "shots", "seed", "basis"}
        if unknown:
            raise SpecError(f"unknown spec fields {sorted(unknown)}")
        for key in ("families", "distances", "noise", "p_grid"):
            if key not in obj:
                raise SpecError(f"spec is missing {key!r}")
        noise = obj["noise"]
        if isinstance(noise, dict):
            noise = [noise["source"]]
        elif isinstance(noise, list):
            noise = [n["source"] if isinstance(n, dict) else n for n in noise]
        rounds = obj.get("rounds")
        if rounds in ("3d", "3xd", "3*d"):
            rounds = None
        return cls(
            families=obj["families"],
            distances=obj["distances"],
            noise=noise,
            p_grid=obj["p_grid"],
            rounds=rounds,
            shots=ShotPolicy.from_json(obj.get("shots", {})),
            seed=int(obj.get("seed", 0)),
            basis=obj.get("basis", "Z"),
        )

    @classmethod
    def loads(cls, text: str) -> "ExperimentSpec":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"spec is not valid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise SpecError("spec must be a JSON object")
        try:
            return cls.from_json(obj)
        except (TypeError, ValueError, KeyError) as exc:
            if isinstance(exc, SpecError):
                raise
            raise SpecError(str(exc)) from None


@dataclass(frozen=True)
class ResultRow:
    family: str
    distance: int
    rounds: int
    noise: str
    p_phys: float
    shots: int
    failures: int
    p_shot: float
    p_round: float
    stderr: float
    seed: int
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.shots > 0 and not math.isnan(self.p_shot)

    @classmethod
    def from_counts(cls, family, distance, rounds, noise, p_phys, shots, failures, seed, note="") -> "ResultRow":
        p_shot = failures / shots
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", SaturationWarning)
            p_round = per_round_rate(p_shot, rounds)
        if caught and not note:
            note = "saturated: every shot failed"
        stderr = math.sqrt(p_shot * (1.0 - p_shot) / shots)
        return cls(family, distance, rounds, noise, p_phys, shots, failures, p_shot, p_round, stderr, seed, note)

    @classmethod
    def failed(cls, family, distance, rounds, noise, p_phys, seed, note) -> "ResultRow":
        nan = float("nan")
        return cls(family, distance, rounds, noise, p_phys, 0, 0, nan, nan, nan, seed, note)


def per_round_rate(p_shot: float, rounds: int) -> float:
    """Per-round rate that compounds to ``p_shot`` over independent rounds."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not 0.0 <= p_shot <= 1.0:
        raise ValueError(f"p_shot {p_shot} outside [0, 1]")
    if p_shot == 1.0:
        warnings.warn("every shot failed; per-round rate saturated at 1", SaturationWarning, stacklevel=2)
        return 1.0
    if rounds == 1:
        return float(p_shot)
    return float(-math.expm1(math.log1p(-p_shot) / rounds))


# ---------------------------------------------------------------------------
# Sweeps


def cell_seed(seed: int, family: str, distance: int, rounds: int, noise: str, p: float) -> int:
    """63-bit seed of one grid cell, a pure function of the spec seed and the cell key."""
    pbits = struct.unpack("<Q", struct.pack("<d", float(p)))[0]
    key = [
        seed & 0xFFFFFFFF, seed >> 32,
        FAMILIES.index(family), distance, rounds, sorted(NOISE_SOURCES).index(noise),
        pbits & 0xFFFFFFFF, pbits >> 32,
    ]
    words = np.random.SeedSequence(key).generate_state(2, dtype=np.uint32)
    return int((int(words[1]) << 32 | int(words[0])) & (2**63 - 1))


class _Cell(NamedTuple):
    family: str
    distance: int
    rounds: int
    noise: str
    p: float
    seed: int
    policy: ShotPolicy
    basis: str


def _count_failures(cell: _Cell) -> tuple[int, int]:
    spec = CodeSpec(cell.family, cell.distance, cell.rounds, cell.basis)
    layout = build_layout(spec)
    circuit = apply_noise(build_memory(spec), NoiseSpec(cell.noise, cell.p))
    dem = extract_dem(circuit)
    decoders = [MatchingDecoder(g) for g in decoding_graphs(dem, layout)] if dem.mechanisms else []
    program = FrameProgram(circuit)
    policy = cell.policy
    budget = policy.fixed if policy.fixed is not None else policy.max_shots
    shots = failures = 0
    block = 0
    while shots < budget:
        det, obs = program.run_block(block_rng(cell.seed, block))
        take = min(BLOCK_SHOTS, budget - shots)
        batch = _slice(ShotBatch(BLOCK_SHOTS, det, obs), take)
        failures += logical_error_count(batch, decode_batch(decoders, batch))
        shots += take
        block += 1
        if policy.fixed is None and failures >= policy.target_failures:
            break
    return shots, failures


def _slice(batch: ShotBatch, take: int) -> ShotBatch:
    if take == batch.shots:
        return batch
    return ShotBatch.from_bool(batch.detectors[:take], batch.observables[:take])


def _run_cell(cell: _Cell) -> ResultRow:
    key = (cell.family, cell.distance, cell.rounds, cell.noise, cell.p)
    try:
        shots, failures = _count_failures(cell)
    except (ValueError, MemoryError) as exc:
        return ResultRow.failed(*key, cell.seed, f"{type(exc).__name__}: {exc}")
    if shots == 0:
        return ResultRow.failed(*key, cell.seed, "no shots requested")
    return ResultRow.from_counts(*key, shots, failures, cell.seed)


def run_cell(
    family: str, distance: int, noise: str, p: float, shots: int | ShotPolicy,
    seed: int, rounds: int | None = None, basis: str = "Z",
) -> ResultRow:
    """One grid cell with an explicit cell seed."""
    policy = shots if isinstance(shots, ShotPolicy) else ShotPolicy(fixed=shots)
    rounds = 3 * distance if rounds is None else rounds
    return _run_cell(_Cell(family, distance, rounds, parse_source(noise).value, p, seed, policy, basis))


def _cells(spec: ExperimentSpec) -> list[_Cell]:
    return [
        _Cell(f, d, r, s, p, cell_seed(spec.seed, f, d, r, s, p), spec.shots, spec.basis)
        for f, d, r, s, p in spec.cells()
    ]


def iter_sweep(spec: ExperimentSpec, workers: int = 1) -> Iterator[ResultRow]:
    """Rows in grid order as they complete.

    Each cell draws only from its own seed, so the rows do not depend on
    ``workers``; the pool only changes wall time.
    """
    cells = _cells(spec)
    if workers <= 1 or len(cells) <= 1:
        for c in cells:
            yield _run_cell(c)
        return
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        yield from pool.map(_run_cell, cells)


def run_sweep(spec: ExperimentSpec, workers: int = 1) -> list[ResultRow]:
    return list(iter_sweep(spec, workers))


# ---------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows: Iterable[ResultRow], fh: TextIO, header: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        fh.flush()


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def read_csv(fh: TextIO) -> list[ResultRow]:
    reader = csv.DictReader(fh)
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise SpecError(f"CSV columns must be exactly {','.join(CSV_COLUMNS)}")
    out = []
    for rec in reader:
        out.append(ResultRow(
            rec["family"], int(rec["distance"]), int(rec["rounds"]), rec["noise"],
            float(rec["p_phys"]), int(rec["shots"]), int(rec["failures"]),
            float(rec["p_shot"]), float(rec["p_round"]), float(rec["stderr"]), int(rec["seed"]),
        ))
    return out


# ---------------------------------------------------------------------------
# Thresholds


@dataclass(frozen=True)
class ThresholdEstimate:
    p_th: float
    crossings: tuple[tuple[int, int, float], ...]  # (smaller d, larger d, crossing p)
    uncertainty: float  # half-width of the bootstrap interval
    interval: tuple[float, float]
    bootstrap: int
    notes: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return asdict(self)


def _curves(rows: Sequence[ResultRow]) -> dict[int, dict[float, ResultRow]]:
    keys = {(r.family, r.noise) for r in rows}
    if len(keys) > 1:
        raise FitError(f"rows mix several family/noise combinations: {sorted(keys)}")
    by_d: dict[int, dict[float, ResultRow]] = {}
    for r in rows:
        if not r.ok:
            continue
        cur = by_d.setdefault(r.distance, {})
        if r.p_phys in cur:
            raise FitError(f"duplicate row for d={r.distance}, p={r.p_phys}")
        cur[r.p_phys] = r
    return by_d


def _crossing(ps: np.ndarray, lo: np.ndarray, hi: np.ndarray, pair) -> float:
    """First upward crossing of log(hi) - log(lo) against log p, interpolated linearly."""
    lp = np.log(ps)
    diff = np.log(hi) - np.log(lo)
    for i in range(len(ps)):
        if diff[i] == 0.0:
            return float(ps[i])
        if i + 1 < len(ps) and diff[i] < 0.0 < diff[i + 1]:
            t = -diff[i] / (diff[i + 1] - diff[i])
            return float(np.exp(lp[i] + t * (lp[i + 1] - lp[i])))
    raise NoCrossingError(pair, bool(np.all(diff < 0)))


def _pair_grid(a: dict[float, ResultRow], b: dict[float, ResultRow]) -> np.ndarray:
    # zero-failure rows have no logarithm; saturated rows carry no ordering information
    common = [p for p in sorted(set(a) & set(b)) if 0 < a[p].failures < a[p].shots and 0 < b[p].failures < b[p].shots]
    return np.asarray(common, dtype=float)


def estimate_threshold(
    rows: Sequence[ResultRow], bootstrap: int = 200, seed: int = 0, level: float = 0.95
) -> ThresholdEstimate:
    """Median crossing of adjacent-distance curves, with a binomial bootstrap interval."""
    by_d = _curves(rows)
    ds = sorted(by_d)
    if len(ds) < 2:
        raise FitError("threshold estimation needs at least two distances")
    pairs = list(zip(ds, ds[1:]))
    grids = []
    for d1, d2 in pairs:
        g = _pair_grid(by_d[d1], by_d[d2])
        if len(g) == 0:
            raise NoCrossingError((d1, d2), None)
        grids.append(g)

    def rates(d, grid, fails=None):
        rs = [by_d[d][p] for p in grid]
        f = np.array([r.failures for r in rs], dtype=float) if fails is None else fails
        n = np.array([r.shots for r in rs], dtype=float)
        r_ = np.array([r.rounds for r in rs], dtype=float)
        ps = np.clip(f / n, 0.0, 1.0)
        return -np.expm1(np.log1p(-np.minimum(ps, 1 - 1e-300)) / r_)

    crossings = []
    for (d1, d2), g in zip(pairs, grids):
        crossings.append((d1, d2, _crossing(g, rates(d1, g), rates(d2, g), (d1, d2))))
    p_th = float(np.median([c[2] for c in crossings]))

    rng = np.random.default_rng(seed)
    notes = []
    meds = []
    skipped = 0
    for _ in range(bootstrap):
        cs = []
        for (d1, d2), g in zip(pairs, grids):
            sim = {}
            for d in (d1, d2):
                rs = [by_d[d][p] for p in g]
                n = np.array([r.shots for r in rs])
                sim[d] = rates(d, g, rng.binomial(n, [r.failures / r.shots for r in rs]).astype(float))
            a, b = sim[d1], sim[d2]
            keep = (a > 0) & (b > 0)
            try:
                cs.append(_crossing(g[keep], a[keep], b[keep], (d1, d2)))
            except NoCrossingError:
                pass
        if cs:
            meds.append(float(np.median(cs)))
        else:
            skipped += 1
    if skipped:
        notes.append(f"{skipped} of {bootstrap} resamples had no crossing")
    if meds:
        q = (1.0 - level) / 2.0
        lo, hi = (float(x) for x in np.quantile(meds, [q, 1.0 - q]))
    else:
        lo = hi = p_th
    return ThresholdEstimate(p_th, tuple(crossings), (hi - lo) / 2.0, (lo, hi), bootstrap, tuple(notes))


# ---------------------------------------------------------------------------
# Regression fits


@dataclass(frozen=True)
class FitResult:
    kind: str  # "log-linear in d" or "logarithmic in rounds"
    slope: float
    intercept: float
    residuals: tuple[float, ...]
    x: tuple[float, ...]
    y: tuple[float, ...]
    weights: tuple[float, ...]
    notes: tuple[str, ...] = ()

    def predict(self, x: float) -> float:
        """log10 rate for a distance fit; rate for a rounds fit."""
        if self.kind == "log-linear in d":
            return self.intercept + self.slope * x
        return self.intercept + self.slope * math.log(x)

    def project_distance(self, target: float) -> int:
        """Smallest integer distance whose fitted rate is at or below ``target``."""
        if self.kind != "log-linear in d":
            raise FitError("distance projection needs a log-linear distance fit")
        if not 0 < target < 1:
            raise FitError("target rate must be in (0, 1)")
        if self.slope >= 0:
            raise FitError(f"fitted slope {self.slope:.3g} shows no suppression with distance")
        d = (math.log10(target) - self.intercept) / self.slope
        # absorb float noise so exact hits are not pushed to the next integer
        return int(math.ceil(d - 1e-9))

    def to_json(self) -> dict:
        return asdict(self)


def _wls(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float, np.ndarray]:
    A = np.stack([np.ones_like(x), x], axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    return float(coef[1]), float(coef[0]), y - A @ coef


def _log_sigma(r: ResultRow) -> float:
    """Standard deviation of log10 p_round by the delta method."""
    ps = r.failures / r.shots
    sd_shot = math.sqrt(ps * (1 - ps) / r.shots)
    dround = (1.0 / r.rounds) * (1.0 - ps) ** (1.0 / r.rounds - 1.0)
    return dround * sd_shot / (r.p_round * math.log(10))


def _usable(rows: Sequence[ResultRow]) -> tuple[list[ResultRow], list[str]]:
    keep, notes = [], []
    for r in rows:
        if not r.ok:
            notes.append(f"d={r.distance} r={r.rounds} p={r.p_phys}: failed cell excluded ({r.note})")
        elif r.failures == 0:
            notes.append(f"d={r.distance} r={r.rounds} p={r.p_phys}: zero failures, excluded")
        elif r.failures == r.shots:
            notes.append(f"d={r.distance} r={r.rounds} p={r.p_phys}: saturated, excluded")
        else:
            keep.append(r)
    return keep, notes


def fit_distance_scaling(rows: Sequence[ResultRow], weighted: bool = True) -> FitResult:
    """Inverse-variance weighted fit of log10(p_round) against distance."""
    if len({r.p_phys for r in rows}) > 1:
        raise FitError("distance fit needs rows at a single physical error rate")
    keep, notes = _usable(rows)
    if len({r.distance for r in keep}) < 3:
        raise FitError(f"need at least 3 distances with failures, have {len(keep)} usable rows")
    x = np.array([r.distance for r in keep], dtype=float)
    y = np.log10([r.p_round for r in keep])
    w = np.array([1.0 / _log_sigma(r) ** 2 for r in keep]) if weighted else np.ones_like(x)
    slope, intercept, res = _wls(x, y, w)
    return FitResult("log-linear in d", slope, intercept, tuple(res), tuple(x), tuple(y), tuple(w), tuple(notes))


def fit_rounds_curve(rows: Sequence[ResultRow]) -> FitResult:
    """Least-squares fit p_round = a + b ln(rounds); ``slope`` is b and ``intercept`` is a."""
    if len({(r.distance, r.p_phys) for r in rows}) > 1:
        raise FitError("rounds fit needs rows at a single distance and physical error rate")
    keep = [r for r in rows if r.ok]
    notes = [f"r={r.rounds}: failed cell excluded ({r.note})" for r in rows if not r.ok]
    if len({r.rounds for r in keep}) < 3:
        raise FitError("need at least 3 round counts")
    x = np.array([r.rounds for r in keep], dtype=float)
    y = np.array([r.p_round for r in keep], dtype=float)
    w = np.ones_like(x)
    slope, intercept, res = _wls(np.log(x), y, w)
    return FitResult("logarithmic in rounds", slope, intercept, tuple(res), tuple(x), tuple(y), tuple(w), tuple(notes))


@dataclass(frozen=True)
class SurfaceFit:
    """log10 p_round = c0 + c1*d + c2*log10 p + c3*d*log10 p over rows at several p.

    Used to carry distance scaling down to physical rates where direct sampling
    sees no failures at the larger distances.
    """

    coef: tuple[float, float, float, float]
    residuals: tuple[float, ...]
    rows: int
    notes: tuple[str, ...] = ()

    def at(self, p: float, distances: Sequence[int] = (3, 5, 7)) -> FitResult:
        lp = math.log10(p)
        c0, c1, c2, c3 = self.coef
        slope, intercept = c1 + c3 * lp, c0 + c2 * lp
        x = tuple(float(d) for d in distances)
        y = tuple(intercept + slope * d for d in x)
        return FitResult(
            "log-linear in d", slope, intercept, (0.0,) * len(x), x, y, (1.0,) * len(x),
            (f"evaluated from a scaling-surface fit over {self.rows} rows at p={p:g}",) + self.notes,
        )

    def to_json(self) -> dict:
        return asdict(self)


def fit_scaling_surface(rows: Sequence[ResultRow], max_p: float | None = None) -> SurfaceFit:
    keep, notes = _usable([r for r in rows if max_p is None or r.p_phys <= max_p])
    if len({r.distance for r in keep}) < 2 or len({r.p_phys for r in keep}) < 2 or len(keep) < 5:
        raise FitError("surface fit needs at least 2 distances, 2 rates and 5 usable rows")
    d = np.array([r.distance for r in keep], dtype=float)
    lp = np.log10([r.p_phys for r in keep])
    y = np.log10([r.p_round for r in keep])
    w = np.array([1.0 / _log_sigma(r) ** 2 for r in keep])
    A = np.stack([np.ones_like(d), d, lp, d * lp], axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    return SurfaceFit(tuple(float(c) for c in coef), tuple(y - A @ coef), len(keep), tuple(notes))


# ---------------------------------------------------------------------------
# Projections


class Projection(NamedTuple):
    distance: int
    qubits: int
    rounds: int
    note: str = ""


def project_qubits(fit: FitResult, family: str, target: float) -> Projection:
    """Smallest odd distance meeting ``target``, with its qubit and round counts."""
    if family not in FAMILIES:
        raise SpecError(f"unknown code family {family!r}")
    dmin = int(min(fit.x)) if fit.x else 3
    if math.log10(target) >= fit.predict(dmin):
        return Projection(dmin, qubit_count(family, dmin), 3 * dmin,
                          f"target {target:g} already met at the smallest fitted distance")
    d = max(fit.project_distance(target), 3)
    if d % 2 == 0:
        d += 1
    return Projection(d, qubit_count(family, d), 3 * d)


class Improvement(NamedTuple):
    factor: float
    lower_bound: bool


def improvement_factor(rows: Sequence[ResultRow], baseline_p: float) -> dict[int, Improvement]:
    """baseline_p / p_round per distance; zero-failure rows give a flagged lower bound."""
    out: dict[int, Improvement] = {}
    for r in rows:
        if not r.ok:
            continue
        if r.distance in out:
            raise FitError(f"several rows for distance {r.distance}")
        if r.failures == 0:
            # one-sided 95% upper bound on p_shot for zero observed failures
            upper = per_round_rate(min(1.0, 3.0 / r.shots), r.rounds)
            out[r.distance] = Improvement(baseline_p / upper, True)
        else:
            out[r.distance] = Improvement(baseline_p / r.p_round, False)
    return dict(sorted(out.items()))


# ---------------------------------------------------------------------------
# Resource tables


def _scaling_fit(rows: Sequence[ResultRow], p: float) -> FitResult:
    """Distance fit at ``p``: direct when rows exist there, else through a scaling surface."""
    at_p = [r for r in rows if r.p_phys == p]
    usable, _ = _usable(at_p)
    if len({r.distance for r in usable}) >= 3:
        return fit_distance_scaling(at_p)
    ds = sorted({r.distance for r in rows})
    return fit_scaling_surface(rows).at(p, ds)


def table_ii(rows: Sequence[ResultRow], p: float = 1e-3, target: float = 1e-9) -> list[dict]:
    """Minimum distance, qubits and rounds per (family, noise) at physical rate ``p``."""
    out = []
    groups: dict[tuple[str, str], list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.family, r.noise), []).append(r)
    for (fam, noise), grp in groups.items():
        fit = _scaling_fit(grp, p)
        proj = project_qubits(fit, fam, target)
        out.append({
            "family": fam, "noise": noise, "p_phys": p, "target": target,
            "distance": proj.distance, "qubits": proj.qubits, "rounds": proj.rounds,
            "slope": fit.slope, "intercept": fit.intercept, "note": proj.note,
        })
    return out


def table_iii(rows: Sequence[ResultRow], p: float = 1e-3, distances: Sequence[int] = (3, 5, 7)) -> list[dict]:
    """Improvement factor p / p_round per distance; measured where sampled, else projected."""
    at_p = [r for r in rows if r.p_phys == p and r.ok]
    families = {r.family for r in at_p}
    if len(families) != 1:
        raise FitError("improvement table needs rows of exactly one family at the baseline rate")
    fam = families.pop()
    measured = improvement_factor(at_p, p)
    try:
        fit = _scaling_fit(rows, p)
    except FitError:
        fit = None
    out = []
    for d in distances:
        if d in measured and not measured[d].lower_bound:
            factor, source = measured[d].factor, "measured"
        elif fit is not None:
            factor, source = p / 10 ** fit.predict(d), "projected"
        elif d in measured:
            factor, source = measured[d].factor, "lower bound"
        else:
            continue
        out.append({
            "distance": d, "rounds": 3 * d, "qubits": qubit_count(fam, d),
            "factor": factor, "source": source,
        })
    return out
