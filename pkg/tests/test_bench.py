from __future__ import annotations

import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qecnoise import bench
from qecnoise.bench import (
    CSV_COLUMNS,
    ExperimentSpec,
    FitError,
    NoCrossingError,
    ResultRow,
    SaturationWarning,
    ShotPolicy,
    estimate_threshold,
    fit_distance_scaling,
    fit_rounds_curve,
    fit_scaling_surface,
    improvement_factor,
    per_round_rate,
    project_qubits,
    read_csv,
    rows_to_csv,
    run_cell,
    run_sweep,
)
from qecnoise.codegen import SpecError


def test_per_round_examples():
    assert per_round_rate(0.0, 7) == 0.0
    assert per_round_rate(0.123, 1) == 0.123
    assert per_round_rate(0.09, 9) == pytest.approx(1 - 0.91 ** (1 / 9), rel=1e-14)
    assert per_round_rate(0.09, 9) == pytest.approx(0.010424, abs=5e-7)
    with pytest.warns(SaturationWarning):
        assert per_round_rate(1.0, 5) == 1.0
    with pytest.raises(ValueError):
        per_round_rate(0.1, 0)


@given(st.floats(0, 1, exclude_max=True), st.integers(1, 200))
def test_per_round_compounds_back(p, r):
    q = per_round_rate(p, r)
    assert 0 <= q <= p + 1e-15
    assert 1 - (1 - q) ** r == pytest.approx(p, abs=1e-12)


def _row(d, p, p_round, rounds=None, shots=10**15, family="rotated", noise="gate"):
    rounds = 3 * d if rounds is None else rounds
    p_shot = 1 - (1 - p_round) ** rounds
    return ResultRow.from_counts(family, d, rounds, noise, p, shots, int(round(p_shot * shots)), 0)


def _synthetic(p0=0.01, distances=(3, 5, 7), grid=None):
    grid = np.geomspace(1e-3, 5e-2, 9) if grid is None else grid
    # keep the largest rate at 0.3 so every synthetic curve stays a valid probability
    amp = 0.3 * (p0 / grid[-1]) ** ((max(distances) + 1) / 2)
    return [_row(d, float(p), amp * (p / p0) ** ((d + 1) / 2)) for d in distances for p in grid]


def test_threshold_recovers_synthetic_crossing():
    est = estimate_threshold(_synthetic(), bootstrap=50)
    assert abs(est.p_th - 0.01) < 5e-4
    assert [c[:2] for c in est.crossings] == [(3, 5), (5, 7)]
    assert est.interval[0] <= est.p_th <= est.interval[1]


@settings(max_examples=20, deadline=None)
@given(st.floats(2e-3, 3e-2))
def test_threshold_inside_grid_hull(p0):
    grid = np.geomspace(1e-3, 5e-2, 7)
    est = estimate_threshold(_synthetic(p0=p0, grid=grid), bootstrap=0)
    assert grid[0] <= est.p_th <= grid[-1]
    assert est.p_th == pytest.approx(p0, rel=1e-3)


def test_threshold_rejects_no_crossing():
    grid = np.geomspace(1e-3, 1e-2, 5)
    worse = [_row(d, float(p), min(0.4, p * d)) for d in (3, 5) for p in grid]
    with pytest.raises(NoCrossingError) as err:
        estimate_threshold(worse)
    assert err.value.pair == (3, 5) and err.value.larger_better is False
    assert "3 and 5" in str(err.value)
    with pytest.raises(FitError):
        estimate_threshold([r for r in worse if r.distance == 3])


def test_distance_fit_exact():
    rows = [_row(d, 1e-3, 10 ** (-0.5 * d - 1)) for d in (3, 5, 7, 9)]
    fit = fit_distance_scaling(rows)
    assert fit.kind == "log-linear in d"
    assert fit.slope == pytest.approx(-0.5, abs=1e-9)
    assert fit.intercept == pytest.approx(-1.0, abs=1e-9)
    assert fit.project_distance(10**-6) == 10
    assert fit.project_distance(10**-5.5) == 9
    # refitting from the stored rows and weights gives the same line
    x, y, w = map(np.array, (fit.x, fit.y, fit.weights))
    A = np.stack([np.ones_like(x), x], 1) * np.sqrt(w)[:, None]
    c = np.linalg.lstsq(A, y * np.sqrt(w), rcond=None)[0]
    assert c[1] == pytest.approx(fit.slope, abs=1e-12)


def test_distance_fit_needs_three_nonzero():
    rows = [_row(d, 1e-3, 10 ** (-0.5 * d - 1)) for d in (3, 5)]
    rows.append(ResultRow.from_counts("rotated", 7, 21, "gate", 1e-3, 1000, 0, 0))
    with pytest.raises(FitError):
        fit_distance_scaling(rows)
    rows.append(_row(9, 1e-3, 1e-6))
    fit = fit_distance_scaling(rows)
    assert any("zero failures" in n for n in fit.notes)


def test_rounds_fit_exact_and_constant():
    rs = [3, 6, 9, 15, 30]
    rows = [_row(3, 1e-4, 0.02 - 0.003 * math.log(r), rounds=r) for r in rs]
    fit = fit_rounds_curve(rows)
    assert fit.slope == pytest.approx(-0.003, abs=1e-9)
    assert fit.intercept == pytest.approx(0.02, abs=1e-9)
    flat = fit_rounds_curve([_row(3, 1e-4, 0.01, rounds=r) for r in rs])
    assert abs(flat.slope) < 1e-9
    with pytest.raises(FitError):
        fit_rounds_curve(rows[:2])


def test_surface_fit_recovers_ansatz():
    rows = [
        _row(d, p, 0.1 * (p / 0.01) ** ((d + 1) / 2))
        for d in (3, 5, 7) for p in (1e-3, 2e-3, 4e-3)
    ]
    s = fit_scaling_surface(rows)
    fit = s.at(1e-3)
    direct = fit_distance_scaling([r for r in rows if r.p_phys == 1e-3])
    assert fit.slope == pytest.approx(direct.slope, abs=1e-6)
    assert fit.intercept == pytest.approx(direct.intercept, abs=1e-6)


def test_project_qubits():
    rows = [_row(d, 1e-3, 10 ** (-0.5 * d - 1)) for d in (3, 5, 7)]
    fit = fit_distance_scaling(rows)
    proj = project_qubits(fit, "rotated", 1e-6)
    assert proj == (11, 2 * 121 - 1, 33, "")
    assert project_qubits(fit, "unrotated", 1e-6).qubits == 21**2
    easy = project_qubits(fit, "rotated", 0.01)
    assert easy.distance == 3 and easy.note
    with pytest.raises(SpecError):
        project_qubits(fit, "toric", 1e-6)


def test_improvement_factor():
    rows = [_row(3, 1e-3, 1e-3), _row(5, 1e-3, 1e-5)]
    imp = improvement_factor(rows, 1e-3)
    assert imp[3].factor == pytest.approx(1.0, rel=1e-9) and not imp[3].lower_bound
    assert imp[5].factor == pytest.approx(100, rel=1e-6)
    zero = ResultRow.from_counts("rotated", 7, 21, "circuit_level", 1e-3, 3_000_000, 0, 0)
    imp = improvement_factor([zero], 1e-3)
    assert imp[7].lower_bound and imp[7].factor > 1


def test_result_row_invariants():
    r = ResultRow.from_counts("rotated", 3, 9, "gate", 0.01, 1000, 90, 5)
    assert r.p_shot == 0.09 and r.p_round == per_round_rate(0.09, 9)
    assert r.stderr == math.sqrt(0.09 * 0.91 / 1000)


def _spec(**kw):
    base = dict(families=["rotated"], distances=[3], noise=["circuit_level"], p_grid=[0.0, 0.01],
                shots=ShotPolicy(fixed=3000), seed=17)
    base.update(kw)
    return ExperimentSpec(**base)


def test_spec_json_round_trip_and_errors():
    spec = _spec(rounds=[2, 4])
    assert ExperimentSpec.from_json(json.loads(json.dumps(spec.to_json()))) == spec
    loaded = ExperimentSpec.loads(json.dumps({
        "families": ["repetition"], "distances": [3], "noise": {"source": "circuit_level", "p": 1e-3},
        "p_grid": [1e-3], "shots": {"target_failures": 100, "max_shots": 10**7}, "seed": 3,
    }))
    assert loaded.noise == ("circuit_level",) and loaded.rounds is None
    for bad in [
        dict(distances=[4]), dict(distances=[]), dict(p_grid=[0.6]), dict(families=["toric"]),
        dict(noise=["thermal"]), dict(seed=-1), dict(rounds=[0]),
    ]:
        with pytest.raises(SpecError):
            _spec(**bad)
    with pytest.raises(SpecError):
        ExperimentSpec.loads("{not json")
    with pytest.raises(SpecError):
        ExperimentSpec.loads('{"families": ["rotated"]}')


def test_sweep_rows_and_csv():
    spec = _spec()
    rows = run_sweep(spec)
    assert [(r.p_phys, r.rounds) for r in rows] == [(0.0, 9), (0.01, 9)]
    assert rows[0].failures == 0 and rows[0].shots == 3000
    assert rows[1].failures > 0
    text = rows_to_csv(rows)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    back = read_csv(io.StringIO(text))
    assert rows_to_csv(back) == text
    for r in back:
        assert r.p_round == per_round_rate(r.p_shot, r.rounds)


def test_sweep_deterministic_across_workers():
    spec = _spec(distances=[3, 5], p_grid=[0.005, 0.01])
    assert rows_to_csv(run_sweep(spec, workers=1)) == rows_to_csv(run_sweep(spec, workers=2))


def test_adaptive_policy_stops_on_block_boundaries():
    r = run_cell("rotated", 3, "circuit_level", 0.01, ShotPolicy(target_failures=50, max_shots=10**6), seed=1)
    assert r.failures >= 50 and r.shots % bench.BLOCK_SHOTS == 0
    capped = run_cell("rotated", 3, "circuit_level", 1e-4, ShotPolicy(target_failures=50, max_shots=5000), seed=1)
    assert capped.shots == 5000


def test_cell_seed_depends_on_every_key():
    base = bench.cell_seed(1, "rotated", 3, 9, "gate", 0.01)
    assert base == bench.cell_seed(1, "rotated", 3, 9, "gate", 0.01)
    variants = [
        bench.cell_seed(2, "rotated", 3, 9, "gate", 0.01),
        bench.cell_seed(1, "unrotated", 3, 9, "gate", 0.01),
        bench.cell_seed(1, "rotated", 5, 9, "gate", 0.01),
        bench.cell_seed(1, "rotated", 3, 10, "gate", 0.01),
        bench.cell_seed(1, "rotated", 3, 9, "reset", 0.01),
        bench.cell_seed(1, "rotated", 3, 9, "gate", 0.011),
    ]
    assert len(set(variants + [base])) == 7


def test_failed_cell_becomes_note_row(monkeypatch):
    real = bench.extract_dem

    def flaky(circuit):
        if circuit.num_qubits == 49:
            raise ValueError("graph construction failed")
        return real(circuit)

    monkeypatch.setattr(bench, "extract_dem", flaky)
    rows = run_sweep(_spec(distances=[3, 5, 7], p_grid=[0.01], shots=ShotPolicy(fixed=500)))
    assert [r.ok for r in rows] == [True, False, True]
    assert "graph construction failed" in rows[1].note
    assert "nan" in rows_to_csv(rows).splitlines()[2]
