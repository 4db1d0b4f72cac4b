"""Command-line entry point: ``qecnoise <subcommand> ...``."""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

from . import bench
from .codegen import CodeSpec, SpecError, build_memory
from .core import CircuitError, ParseError, parse_circuit, serialize
from .noise import NoiseError, NoiseSpec, apply_noise
from .sim import sample_batch

EXIT_OK, EXIT_SPEC, EXIT_RUNTIME = 0, 2, 3


def _open_out(path: str | None, mode: str = "w"):
    if path in (None, "-"):
        return sys.stdout.buffer if "b" in mode else sys.stdout
    return open(path, mode)


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc}") from None


def _rows(path: str) -> list[bench.ResultRow]:
    return bench.read_csv(io.StringIO(_read_text(path)))


def _filter(rows, args) -> list[bench.ResultRow]:
    out = rows
    if getattr(args, "family", None):
        out = [r for r in out if r.family == args.family]
    if getattr(args, "noise", None):
        out = [r for r in out if r.noise == args.noise]
    if getattr(args, "distance", None):
        out = [r for r in out if r.distance == args.distance]
    if getattr(args, "rounds", None):
        out = [r for r in out if r.rounds == args.rounds]
    if not out:
        raise SpecError("no rows left after filtering")
    return out


def _emit(obj, path: str | None = None) -> None:
    fh = _open_out(path)
    json.dump(obj, fh, indent=2, sort_keys=True, default=float)
    fh.write("\n")
    if fh is not sys.stdout:
        fh.close()


def cmd_generate(args) -> int:
    spec = CodeSpec(args.family, args.distance, args.rounds, args.basis)
    circuit = build_memory(spec)
    if args.noise:
        circuit = apply_noise(circuit, NoiseSpec(args.noise, args.p), strict=args.strict)
    fh = _open_out(args.out)
    fh.write(serialize(circuit))
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


def cmd_sample(args) -> int:
    circuit = parse_circuit(_read_text(args.circuit))
    batch = sample_batch(circuit, args.shots, args.seed)
    fh = _open_out(args.out, "wb")
    batch.dump(fh)
    if fh is not sys.stdout.buffer:
        fh.close()
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = bench.ExperimentSpec.loads(_read_text(args.spec))
    fh = _open_out(args.out)
    failed = 0
    bench.write_csv([], fh)
    for row in bench.iter_sweep(spec, workers=args.workers):
        bench.write_csv([row], fh, header=False)
        if not row.ok:
            failed += 1
        if row.note:
            print(f"{row.family} d={row.distance} r={row.rounds} {row.noise} p={row.p_phys}: {row.note}",
                  file=sys.stderr)
    if fh is not sys.stdout:
        fh.close()
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_threshold(args) -> int:
    rows = _filter(_rows(args.csv), args)
    try:
        est = bench.estimate_threshold(rows, bootstrap=args.bootstrap, seed=args.seed)
    except bench.NoCrossingError as exc:
        _emit({"error": str(exc), "pair": list(exc.pair), "larger_better": exc.larger_better})
        return EXIT_RUNTIME
    _emit(est.to_json(), args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    rows = _filter(_rows(args.csv), args)
    if args.kind == "rounds":
        fit = bench.fit_rounds_curve(rows)
        _emit({"fit": fit.to_json()}, args.out)
        return EXIT_OK
    if args.kind == "surface":
        surface = bench.fit_scaling_surface(rows)
        fit = surface.at(args.p, sorted({r.distance for r in rows}))
        result = {"surface": surface.to_json(), "fit": fit.to_json()}
    else:
        at_p = [r for r in rows if args.p is None or r.p_phys == args.p]
        fit = bench.fit_distance_scaling(at_p)
        result = {"fit": fit.to_json()}
    if args.target is not None:
        family = args.family or rows[0].family
        result["projection"] = bench.project_qubits(fit, family, args.target)._asdict()
    _emit(result, args.out)
    return EXIT_OK


def cmd_table(args) -> int:
    rows = _filter(_rows(args.csv), args)
    if args.which == "II":
        table = bench.table_ii(rows, p=args.p, target=args.target)
        cols = ["family", "noise", "distance", "qubits", "rounds"]
    else:
        table = bench.table_iii(rows, p=args.p)
        cols = ["distance", "rounds", "qubits", "factor", "source"]
    fh = _open_out(args.out)
    fh.write(",".join(cols) + "\n")
    for rec in table:
        fh.write(",".join(f"{rec[c]:.4g}" if isinstance(rec[c], float) else str(rec[c]) for c in cols) + "\n")
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    # argparse exits with 2 on bad usage, which is also the spec-error code
    ap = argparse.ArgumentParser(prog="qecnoise", description="Surface and repetition code noise benchmarks.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="emit a memory-experiment circuit")
    g.add_argument("--family", required=True)
    g.add_argument("--distance", "-d", type=int, required=True)
    g.add_argument("--rounds", "-r", type=int)
    g.add_argument("--basis", default="Z")
    g.add_argument("--noise", help="error type or noise model to inject")
    g.add_argument("--p", type=float, default=0.0)
    g.add_argument("--strict", action="store_true", help="add Z flips next to readout/reset X flips")
    g.add_argument("--out", "-o")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("sample", help="sample detector and observable bits from a circuit")
    s.add_argument("circuit")
    s.add_argument("--shots", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", "-o")
    s.set_defaults(func=cmd_sample)

    w = sub.add_parser("sweep", help="run a sweep spec (JSON) and write CSV rows")
    w.add_argument("spec")
    w.add_argument("--out", "-o")
    w.add_argument("--workers", "-j", type=int, default=1)
    w.set_defaults(func=cmd_sweep)

    def filters(p):
        p.add_argument("csv")
        p.add_argument("--family")
        p.add_argument("--noise")
        p.add_argument("--out", "-o")

    t = sub.add_parser("threshold", help="estimate a threshold from sweep CSV")
    filters(t)
    t.add_argument("--rounds", type=int)
    t.add_argument("--bootstrap", type=int, default=200)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_threshold)

    f = sub.add_parser("fit", help="regression fit and projection from sweep CSV")
    filters(f)
    f.add_argument("--kind", choices=("distance", "rounds", "surface"), default="distance")
    f.add_argument("--distance", type=int)
    f.add_argument("--p", type=float)
    f.add_argument("--target", type=float)
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("table", help="resource (II) or improvement (III) table from sweep CSV")
    filters(b)
    b.add_argument("--which", choices=("II", "III"), default="II")
    b.add_argument("--p", type=float, default=1e-3)
    b.add_argument("--target", type=float, default=1e-9)
    b.set_defaults(func=cmd_table)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "fit" and args.kind == "surface" and args.p is None:
        print("error: --kind surface needs --p", file=sys.stderr)
        return EXIT_SPEC
    try:
        return args.func(args)
    except (SpecError, NoiseError, ParseError, CircuitError, bench.FitError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (RuntimeError, MemoryError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
