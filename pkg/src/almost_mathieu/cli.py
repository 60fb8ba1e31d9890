"""Command-line interface: datasets, reports and the verification suite.

Every dataset written to a file gets a ``<out>.manifest.json`` next to it.
Exit codes: 0 ok, 1 invariant failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from .approximation import butterfly_dataset, ids_estimate
from .arithmetic import (as_real, diophantine_scan, expand_continued_fraction, from_partial_quotients,
                         liouville_witness)
from .core import FiniteRestriction, Parameters, SingularRestrictionError, monodromy_renormalized
from .duality import (PreconditionError, SmallDivisorError, bloch_pair, dual_cocycle, dual_solution,
                      gap_edge_probe, reducibility_conjugate)
from .localization import (FitRefused, eigenpairs, gordon_inequality_check, gordon_potential_check,
                           js_condition_check)
from .lyapunov import lyapunov_phase_average_many
from .periodic import DecompositionError, band_set, gaps
from .verify import MUTATIONS, TOLERANCES, _jsonable, sub_rng, verify_all

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


class InvariantFailure(RuntimeError):
    pass


# parsing helpers ----------------------------------------------------------

def _grid(text: str) -> np.ndarray:
    try:
        a, b, n = text.split(":")
        n = int(n)
        a, b = float(a), float(b)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a:b:n, got {text!r}") from exc
    if n < 1:
        raise argparse.ArgumentTypeError("grid needs n >= 1")
    return np.linspace(a, b, n)


def _window(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}") from exc
    return a, b


def _int_list(text: str) -> list[int]:
    """Comma-separated integers; b^e is accepted for large entries."""
    def one(x):
        if "^" in x:
            b, e = x.split("^")
            return int(b) ** int(e)
        return int(x)
    try:
        return [one(x.strip()) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _angle(text: str) -> float:
    try:
        return float(as_real(text)[0])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


# output helpers -----------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.12g}"


def to_csv(columns: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def load_schema(name: str) -> dict:
    return json.loads(resources.files(__package__).joinpath("schemas", f"{name}.schema.json").read_text())


def validate_json(doc, name: str):
    jsonschema.validate(doc, load_schema(name))


def validate_csv(text: str, name: str):
    """Check the header against the schema's column list and each row against its row schema."""
    schema = load_schema(name)
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != schema["columns"]:
        raise jsonschema.ValidationError(f"CSV header {header} != {schema['columns']}")
    props = schema["row"]["properties"]
    validator_cls = jsonschema.validators.validator_for(schema["row"])
    validator_cls.check_schema(schema["row"])
    validator = validator_cls(schema["row"])
    for raw in reader:
        row = {}
        for col, val in zip(header, raw):
            kind = props[col].get("type")
            row[col] = int(val) if kind == "integer" else val if kind == "string" else float(val)
        err = jsonschema.exceptions.best_match(validator.iter_errors(row))
        if err is not None:
            raise err


def _emit(args, text: str, schema: str, fmt: str, checks: dict, tolerances: dict | None = None):
    if fmt == "json":
        validate_json(json.loads(text), schema)
    else:
        validate_csv(text, schema)
    checks = {"schema_valid": True, **checks}
    if args.out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    manifest_path = args.manifest or (None if args.out == "-" else args.out + ".manifest.json")
    if manifest_path:
        manifest = {"command_line": ["almost-mathieu", *args.argv], "seed": args.seed,
                    "tolerances": tolerances if tolerances is not None else {},
                    "version": __version__, "wall_time": round(time.perf_counter() - args.t0, 6),
                    "threads": args.threads, "output": args.out, "checks": checks}
        validate_json(manifest, "manifest")
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
    if not all(checks.values()):
        failed = [k for k, v in checks.items() if not v]
        raise InvariantFailure(f"checks failed: {', '.join(failed)}")


def _dump(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2) + "\n"


# subcommands --------------------------------------------------------------

def cmd_classify(args):
    liou = None
    if _in_unit(args.alpha):
        depth = min(args.n, 60)
        liou = liouville_witness(args.alpha, expand_continued_fraction(args.alpha, depth), depth)
    dio = None
    explicit = args.c is not None or args.r is not None
    if explicit or liou is None or liou.kind == "unverified":
        dio = diophantine_scan(args.alpha, 0.1 if args.c is None else args.c,
                               2.0 if args.r is None else args.r, args.n)
    decisive = dio if dio is not None and (explicit or dio.kind != "unverified" or liou is None) else liou
    report = decisive.to_json()
    report["alpha"] = args.alpha
    report["scans"] = {"liouville": liou.to_json() if liou else None,
                       "diophantine": dio.to_json() if dio else None}
    _emit(args, _dump(report), "classify", "json", {})


def _in_unit(alpha) -> bool:
    val, _ = as_real(alpha)
    return 0 < val < 1


def cmd_transfer(args):
    p = Parameters(args.lam, args.alpha, args.omega)
    R, s = monodromy_renormalized(p, args.energy, args.n)
    log_norm = s + math.log(np.linalg.norm(R, 2))
    report = {"lam": p.lam, "alpha": p.alpha, "omega": p.omega, "energy": args.energy, "n": args.n,
              "matrix": R.tolist(), "log_scale": s, "log_norm": log_norm}
    _emit(args, _dump(report), "transfer", "json", {})


def cmd_lyapunov(args):
    est = lyapunov_phase_average_many(args.lam, args.alpha, args.energy_grid, args.steps, args.grid,
                                      threads=args.threads)
    log_lam = math.log(args.lam)
    rows = [(e, g.value, g.stderr, g.value - log_lam) for e, g in zip(args.energy_grid, est)]
    text = to_csv(["E", "gamma_hat", "stderr", "herman_margin"], rows)
    ok = all(r[1] >= -1e-6 for r in rows)
    _emit(args, text, "lyapunov", "csv", {"nonnegative": ok})


def cmd_bands(args):
    bs = band_set(args.lam, args.p, args.q)
    g = gaps(bs)
    if args.csv:
        rows = [("band", i, l, r, r - l) for i, (l, r) in enumerate(bs.intervals)]
        rows += [("gap", i, l, r, ln) for i, (l, r, ln) in enumerate(g)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "index", "left", "right", "length"])
        for kind, i, l, r, ln in rows:
            w.writerow([kind, i, _fmt(l), _fmt(r), _fmt(ln)])
        text = buf.getvalue()
        schema, fmt = "bands_csv", "csv"
    else:
        doc = {"lam": args.lam, "p": args.p, "q": args.q, "closed_gaps": bs.n_closed,
               "bands": [{"left": l, "right": r, "length": r - l} for l, r in bs.intervals],
               "gaps": [{"left": l, "right": r, "length": ln} for l, r, ln in g],
               "measure": float(np.sum(bs.intervals[:, 1] - bs.intervals[:, 0]))}
        text, schema, fmt = _dump(doc), "bands", "json"
    _emit(args, text, schema, fmt, {"band_count": len(bs) + bs.n_closed == args.q})


def cmd_butterfly(args):
    rows = butterfly_dataset(args.lam, args.qmax, threads=args.threads)
    text = to_csv(["p", "q", "band_index", "left", "right"],
                  [(r.p, r.q, r.band_index, r.left, r.right) for r in rows])
    _emit(args, text, "butterfly", "csv", {"nonempty": bool(rows)})


def cmd_ids(args):
    est = ids_estimate(Parameters(args.lam, args.alpha, args.omega), args.grid, args.n,
                       phase_grid=args.phase_grid, threads=args.threads)
    text = to_csv(["E", "ids"], zip(est.energies, est.values))
    order = np.argsort(est.energies, kind="stable")
    monotone = bool(np.all(np.diff(est.values[order]) >= 0))
    _emit(args, text, "ids", "csv", {"monotone": monotone})


def cmd_localize(args):
    half = (args.n - 1) // 2
    r = FiniteRestriction.from_params(Parameters(args.lam, args.alpha, args.omega), -half, args.n - 1 - half)
    pairs = eigenpairs(r, args.window, seed=args.seed)
    doc = {"lam": args.lam, "alpha": args.alpha, "omega": args.omega, "sites": [r.n1, r.n2],
           "window": list(args.window),
           "pairs": [{"energy": p.energy, "center": p.center, "decay_rate": p.decay_rate,
                      "fit_r2": p.fit_r2, "residual": p.residual, "converged": p.converged,
                      "degenerate": p.degenerate} for p in pairs]}
    _emit(args, _dump(doc), "localize", "json",
          {"all_converged": all(p.converged for p in pairs)})


def cmd_gordon(args):
    alpha = from_partial_quotients(args.partial_quotients) if args.partial_quotients else args.alpha_expr
    doc = gordon_potential_check(args.lam, alpha, args.omega, args.q_list, args.c_list)
    checks = {"bound_consistent": all(r["bound_consistent"] for r in doc["results"])}
    if args.inequality_trials:
        rng = sub_rng(args.seed, "gordon-check")
        ratios, branches = [], {"trace_le_1": 0, "trace_gt_1": 0}
        violations = 0
        for _ in range(args.inequality_trials):
            p = int(rng.integers(1, 21))
            try:
                rep = gordon_inequality_check(rng.uniform(-3, 3, p), rng.uniform(-5, 5),
                                              *rng.standard_normal(2))
            except AssertionError:
                violations += 1
                continue
            branches[rep["branch"]] += 1
            if rep["ratio"] is not None:
                ratios.append(rep["ratio"])
        doc["inequality"] = {"trials": args.inequality_trials, "violations": violations,
                             "min_ratio": min(ratios, default=None), "branches": branches}
        checks["gordon_inequality"] = violations == 0
    _emit(args, _dump(doc), "gordon", "json", checks, {"gordon_slack": TOLERANCES["gordon_slack"]})


def cmd_js(args):
    doc = js_condition_check(Parameters(args.lam, args.alpha, args.omega), args.m_list, args.n, args.eps)
    _emit(args, _dump(doc), "js", "json", {})


def cmd_duality(args):
    if not args.lam > 1:
        raise UsageError("duality needs --lambda > 1 (the localized side)")
    M = args.n
    r = FiniteRestriction.from_params(Parameters(args.lam, args.alpha, args.omega), -M, M)
    pairs = sorted(eigenpairs(r, args.window, seed=args.seed, fit=False),
                   key=lambda p: (abs(p.center), p.energy))[:args.count]
    p_q = None
    if args.probe_gap:
        if args.p is not None and args.q is not None:
            p_q = (args.p, args.q)
        else:
            cf = expand_continued_fraction(args.alpha_expr, 40)
            p_q = max((c for c in cf.convergents if c[1] <= args.probe_qmax), key=lambda c: c[1])
    out = []
    checks = {}
    for pair in pairs:
        item = {"energy": pair.energy, "center": pair.center, "eigen_residual": pair.residual}
        try:
            ds = dual_solution(pair.vector, args.dual_phase, args.omega, args.alpha, args.lam, pair.energy)
            item["dual_residual"] = ds.residual
            item["dual_max_abs"] = ds.max_abs
            item["dual_residual_rel"] = ds.residual / ds.max_abs
        except PreconditionError as exc:
            item["dual_error"] = str(exc)
        if args.omega == 0.0:
            try:
                conj = reducibility_conjugate(bloch_pair(pair.vector, args.alpha), dual_cocycle(args.lam, pair.energy),
                                              args.alpha)
                item.update({"c": conj.c, "conjugation_residual": conj.residual,
                             "det_error": conj.det_error, "fourier_K": conj.c_tilde.K,
                             "truncation_converged": conj.truncation_converged})
            except (PreconditionError, SmallDivisorError) as exc:
                item["conjugation_error"] = str(exc)
        else:
            item["conjugation_error"] = "the Bloch-type section is built for eigenpairs at phase 0"
        if p_q is not None:
            item["probe"] = gap_edge_probe(args.lam, p_q[0], p_q[1], args.alpha, pair.energy, item.get("c"))
        out.append(item)
    rel = [i["dual_residual_rel"] for i in out if "dual_residual_rel" in i]
    checks["dual_residual"] = all(x < TOLERANCES["dual_residual_rel"] for x in rel)
    doc = {"lam": args.lam, "alpha": args.alpha, "omega": args.omega, "dual_coupling": 1.0 / args.lam,
           "dual_phase": args.dual_phase, "sites": [-M, M], "window": list(args.window),
           "convergent": list(p_q) if p_q else None, "pairs": out}
    _emit(args, _dump(doc), "duality", "json", checks,
          {"dual_residual_rel": TOLERANCES["dual_residual_rel"]})


def cmd_verify(args):
    report = verify_all(args.profile, seed=args.seed, mutate=args.mutation)
    checks = {c["name"]: c["passed"] for c in report["checks"]}
    text = _dump(report)
    validate_json(json.loads(text), "verify")
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    manifest_path = args.manifest or (None if args.out == "-" else args.out + ".manifest.json")
    if manifest_path:
        manifest = {"command_line": ["almost-mathieu", *args.argv], "seed": args.seed,
                    "tolerances": report["tolerances"], "version": __version__,
                    "wall_time": round(time.perf_counter() - args.t0, 6), "threads": args.threads,
                    "output": args.out, "checks": checks}
        validate_json(manifest, "manifest")
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
    for line in _summary(report):
        print(line, file=sys.stderr)
    if report["hard_failures"] or (args.strict and report["statistical_misses"]):
        return EXIT_INVARIANT
    return EXIT_OK


def _summary(report) -> list[str]:
    lines = [f"{'PASS' if c['passed'] else 'FAIL'} [{c['kind']}] {c['name']} ({c['seconds']:.2f} s)"
             for c in report["checks"]]
    lines.append(f"hard failures: {len(report['hard_failures'])}, "
                 f"statistical misses: {len(report['statistical_misses'])}")
    return lines


# parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--out", default="-", help="output file, '-' for standard output")
    common.add_argument("--manifest", default=None, help="manifest path (default <out>.manifest.json)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    parser = argparse.ArgumentParser(prog="almost-mathieu", allow_abbrev=False,
                                     description="Numerical toolkit for the almost Mathieu operator.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_, allow_abbrev=False)
        p.set_defaults(func=func)
        return p

    def coupling(p, alpha=True, omega=True):
        p.add_argument("--lambda", dest="lam", type=float, required=True)
        if alpha:
            p.add_argument("--alpha", dest="alpha_expr", required=True,
                           help="frequency: decimal, p/q, or an expression such as (sqrt(5)-1)/2")
        if omega:
            p.add_argument("--omega", type=_angle, default=0.0)

    p = add("classify", cmd_classify, "arithmetic class of a frequency")
    p.add_argument("--alpha", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--r", type=float, default=None)

    p = add("transfer", cmd_transfer, "renormalised monodromy M_E(n, omega)")
    coupling(p)
    p.add_argument("--energy", type=float, required=True)
    p.add_argument("--n", type=int, required=True)

    p = add("lyapunov", cmd_lyapunov, "phase-averaged Lyapunov exponents on an energy grid")
    coupling(p, omega=False)
    p.add_argument("--energy-grid", type=_grid, required=True, help="a:b:n")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--grid", type=int, default=256)

    p = add("bands", cmd_bands, "bands and gaps for a rational frequency p/q")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--json", action="store_true")
    g.add_argument("--csv", action="store_true")

    p = add("butterfly", cmd_butterfly, "band intervals for every p/q with q <= qmax")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--qmax", type=int, required=True)

    p = add("ids", cmd_ids, "integrated density of states by eigenvalue counting")
    coupling(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--grid", type=_grid, required=True, help="a:b:m")
    p.add_argument("--phase-grid", type=int, default=None)

    p = add("localize", cmd_localize, "eigenpairs and decay fits in an energy window")
    coupling(p)
    p.add_argument("--n", type=int, required=True, help="number of sites")
    p.add_argument("--window", type=_window, required=True, help="a:b")

    p = add("gordon-check", cmd_gordon, "Gordon potential criterion along q_list")
    coupling(p, alpha=False)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--alpha", dest="alpha_expr")
    g.add_argument("--partial-quotients", type=_int_list, default=None,
                   help="alpha = [0; a1, a2, ...] given exactly, e.g. 2,10^4,10^40004")
    p.add_argument("--q-list", type=_int_list, required=True)
    p.add_argument("--c-list", type=_float_list, required=True)
    p.add_argument("--inequality-trials", type=int, default=0)

    p = add("js-check", cmd_js, "reflection-symmetry defects of the potential")
    coupling(p)
    p.add_argument("--m-list", type=_int_list, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", type=float, default=1e-3)

    p = add("duality", cmd_duality, "dual solutions, reducibility and the gap-edge probe")
    coupling(p)
    p.add_argument("--n", type=int, default=300, help="half-width M of the box [-M, M]")
    p.add_argument("--window", type=_window, default=(-8.0, 8.0))
    p.add_argument("--count", type=int, default=3, help="eigenpairs closest to the origin")
    p.add_argument("--dual-phase", type=_angle, default=0.0)
    p.add_argument("--probe-gap", action="store_true")
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--probe-qmax", type=int, default=89)

    p = add("verify", cmd_verify, "run the verification suite")
    p.add_argument("--profile", choices=("quick", "full"), default="quick")
    p.add_argument("--mutation", choices=MUTATIONS, default=None)
    p.add_argument("--strict", action="store_true", help="treat statistical misses as failures")
    return parser


def _glue_negative_values(argv: list[str]) -> list[str]:
    """Turn ``--grid -3:3:7`` into ``--grid=-3:3:7`` so argparse does not read an option."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else ""
        if tok.startswith("--") and "=" not in tok and len(nxt) > 1 and nxt[0] == "-" \
                and (nxt[1].isdigit() or nxt[1] == "."):
            out.append(f"{tok}={nxt}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv: list[str] | None = None) -> int:
    argv = _glue_negative_values(list(sys.argv[1:] if argv is None else argv))
    t0 = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    args.argv, args.t0 = argv, t0
    if args.threads < 1 or not 0 <= args.seed < 2**64:
        print("error: need --threads >= 1 and a seed in [0, 2^64)", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "alpha_expr", None) is not None:
        try:
            args.alpha = float(as_real(args.alpha_expr)[0])
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    try:
        code = args.func(args)
    except (InvariantFailure, AssertionError, DecompositionError, jsonschema.ValidationError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (UsageError, ValueError, PreconditionError, FitRefused, SingularRestrictionError,
            SmallDivisorError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
