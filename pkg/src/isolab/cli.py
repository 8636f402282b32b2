"""Command-line front end.

Exit codes: 0 all checks passed, 1 a check exceeded its threshold,
2 bad input or arguments, 3 numerical failure (stage named on stderr).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import errors
from .fuchsian import (
    FuchsianSystem,
    diagonal_exponents,
    exponents,
    fuchs_defect,
    load_system,
    matrix_to_json,
    validate,
)
from .numerics import DEFAULT_ATOL, DEFAULT_RTOL, ZPath

EXIT_OK, EXIT_CHECK, EXIT_PARSE, EXIT_NUMERIC = 0, 1, 2, 3
FUCHS_RTOL = 1e-10


class ParseError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


def parse_complex(text: str) -> complex:
    """'re:im' or a plain real number."""
    text = text.strip()
    try:
        if ":" in text:
            re_, im_ = text.split(":")
            return complex(float(re_), float(im_))
        return complex(float(text), 0.0)
    except ValueError as exc:
        raise ParseError(f"cannot read complex number {text!r} (use re:im)") from exc


def parse_vector(text: str) -> np.ndarray:
    return np.array([parse_complex(x) for x in text.split(",") if x.strip()], dtype=complex)


def parse_path(text: str) -> np.ndarray:
    """'a11,a12;a21,a22;...' -> (waypoints, n) array."""
    rows = [parse_vector(w) for w in text.split(";") if w.strip()]
    if not rows:
        raise ParseError("empty --path")
    if len({len(r) for r in rows}) != 1:
        raise ParseError("all --path waypoints need the same number of poles")
    return np.array(rows)


def _pair(z):
    z = complex(z)
    return [z.real, z.imag]


def _vec_json(v):
    return [_pair(z) for z in np.asarray(v).ravel()]


def _vec_from_json(x):
    try:
        return np.array([complex(float(e[0]), float(e[1])) if isinstance(e, (list, tuple))
                         else complex(float(e)) for e in x], dtype=complex)
    except (TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"bad complex vector {x!r}") from exc


def bundled_system() -> FuchsianSystem:
    from .verify import bundled_example

    return bundled_example()


def _load_system(args) -> FuchsianSystem:
    if args.input in (None, "bundled"):
        return bundled_system()
    try:
        return load_system(args.input)
    except FileNotFoundError as exc:
        raise ParseError(f"input file not found: {args.input}") from exc
    except (ValueError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot parse {args.input}: {exc}") from exc


def _config_path(args, start) -> ZPath:
    if not args.path:
        raise ParseError("--path is required")
    pts = parse_path(args.path)
    start = np.asarray(start, dtype=complex)
    if pts.shape[1] != start.shape[0]:
        raise ParseError(f"--path waypoints have {pts.shape[1]} poles, the system has {start.shape[0]}")
    if np.max(np.abs(pts[0] - start)) > 1e-12:
        pts = np.vstack([start, pts])
    try:
        return ZPath(pts)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def emit(args, name: str, text: str):
    if args.out:
        _atomic_write(Path(args.out) / name, text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _f(x) -> str:
    return repr(float(x))


def trace_csv(trace, footer: dict) -> str:
    """Columns s, Re/Im a_i, Re/Im B_i[r,c], Re/Im ln tau; JSON footer line starting with '#'."""
    n, p = trace.B.shape[1], trace.B.shape[2]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["s"]
    for i in range(n):
        head += [f"re_a{i}", f"im_a{i}"]
    for i in range(n):
        for r in range(p):
            for c in range(p):
                head += [f"re_B{i}_{r}{c}", f"im_B{i}_{r}{c}"]
    head += ["re_lntau", "im_lntau"]
    w.writerow(head)
    for k, s in enumerate(trace.s):
        row = [_f(s)]
        for z in trace.a[k]:
            row += [_f(z.real), _f(z.imag)]
        for z in trace.B[k].ravel():
            row += [_f(z.real), _f(z.imag)]
        row += [_f(trace.tau[k].real), _f(trace.tau[k].imag)]
        w.writerow(row)
    buf.write("# " + json.dumps(footer) + "\n")
    return buf.getvalue()


def vector_trace_csv(s, columns: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["s"]
    for name, arr in columns.items():
        for i in range(arr.shape[1]):
            head += [f"re_{name}{i}", f"im_{name}{i}"]
    w.writerow(head)
    for k, t in enumerate(s):
        row = [_f(t)]
        for arr in columns.values():
            for z in arr[k]:
                row += [_f(z.real), _f(z.imag)]
        w.writerow(row)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    sysm = _load_system(args)
    rep = validate(sysm)
    table = exponents(sysm)
    fd = abs(fuchs_defect(table))
    tol = FUCHS_RTOL * sysm.scale()
    out = rep.to_dict()
    out["exponents"] = [_vec_json(r) for r in table.rows]
    out["fuchs_relation"] = {"value": fd, "tolerance": tol, "passed": bool(fd < tol)}
    emit(args, "validate.json", _dumps(out))
    return EXIT_OK if rep.ok and fd < tol else EXIT_CHECK


def cmd_monodromy(args) -> int:
    from .monodromy import compute_monodromy, default_base_point, fingerprint, local_exponent_check, standard_loops

    sysm = _load_system(args)
    if not validate(sysm).ok:
        raise NumericalFailure("validate", "system fails validation")
    z0 = parse_complex(args.z0) if args.z0 else default_base_point([sysm.poles])
    try:
        ms = compute_monodromy(sysm, standard_loops(sysm, z0), rtol=args.rtol, atol=args.atol)
    except errors.IsolabError as exc:
        raise NumericalFailure("monodromy", str(exc)) from exc
    check = local_exponent_check(sysm, ms)
    tol = 1e-6
    out = {
        "z0": _pair(ms.z0),
        "generators": [matrix_to_json(G) for G in ms.generators],
        "fingerprint": _vec_json(fingerprint(ms)),
        "local_exponent_check": {"value": check, "tolerance": tol, "passed": bool(check < tol)},
    }
    emit(args, "monodromy.json", _dumps(out))
    return EXIT_OK if check < tol else EXIT_CHECK


def cmd_deform(args) -> int:
    from .schlesinger import DeformationState, conservation_defect, deform

    sysm = _load_system(args)
    path = _config_path(args, sysm.poles)
    try:
        trace = deform(DeformationState.from_system(sysm), path, rtol=args.rtol, atol=args.atol,
                       nodes_per_segment=args.nodes)
    except errors.DiagonalApproachError as exc:
        raise NumericalFailure("deform", str(exc)) from exc
    cons = conservation_defect(trace)
    footer = {
        "blowup": trace.blowup,
        "message": trace.message,
        "tau_log": _pair(trace.tau_log),
        "conservation": {"value": cons, "tolerance": 1e-10, "passed": bool(cons < 1e-10)},
    }
    emit(args, "deform.csv", trace_csv(trace, footer))
    if trace.blowup:
        print(f"deform: {trace.message}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if cons < 1e-10 else EXIT_CHECK


def _blocks(args, p):
    from .reducibility import BlockStructure

    if not args.blocks:
        return BlockStructure.full_flag(p)
    try:
        return BlockStructure(tuple(int(x) for x in args.blocks.split(",")))
    except ValueError as exc:
        raise ParseError(f"bad --blocks {args.blocks!r}") from exc


def cmd_reduce(args) -> int:
    from .monodromy import block_residual, compute_monodromy, default_base_point, standard_loops
    from .reducibility import is_b_representation, monodromy_block_residual, theorem1_check, triangularize_residues

    sysm = _load_system(args)
    blocks = _blocks(args, sysm.p)
    if blocks.p != sysm.p:
        raise ParseError(f"--blocks sum to {blocks.p}, system has p={sysm.p}")
    out = {"blocks": list(blocks.sizes)}
    if blocks.sizes[-1] != sysm.p:
        out["theorem1"] = theorem1_check(exponents(sysm), blocks).to_dict()
    try:
        ms = compute_monodromy(sysm, standard_loops(sysm, default_base_point([sysm.poles])), rtol=args.rtol)
    except errors.IsolabError as exc:
        raise NumericalFailure("monodromy", str(exc)) from exc
    out["b_representation"] = bool(is_b_representation(ms))
    C = triangularize_residues(sysm, blocks)
    status = EXIT_OK
    if C is None:
        out["C"] = None
    else:
        conj = sysm.conjugated(C)
        res = block_residual(list(conj.residues), blocks.dims) / sysm.scale()
        mres = monodromy_block_residual(conj, blocks, rtol=args.rtol)
        out["C"] = [_vec_json(row) for row in C]
        out["residue_residual"] = {"value": res, "tolerance": 1e-8, "passed": bool(res < 1e-8)}
        out["monodromy_residual"] = {"value": mres, "tolerance": 1e-6, "passed": bool(mres < 1e-6)}
        if res >= 1e-8 or mres >= 1e-6:
            status = EXIT_CHECK
    emit(args, "reduce.json", _dumps(out))
    return status


def _read_json_input(args):
    if not args.input:
        return {}
    try:
        return json.loads(Path(args.input).read_text())
    except FileNotFoundError as exc:
        raise ParseError(f"input file not found: {args.input}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"cannot parse {args.input}: {exc}") from exc


def cmd_jp(args) -> int:
    """Input JSON: {"poles": [...], "beta": [...], "b0": [...]} or, for p=3,
    {"poles", "exponents": [[b1, b2, b3], ...], "u", "v", "b"}; complex values as [re, im]."""
    from .jordan_pochhammer import JPForm, Triangular3Data, jp_integrate, p3_solve

    data = _read_json_input(args)
    if args.beta:
        data["beta"] = [_pair(z) for z in parse_vector(args.beta)]
    if args.poles:
        data["poles"] = [_pair(z) for z in parse_vector(args.poles)]
    if "poles" not in data:
        raise ParseError("jp needs poles (input file or --poles)")
    a = _vec_from_json(data["poles"])
    path = _config_path(args, a)
    try:
        if "exponents" in data:
            rows = np.array([_vec_from_json(r) for r in data["exponents"]])
            d = Triangular3Data(rows, _vec_from_json(data["u"]), _vec_from_json(data["v"]), _vec_from_json(data["b"]))
            tr = p3_solve(d, path, rtol=args.rtol, atol=args.atol)
            text = vector_trace_csv(tr.s, {"u": tr.u, "v": tr.v, "b": tr.b})
        else:
            if "beta" not in data:
                raise ParseError("jp needs beta")
            beta = _vec_from_json(data["beta"])
            b0 = _vec_from_json(data["b0"]) if "b0" in data else beta
            tr = jp_integrate(JPForm(beta), path, b0, rtol=args.rtol, atol=args.atol)
            text = vector_trace_csv(tr.s, {"b": tr.b})
    except (KeyError, errors.ShapeError) as exc:
        raise ParseError(f"bad jp input: {exc}") from exc
    except errors.DiagonalApproachError as exc:
        raise NumericalFailure("jp", str(exc)) from exc
    emit(args, "jp.csv", text)
    return EXIT_OK


def cmd_hyper(args) -> int:
    from .hyperint import MasterFunctionSpec, TwistedSegment, jp_integral_table, verify_jp_solution

    if not args.beta or not args.poles:
        raise ParseError("hyper needs --beta and --poles")
    spec = MasterFunctionSpec(parse_vector(args.poles), parse_vector(args.beta))
    j, k = args.segment
    try:
        seg = TwistedSegment(j, k)
        res = jp_integral_table(spec, seg, n_max=args.nodes)
        check = verify_jp_solution(spec, seg, h=args.h)
    except (ValueError, IndexError) as exc:
        if isinstance(exc, errors.DivergentCycleError):
            raise NumericalFailure("hyper", str(exc)) from exc
        raise ParseError(str(exc)) from exc
    except errors.PoleProximityError as exc:
        raise NumericalFailure("hyper", str(exc)) from exc
    conv_tol = 1e-9
    out = {
        "b": _vec_json(res.b),
        "nodes": res.nodes,
        "convergence": {"value": res.rel_change, "tolerance": conv_tol, "passed": bool(res.rel_change < conv_tol)},
        "residual": {"value": check.residual, "h": check.h, "tolerance": 1e-4, "passed": bool(check.residual < 1e-4)},
        "slope": {"value": check.slope if check.slope_applicable else None, "target": 2.0, "tolerance": 0.2,
                  "applicable": check.slope_applicable,
                  "passed": bool(not check.slope_applicable or abs(check.slope - 2.0) <= 0.2)},
    }
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["nodes"] + [f"{part}_b{i}" for i in range(spec.n) for part in ("re", "im")])
    for m, b in res.table:
        w.writerow([m] + [_f(x) for z in b for x in (z.real, z.imag)])
    emit(args, "hyper.json", _dumps(out))
    if args.out:
        _atomic_write(Path(args.out) / "hyper_convergence.csv", buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    ok = out["convergence"]["passed"] and out["residual"]["passed"] and out["slope"]["passed"]
    return EXIT_OK if ok else EXIT_CHECK


def cmd_tau(args) -> int:
    from .schlesinger import DeformationState, deform, tau_log_increment, triangular_tau_closed_form

    sysm = _load_system(args)
    path = _config_path(args, sysm.poles)
    try:
        trace = deform(DeformationState.from_system(sysm), path, rtol=args.rtol, atol=args.atol,
                       nodes_per_segment=args.nodes)
    except errors.DiagonalApproachError as exc:
        raise NumericalFailure("deform", str(exc)) from exc
    if trace.blowup:
        raise NumericalFailure("deform", trace.message)
    miwa = tau_log_increment(trace)
    ode = trace.tau_log
    tol = 1e-8
    gap = abs(miwa - ode) / max(1.0, abs(miwa))
    out = {"miwa": _pair(miwa), "accumulated": _pair(ode),
           "quadrature_vs_accumulated": {"value": gap, "tolerance": tol, "passed": bool(gap < tol)}}
    ok = gap < tol
    sub = max(np.max(np.abs(np.tril(B, -1))) for B in sysm.residues) if sysm.p > 1 else 0.0
    if sub == 0.0:
        closed = triangular_tau_closed_form(diagonal_exponents(sysm), path)
        d = abs(miwa - closed) / max(1.0, abs(closed))
        out["closed_form"] = _pair(closed)
        out["miwa_vs_closed_form"] = {"value": d, "tolerance": tol, "passed": bool(d < tol)}
        ok = ok and d < tol
    emit(args, "tau.json", _dumps(out))
    return EXIT_OK if ok else EXIT_CHECK


def cmd_verify_all(args) -> int:
    from .verify import verify_all

    only = None
    if args.only:
        only = {int(x) for x in args.only.split(",")}
    report, results = verify_all(seed=args.seed, only=only)
    for r in results:
        print(r.summary_line(), file=sys.stderr)
    emit(args, "verify_all.json", _dumps(report))
    return EXIT_OK if report["passed"] else EXIT_CHECK


COMMANDS = {
    "validate": cmd_validate,
    "monodromy": cmd_monodromy,
    "deform": cmd_deform,
    "reduce": cmd_reduce,
    "jp": cmd_jp,
    "hyper": cmd_hyper,
    "tau": cmd_tau,
    "verify-all": cmd_verify_all,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="system or experiment JSON file ('bundled' for the shipped example)")
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("--rtol", type=float, default=DEFAULT_RTOL)
    common.add_argument("--atol", type=float, default=DEFAULT_ATOL)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--path", help="configuration waypoints 'a11,a12;a21,a22;...' with entries re:im")

    parser = _Parser(prog="isolab", description="Isomonodromic deformation toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("validate", parents=[common], help="check a system file")
    p = sub.add_parser("monodromy", parents=[common], help="monodromy generators")
    p.add_argument("--z0", help="base point re:im")
    p = sub.add_parser("deform", parents=[common], help="Schlesinger deformation trace (CSV)")
    p.add_argument("--nodes", type=int, default=32, help="samples per path segment")
    p = sub.add_parser("reduce", parents=[common], help="reducibility verdicts and gauge C")
    p.add_argument("--blocks", help="block sizes, e.g. 1,1")
    p = sub.add_parser("jp", parents=[common], help="Jordan-Pochhammer trace (CSV)")
    p.add_argument("--beta")
    p.add_argument("--poles")
    p = sub.add_parser("hyper", parents=[common], help="hypergeometric integral over a segment")
    p.add_argument("--beta")
    p.add_argument("--poles")
    p.add_argument("--segment", nargs=2, type=int, default=(0, 1), metavar=("J", "K"))
    p.add_argument("--nodes", type=int, default=1024, help="largest quadrature rule")
    p.add_argument("--h", type=float, default=1e-4, help="finite-difference step")
    p = sub.add_parser("tau", parents=[common], help="tau-function increment along a path")
    p.add_argument("--nodes", type=int, default=32)
    p = sub.add_parser("verify-all", parents=[common], help="run the acceptance suite")
    p.add_argument("--only", help="comma-separated criterion numbers")
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        for name in ("rtol", "atol"):
            if getattr(args, name) <= 0:
                raise ParseError(f"--{name} must be positive")
        return COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NumericalFailure as exc:
        print(f"numerical failure in {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except errors.IsolabError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
