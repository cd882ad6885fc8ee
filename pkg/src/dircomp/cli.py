"""Command-line front end: ``dircomp <command> [options]``.

Every artifact carries a header with the tool version, a hash of the
resolved configuration and the seed.  CSV files get ``#`` comment lines,
JSON documents a ``meta`` key, binary matrices a ``.meta.json`` sidecar.

Exit codes: 0 success, 1 bad input, 2 certification failure,
3 numeric-certification error (root isolation exhausted, matrix tail too heavy).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import struct
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .core import Character, DirichletPolynomial, Space
from .counting import (
    DEFAULT_TOL,
    DEFAULT_TTRUNC,
    AdaptiveBoundFailure,
    BoundaryHit,
    estimate_bound_constant,
    mean_counting,
    nevanlinna_full,
    restricted_counting,
    weighted_counting,
    default_bound_chars,
)
from .littlewood_paley import MeasureSpec, QuadratureParams, change_of_variables_check, lp_norm_closed, lp_norm_mc
from .operator import ROW_CAP, TAIL_REL, ReportParams, TailNotNegligible, assemble_matrix, compactness_report, singular_values
from .symbols import Symbol, certify_class, load_symbol

log = logging.getLogger("dircomp")

WORKERS_ENV = "DIRCOMP_WORKERS"
EXIT_OK, EXIT_INPUT, EXIT_CERT, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("eval", "certify", "count", "bounds", "lp-verify", "cov-check", "matrix", "singvals", "report")
# options that do not change results and are left out of the config hash
_UNHASHED = {"output", "workers", "config", "log_level", "func", "command"}


class InputError(Exception):
    pass


class CertificationFailure(Exception):
    pass


# ------------------------------------------------------------------ corpus


def corpus() -> list[Path]:
    """Bundled symbol files, sorted by name."""
    root = resources.files("dircomp") / "corpus"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".json") and p.name != "fixtures.json")


def corpus_fixtures() -> dict:
    return json.loads((resources.files("dircomp") / "corpus" / "fixtures.json").read_text())


def resolve_symbol_path(ref: str) -> Path:
    """A file path, or ``corpus:NAME`` for a bundled symbol."""
    if ref.startswith("corpus:"):
        name = ref.split(":", 1)[1]
        for p in corpus():
            if p.stem == name:
                return p
        raise InputError(f"no corpus symbol named {name!r}; have {[p.stem for p in corpus()]}")
    path = Path(ref)
    if not path.is_file():
        raise InputError(f"symbol file not found: {ref}")
    return path


# ------------------------------------------------------------------ workers


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InputError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def _pmap(fn, tasks, workers):
    """Ordered map; the result does not depend on the worker count."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) < 4:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


# ------------------------------------------------------------------ outputs


def config_hash(args: argparse.Namespace, extra: dict | None = None) -> str:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in _UNHASHED}
    cfg.update(extra or {})
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _meta(args) -> dict:
    return {"tool": "dircomp", "version": __version__, "command": args.command,
            "config_hash": args._hash, "seed": args.seed}


def _open_text(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def write_csv(args, header: list[str], rows) -> None:
    buf = io.StringIO(newline="")
    m = _meta(args)
    buf.write(f"# dircomp {m['version']} command={m['command']} config_hash={m['config_hash']} seed={m['seed']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    out, close = _open_text(args.output)
    out.write(buf.getvalue())
    if close:
        out.close()


def write_json(args, obj: dict) -> None:
    doc = {"meta": _meta(args), **obj}
    out, close = _open_text(args.output)
    out.write(json.dumps(doc, indent=2, sort_keys=False, allow_nan=True) + "\n")
    if close:
        out.close()


def write_binary_matrix(args, mx) -> None:
    """``DCMX`` u32 M, u32 N, u32 flags; u64 row indices; M*N complex128, row-major, little-endian.

    flags bit 0 marks the presence of the row-index table.
    """
    rows = [int(m) for m in mx.rows]
    if rows and rows[-1] >= 2**64:
        raise InputError("row index does not fit in u64; use --format csv")
    M, N = mx.entries.shape
    with open(args.output, "wb") as fh:
        fh.write(b"DCMX" + struct.pack("<III", M, N, 1))
        fh.write(np.asarray(rows, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(mx.entries, dtype="<c16").tobytes())
    meta = {**_meta(args), "rows": M, "columns": N, "space": str(mx.space),
            "layout": "magic DCMX, u32 M, u32 N, u32 flags, u64[M] row indices, complex128[M][N] row-major"}
    Path(str(args.output) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def read_binary_matrix(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of the binary writer: (row indices, entries)."""
    data = Path(path).read_bytes()
    if data[:4] != b"DCMX":
        raise ValueError("not a DCMX file")
    M, N, flags = struct.unpack("<III", data[4:16])
    off = 16
    rows = None
    if flags & 1:
        rows = np.frombuffer(data, dtype="<u8", count=M, offset=off)
        off += 8 * M
    A = np.frombuffer(data, dtype="<c16", count=M * N, offset=off).reshape(M, N)
    return rows, A


# ------------------------------------------------------------------ parsing helpers


def _grid(args) -> list[complex]:
    sig = _axis(args.sigma, args.sigma_range, "sigma")
    ts = _axis(args.t, args.t_range, "t")
    return [complex(s, t) for s in sig for t in ts]


def _axis(values, rng, name):
    if values and rng:
        raise InputError(f"give either --{name} or --{name}-range")
    if rng:
        lo, hi, n = rng
        if int(n) < 1:
            raise InputError(f"--{name}-range needs a positive count")
        return [float(x) for x in np.linspace(float(lo), float(hi), int(n))]
    if values:
        return [float(x) for x in values]
    raise InputError(f"missing --{name} or --{name}-range")


def _poly_arg(text: str) -> DirichletPolynomial:
    """Inline JSON object, or a path to one."""
    if text is None:
        raise InputError("missing --f")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        p = Path(text)
        if not p.is_file():
            raise InputError(f"--f is neither JSON nor a file: {text}") from None
        obj = json.loads(p.read_text())
    if isinstance(obj, dict) and "coeffs" in obj:
        obj = obj["coeffs"]
    return DirichletPolynomial.from_json_obj(obj)


def _char_arg(text: str | None) -> Character | None:
    if not text:
        return None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        p = Path(text)
        if not p.is_file():
            raise InputError(f"--chi is neither JSON nor a file: {text}") from None
        obj = json.loads(p.read_text())
    return Character.from_json_obj(obj)


def _measure_arg(text: str) -> MeasureSpec:
    kind, _, rest = text.partition(":")
    if kind == "uniform_window":
        try:
            a, b = (float(x) for x in rest.split(","))
        except ValueError:
            raise InputError("uniform_window needs 'uniform_window:a,b'") from None
        return MeasureSpec.uniform_window(a, b)
    if kind == "half_indicator":
        return MeasureSpec.half_indicator()
    if kind == "cauchy_like":
        return MeasureSpec.cauchy_like()
    raise InputError(f"unknown measure {text!r}")


def _space_arg(text: str) -> Space:
    try:
        return Space.parse(text)
    except ValueError as err:
        raise InputError(str(err)) from None


def _load(args) -> Symbol:
    path = resolve_symbol_path(args.symbol)
    phi = load_symbol(path, certify=True, t_range=args.cert_horizon, samples=args.cert_samples)
    cert = phi.certification
    if cert.overridden:
        log.warning("symbol %s: class membership assumed by override", phi.name)
    elif cert.verdict != "certified":
        raise CertificationFailure(
            f"symbol {phi.name}: class check {cert.verdict} (min Re psi {cert.min_real_part:.6g} "
            f"at t={cert.attained_at.imag:.6g}, threshold {cert.threshold})")
    return phi


# ------------------------------------------------------------------ commands


def cmd_eval(args) -> int:
    phi = _load(args)
    pts = _grid(args)
    vals = phi(np.array(pts))
    write_csv(args, ["s_re", "s_im", "phi_re", "phi_im"],
              ((s.real, s.imag, v.real, v.imag) for s, v in zip(pts, vals)))
    return EXIT_OK


def cmd_certify(args) -> int:
    path = resolve_symbol_path(args.symbol)
    phi = load_symbol(path, certify=False)
    rep = certify_class(phi.c0, phi.psi, args.cert_horizon, args.cert_samples)
    write_json(args, {"symbol": phi.to_json_obj(), "class": phi.class_tag, "certification": rep.to_json_obj()})
    if rep.verdict != "certified":
        print(f"class check {rep.verdict}: min Re psi {rep.min_real_part:.6g} vs threshold {rep.threshold}",
              file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


def _count_one(task):
    phi, w, kind, p = task
    if kind == "full":
        return nevanlinna_full(phi, w, p["t_trunc"], p["tol"])
    if kind == "restricted":
        return restricted_counting(phi, w, p["tol"])
    if kind == "weighted":
        return weighted_counting(phi, w, p["alpha"], p["tol"])
    return mean_counting(phi, p["sigma0"], p["T"], w, p["alpha"], p["tol"])


def cmd_count(args) -> int:
    phi = _load(args)
    grid = _grid(args)
    if args.kind == "mean" and (args.sigma0 is None or args.T is None):
        raise InputError("--kind mean needs --sigma0 and --T")
    if args.kind in ("weighted", "mean") and args.alpha is None:
        raise InputError(f"--kind {args.kind} needs --alpha")
    p = {"t_trunc": args.t_trunc, "tol": args.tol, "alpha": args.alpha, "sigma0": args.sigma0, "T": args.T}
    res = _pmap(_count_one, [(phi, w, args.kind, p) for w in grid], args.workers)
    write_csv(args, ["w_re", "w_im", "value", "kind", "diagnostics"],
              ((r.w.real, r.w.imag, r.value, r.kind, r.diagnostics()) for r in res))
    return EXIT_OK


def _bound_one(task):
    phi, grid, chi, tol = task
    return estimate_bound_constant(phi, grid, [chi], tol)


def cmd_bounds(args) -> int:
    phi = _load(args)
    grid = _grid(args)
    out = []
    for n in args.chars:
        chars = default_bound_chars(phi, n)
        vals = _pmap(_bound_one, [(phi, grid, c, args.tol) for c in chars], args.workers)
        out.append({"characters": n, "constant": max(vals)})
    drift = [abs(b["constant"] - a["constant"]) / a["constant"] if a["constant"] > 0 else 0.0
             for a, b in zip(out, out[1:])]
    write_json(args, {"symbol": phi.to_json_obj(), "grid_size": len(grid), "estimates": out,
                      "relative_drift": drift})
    return EXIT_OK


def _quad(args) -> QuadratureParams:
    return QuadratureParams(sigma_nodes=args.sigma_nodes, t_nodes=args.t_nodes, chi_samples=args.chi_samples,
                            shifts=args.shifts, seed=args.seed, refine=args.refine)


def cmd_lp_verify(args) -> int:
    f = _poly_arg(args.f)
    space = _space_arg(args.space)
    closed = lp_norm_closed(f, space)
    mc = lp_norm_mc(f, space, _measure_arg(args.measure), _quad(args))
    gap = abs(mc.value - closed)
    write_json(args, {"f": f.to_json_obj(), "space": str(space), "closed": closed, "mc": mc.value,
                      "error_estimate": mc.error, "gap": gap,
                      "within_3_sigma": bool(gap <= 3 * mc.error), "details": mc.to_json_obj()})
    return EXIT_OK


def cmd_cov_check(args) -> int:
    phi = _load(args)
    f = _poly_arg(args.f)
    rep = change_of_variables_check(f, phi, _char_arg(args.chi), _quad(args), args.tol)
    write_json(args, {"symbol": phi.to_json_obj(), "f": f.to_json_obj(), "report": rep.to_json_obj()})
    return EXIT_OK


def cmd_matrix(args) -> int:
    phi = _load(args)
    mx = assemble_matrix(phi, args.N, _space_arg(args.space), args.tail_rel, args.row_cap)
    if args.format == "binary":
        write_binary_matrix(args, mx)
        return EXIT_OK
    if args.format == "json":
        write_json(args, {"rows": [int(m) for m in mx.rows], "N": mx.N, "space": str(mx.space),
                          "re": mx.entries.real.tolist(), "im": mx.entries.imag.tolist()})
        return EXIT_OK
    rows = []
    for i, m in enumerate(mx.rows):
        for j in np.flatnonzero(mx.entries[i]):
            z = mx.entries[i, j]
            rows.append((int(m), int(j) + 1, float(z.real), float(z.imag)))
    write_csv(args, ["row", "col", "re", "im"], rows)
    return EXIT_OK


def cmd_singvals(args) -> int:
    phi = _load(args)
    sv = singular_values(assemble_matrix(phi, args.N, _space_arg(args.space), args.tail_rel, args.row_cap))
    k = len(sv) if args.k is None else min(args.k, len(sv))
    write_csv(args, ["k", "singular_value"], ((i + 1, float(sv[i])) for i in range(k)))
    return EXIT_OK


def cmd_report(args) -> int:
    phi = _load(args)
    params = ReportParams(spaces=tuple(_space_arg(s) for s in args.spaces), Ns=tuple(args.Ns),
                          ks=tuple(args.ks))
    if any(b <= a for a, b in zip(params.Ns, params.Ns[1:])) or len(params.Ns) < 2:
        raise InputError("--Ns needs at least two increasing sizes")
    rep = compactness_report(phi, params)
    write_json(args, rep.to_json_obj())
    return EXIT_OK


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with other input errors; 2 is reserved
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML file; top-level keys and a [command] table set option defaults")
    common.add_argument("-o", "--output", default="-", help="output path ('-' for stdout)")
    common.add_argument("--seed", type=int, default=0, help="random seed (recorded in every output)")
    common.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default: ${WORKERS_ENV} or CPU count)")
    common.add_argument("--log-level", default="WARNING", help="logging level on stderr")
    common.add_argument("--cert-horizon", type=float, default=1e3, help="half-width of the certification t grid")
    common.add_argument("--cert-samples", type=int, default=10**6, help="certification grid size")

    grid = _Parser(add_help=False)
    grid.add_argument("--sigma", type=float, nargs="+", help="real parts of the grid")
    grid.add_argument("--t", type=float, nargs="+", help="imaginary parts of the grid")
    grid.add_argument("--sigma-range", type=float, nargs=3, metavar=("LO", "HI", "N"), help="linspace of real parts")
    grid.add_argument("--t-range", type=float, nargs=3, metavar=("LO", "HI", "N"), help="linspace of imaginary parts")

    quad = _Parser(add_help=False)
    quad.add_argument("--sigma-nodes", type=int, default=8, help="Gauss-Legendre nodes per sigma panel")
    quad.add_argument("--t-nodes", type=int, default=8, help="Gauss-Legendre nodes per t panel")
    quad.add_argument("--chi-samples", type=int, default=64, help="lattice characters per shift")
    quad.add_argument("--shifts", type=int, default=8, help="random lattice shifts")
    quad.add_argument("--refine", type=int, default=0, help="panel halvings of the base rule")

    tol = _Parser(add_help=False)
    tol.add_argument("--tol", type=float, default=DEFAULT_TOL, help="root-isolation tolerance")

    mat = _Parser(add_help=False)
    mat.add_argument("-N", type=int, default=64, help="number of basis columns")
    mat.add_argument("--space", default="hardy", help="'hardy' or 'bergman(alpha)'")
    mat.add_argument("--tail-rel", type=float, default=TAIL_REL, help="relative mass allowed beyond the row cutoff")
    mat.add_argument("--row-cap", type=int, default=ROW_CAP, help="largest number of rows before giving up (exit 3)")

    parser = _Parser(prog="dircomp", description="Composition operators with Dirichlet polynomial symbols.")
    parser.add_argument("--version", action="version", version=f"dircomp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    def add(name, func, parents, help_, symbol=True):
        p = sub.add_parser(name, parents=[common, *parents], help=help_, description=help_)
        if symbol:
            p.add_argument("symbol", help="symbol file (JSON/TOML) or corpus:NAME")
        p.set_defaults(func=func)
        subs[name] = p
        return p

    add("eval", cmd_eval, [grid], "evaluate the symbol on a grid (CSV)")
    add("certify", cmd_certify, [], "check class membership (JSON; exit 2 if not certified)")
    p = add("count", cmd_count, [grid, tol], "counting function on a w grid (CSV)")
    p.add_argument("--kind", choices=("full", "restricted", "weighted", "mean"), default="restricted")
    p.add_argument("--alpha", type=float, help="weight exponent for weighted/mean kinds")
    p.add_argument("--sigma0", type=float, help="lower real-part cut for the mean kind")
    p.add_argument("--T", type=float, help="height for the mean kind")
    p.add_argument("--t-trunc", type=float, default=DEFAULT_TTRUNC, help="height truncation for the full kind")
    p = add("bounds", cmd_bounds, [grid, tol], "restricted-bound constant over lattice characters (JSON)")
    p.add_argument("--chars", type=int, nargs="+", default=[64], help="character counts to compare")
    p = add("lp-verify", cmd_lp_verify, [quad], "closed form vs quadrature Littlewood-Paley norm (JSON)",
            symbol=False)
    p.add_argument("--f", required=True, help="polynomial as JSON {\"n\": [re, im]} or a file")
    p.add_argument("--space", default="hardy", help="'hardy' or 'bergman(alpha)'")
    p.add_argument("--measure", default="half_indicator",
                   help="half_indicator | cauchy_like | uniform_window:a,b")
    p = add("cov-check", cmd_cov_check, [quad, tol], "two sides of the change of variables (JSON)")
    p.add_argument("--f", required=True, help="polynomial as JSON or a file")
    p.add_argument("--chi", help="character as JSON {prime: angle} or a file")
    p = add("matrix", cmd_matrix, [mat], "truncated operator matrix (CSV, JSON or binary)")
    p.add_argument("--format", choices=("csv", "json", "binary"), default="csv")
    p = add("singvals", cmd_singvals, [mat], "singular values of the truncated matrix (CSV)")
    p.add_argument("-k", type=int, default=None, help="number of values to emit")
    p = add("report", cmd_report, [], "compactness report (JSON)")
    p.add_argument("--spaces", nargs="+", default=["hardy", "bergman(0)"])
    p.add_argument("--Ns", type=int, nargs="+", default=[64, 128, 256, 512])
    p.add_argument("--ks", type=int, nargs="+", default=[5, 10, 20])
    return parser, subs


def _config_defaults(path: str, command: str, sub: argparse.ArgumentParser) -> dict:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file not found: {path}")
    cfg = tomli.loads(p.read_text())
    known = {a.dest for a in sub._actions}
    merged = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    merged.update(cfg.get(command, {}))
    out = {}
    for k, v in merged.items():
        dest = k.replace("-", "_")
        if dest not in known:
            raise InputError(f"unknown config key {k!r} for {command}")
        out[dest] = v
    return out


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = subs[args.command]
        sub.set_defaults(**_config_defaults(args.config, args.command, sub))
        args = parser.parse_args(argv)
    if args.workers is None:
        args.workers = default_workers()
    return args


def _validate_paths(args) -> dict:
    """Check every path before computing; returns content digests for the config hash."""
    extra = {}
    if getattr(args, "symbol", None):
        sp = resolve_symbol_path(args.symbol)
        extra["symbol_sha256"] = hashlib.sha256(sp.read_bytes()).hexdigest()
    if args.output not in (None, "-"):
        parent = Path(args.output).resolve().parent
        if not parent.is_dir():
            raise InputError(f"output directory does not exist: {parent}")
    elif getattr(args, "format", None) == "binary":
        raise InputError("binary output needs --output PATH")
    if args.config:
        extra["config_sha256"] = hashlib.sha256(Path(args.config).read_bytes()).hexdigest()
    return extra


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except InputError as err:
        print(f"dircomp: {err}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as ex:  # --help, --version and usage errors
        return int(ex.code or 0)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    pkg_log = logging.getLogger("dircomp")
    pkg_log.addHandler(handler)
    pkg_log.setLevel(getattr(logging, str(args.log_level).upper(), logging.WARNING))
    try:
        args._hash = config_hash(args, _validate_paths(args))
        return args.func(args)
    except InputError as err:
        print(f"dircomp: {err}", file=sys.stderr)
        return EXIT_INPUT
    except CertificationFailure as err:
        print(f"dircomp: {err}", file=sys.stderr)
        return EXIT_CERT
    except (BoundaryHit, AdaptiveBoundFailure, TailNotNegligible) as err:
        print(f"dircomp: numeric certification failed: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, json.JSONDecodeError, tomli.TOMLDecodeError) as err:
        print(f"dircomp: {err}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        pkg_log.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
