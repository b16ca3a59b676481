"""Command-line front end: ``occmix fit | test | simulate | study``.

Input data come in two CSV layouts, told apart by the header:

* detection matrix: one row per site, ``0``/``1`` per visit, optional header;
* counts: header ``y,count`` then one row for each ``y = 0..T``.

Blank lines and lines starting with ``#`` are ignored.  A headerless file
whose entries are not all 0/1 is ambiguous and needs ``--format``.

Study configuration is a key-value file, one ``key = value`` per line::

    # Figure-style grid at desk scale
    mu = 1
    r = 0.25
    c = 0, 0.25, 0.5, 0.75, 1
    psi = none          # or a list of occupancy values
    n = 500
    T = 7
    models = nmix, ncmix, zinc[c=0.5]
    replicates = 200
    level = 0.95

``mu``, ``r``, ``c``, ``psi``, ``n`` and ``T`` accept comma-separated lists
and the grid is their Cartesian product.  ``mu``, ``r``, ``c``, ``n``, ``T``
and ``models`` are required.  Errors are reported with their line number.

Exit codes: 0 success, 2 usage or parse error, 3 degenerate data (no
detections), 4 no model converged.
"""

from __future__ import annotations

import argparse
import io
import itertools
import json
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from occmix.errors import DegenerateData, DomainError, NonConvergence, NotNested
from occmix.estimation import Family, FitResult, ModelSpec, OptimOptions, fit
from occmix.inference import bootstrap_pvalue, wald_ci
from occmix.model import DetectionMatrix, ModelParams, SurveyCounts
from occmix.simulate import GenConfig, StudyCell, generate, run_study

SCHEMA = "occmix/1"
DEFAULT_MODELS = ("nmix", "ncmix", "zib", "zin", "zinc")
DEFAULT_BOOT = 999

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_NO_CONVERGENCE = 4

_ALTERNATIVE = {"zib": "zinc", "zin": "zinc", "nmix": "ncmix", "zinc": "zinc", "ncmix": "ncmix"}
_MODEL_RE = re.compile(r"^\s*([A-Za-z_]+)\s*(?:\[(.*)\])?\s*$")


class InputError(Exception):
    """Malformed input file or argument; maps to exit code 2."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


# ---------------------------------------------------------------------------
# data input


def _data_lines(text: str) -> list[tuple[int, list[str]]]:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rows.append((lineno, [tok.strip() for tok in line.split(",")]))
    return rows


def _is_int(tok: str) -> bool:
    return re.fullmatch(r"[+-]?\d+", tok) is not None


def _parse_counts(rows, source) -> SurveyCounts:
    freq: dict[int, int] = {}
    for lineno, toks in rows:
        if len(toks) != 2 or not all(_is_int(t) for t in toks):
            raise InputError("expected a row 'y,count' of two integers", lineno, source)
        y, count = int(toks[0]), int(toks[1])
        if y < 0 or count < 0:
            raise InputError("y and count must be nonnegative", lineno, source)
        if y in freq:
            raise InputError(f"duplicate row for y = {y}", lineno, source)
        freq[y] = count
    if not freq:
        raise InputError("no count rows found", None, source)
    T = max(freq)
    missing = [y for y in range(T + 1) if y not in freq]
    if missing or T < 1:
        raise InputError(f"counts must cover y = 0..T; missing {missing or [1]}", None, source)
    m = [freq[y] for y in range(T + 1)]
    if sum(m) < 1:
        raise InputError("counts sum to zero", None, source)
    return SurveyCounts.from_frequencies(m)


def _parse_matrix(rows, source) -> SurveyCounts:
    width = None
    values = []
    for lineno, toks in rows:
        if width is None:
            width = len(toks)
        if len(toks) != width:
            raise InputError(f"row has {len(toks)} visits, expected {width}", lineno, source)
        if any(t not in ("0", "1") for t in toks):
            raise InputError("detection entries must be 0 or 1", lineno, source)
        values.append([int(t) for t in toks])
    if not values:
        raise InputError("no detection rows found", None, source)
    return DetectionMatrix(values).to_counts()


def parse_data(text: str, fmt: str | None = None, source: str | None = None) -> SurveyCounts:
    """Parse CSV text in matrix or counts layout into :class:`SurveyCounts`."""
    rows = _data_lines(text)
    if not rows:
        raise InputError("empty data file", None, source)
    first = rows[0][1]
    has_header = not all(_is_int(t) for t in first)
    header_is_counts = [t.lower() for t in first] == ["y", "count"]
    if fmt is None:
        if has_header:
            fmt = "counts" if header_is_counts else "matrix"
        elif all(t in ("0", "1") for _, toks in rows for t in toks):
            fmt = "matrix"
        else:
            raise InputError(
                "cannot tell matrix from counts layout; pass --format", rows[0][0], source
            )
    body = rows[1:] if has_header else rows
    if fmt == "counts":
        return _parse_counts(body, source)
    if fmt == "matrix":
        return _parse_matrix(body, source)
    raise InputError(f"unknown format {fmt!r}")


def read_data(path: str, fmt: str | None = None) -> SurveyCounts:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read data file: {exc.strerror}", None, path) from exc
    return parse_data(text, fmt, path)


def counts_csv(counts: SurveyCounts) -> str:
    lines = ["y,count"] + [f"{y},{m}" for y, m in enumerate(counts.m)]
    return "\n".join(lines) + "\n"


def matrix_csv(matrix: DetectionMatrix) -> str:
    header = ",".join(f"v{j + 1}" for j in range(matrix.n_visits))
    body = "\n".join(",".join(str(v) for v in row) for row in matrix.values.tolist())
    return header + "\n" + body + "\n"


def digest(counts: SurveyCounts) -> dict:
    """Dataset summary: ``n``, ``T``, frequencies and sample occupancy."""
    return {
        "n": counts.n_sites,
        "T": counts.n_visits,
        "m": list(counts.m),
        "sample_occupancy": counts.sample_occupancy,
    }


# ---------------------------------------------------------------------------
# model names


def _parse_fixed(text: str, where=None) -> dict[str, float]:
    fixed = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        name, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"expected NAME=VALUE, got {item!r}", *(where or ()))
        try:
            fixed[name.strip()] = float(value)
        except ValueError:
            raise InputError(f"bad value in {item!r}", *(where or ())) from None
    return fixed


def parse_model(text: str, extra_fixed: dict[str, float] | None = None, where=None) -> ModelSpec:
    """Parse ``name`` or ``name[c=0.5]`` into a :class:`ModelSpec`.

    ``extra_fixed`` values are applied only where the parameter is free.
    """
    match = _MODEL_RE.match(text)
    if not match:
        raise InputError(f"bad model {text!r}", *(where or ()))
    name, inner = match.group(1).lower(), match.group(2)
    try:
        family = Family(name)
    except ValueError:
        choices = ", ".join(DEFAULT_MODELS)
        raise InputError(f"unknown model {name!r} (choose from {choices})", *(where or ())) from None
    fixed = _parse_fixed(inner, where) if inner else {}
    if extra_fixed:
        free = ModelSpec.of(family).free
        for key, value in extra_fixed.items():
            if key in free and key not in fixed:
                fixed[key] = value
    try:
        return ModelSpec.of(family, **fixed)
    except DomainError as exc:
        raise InputError(str(exc), *(where or ())) from None


def parse_models(text: str, extra_fixed=None, where=None) -> list[ModelSpec]:
    items = [t for t in re.split(r",(?![^\[]*\])", text) if t.strip()]
    if not items:
        raise InputError("no models given", *(where or ()))
    return [parse_model(t, extra_fixed, where) for t in items]


# ---------------------------------------------------------------------------
# study configuration

_LIST_KEYS = {"mu": float, "r": float, "c": float, "psi": float, "n": int, "T": int}
_SCALAR_KEYS = {"replicates": int, "seed": int, "level": float}
_REQUIRED = ("mu", "r", "c", "n", "T", "models")
_RANGES = {
    "mu": (lambda v: v > 0, "must be positive"),
    "r": (lambda v: 0 < v <= 1, "must lie in (0, 1]"),
    "c": (lambda v: 0 <= v <= 1, "must lie in [0, 1]"),
    "psi": (lambda v: 0 <= v <= 1, "must lie in [0, 1]"),
    "n": (lambda v: v >= 1, "must be at least 1"),
    "T": (lambda v: v >= 1, "must be at least 1"),
    "replicates": (lambda v: v >= 1, "must be at least 1"),
    "level": (lambda v: 0 < v < 1, "must lie in (0, 1)"),
}


@dataclass(frozen=True)
class StudyConfig:
    cells: tuple[StudyCell, ...]
    seed: int | None
    level: float


def _convert(kind, token, key, lineno, source):
    try:
        value = kind(token)
    except ValueError:
        raise InputError(f"{key}: cannot read {token!r} as {kind.__name__}", lineno, source) from None
    if kind is float and not math.isfinite(value):
        raise InputError(f"{key}: value must be finite", lineno, source)
    check, message = _RANGES.get(key, (lambda v: True, ""))
    if not check(value):
        raise InputError(f"{key}: {token} {message}", lineno, source)
    return value


def parse_study_config(text: str, source: str | None = None) -> StudyConfig:
    """Parse a key-value study description; errors carry line numbers."""
    seen: dict[str, int] = {}
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rest = line.partition("=")
        key, rest = key.strip(), rest.strip()
        if not sep or not key:
            raise InputError("expected 'key = value'", lineno, source)
        if key in seen:
            raise InputError(f"duplicate key {key!r} (first on line {seen[key]})", lineno, source)
        seen[key] = lineno
        if not rest:
            raise InputError(f"{key}: missing value", lineno, source)
        if key in _LIST_KEYS:
            tokens = [t.strip() for t in rest.split(",")]
            if key == "psi" and [t.lower() for t in tokens] == ["none"]:
                values[key] = [None]
                continue
            values[key] = [_convert(_LIST_KEYS[key], t, key, lineno, source) for t in tokens]
        elif key in _SCALAR_KEYS:
            values[key] = _convert(_SCALAR_KEYS[key], rest, key, lineno, source)
        elif key == "models":
            values[key] = parse_models(rest, where=(lineno, source))
        else:
            raise InputError(f"unknown key {key!r}", lineno, source)
    for key in _REQUIRED:
        if key not in values:
            raise InputError(f"missing required key {key!r}", None, source)
    replicates = values.get("replicates", 200)
    level = values.get("level", 0.95)

    cells = []
    grid = itertools.product(
        values["mu"], values["r"], values["c"], values.get("psi", [None]), values["n"], values["T"]
    )
    for mu, r, c, psi, n, T in grid:
        config = GenConfig(ModelParams(mu, r, c), n, T, psi=psi)
        cells.append(StudyCell(config, tuple(values["models"]), replicates))
    return StudyConfig(tuple(cells), values.get("seed"), level)


# ---------------------------------------------------------------------------
# reports


def _clean(value):
    """JSON-safe copy: numpy scalars become Python ones, non-finite floats None."""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def derived_quantities(result: FitResult) -> dict[str, float]:
    """Product ``mu*r`` and, for zero-inflated abundance models, ``psi (1 - e^-mu)``."""
    full = result.full_estimates
    out = {"mu_r": full["mu"] * full["r"]}
    if result.spec.zero_inflated and result.spec.family is not Family.ZIB:
        out["occupied_probability"] = full["psi"] * -math.expm1(-full["mu"])
    return out


def model_block(result: FitResult, level: float) -> dict:
    cis = wald_ci(result, level)
    return {
        "model": result.spec.name,
        "family": result.spec.family.value,
        "fixed": dict(result.spec.fixed),
        "converged": result.converged,
        "loglik": result.loglik,
        "aic": result.aic,
        "n_free": result.n_free,
        "estimates": dict(result.estimates),
        "std_errors": dict(result.std_errors),
        "ci": {
            name: None
            if ci is None
            else {"lower": ci.lower, "upper": ci.upper, "truncated": ci.truncated}
            for name, ci in cis.items()
        },
        "derived": derived_quantities(result),
        "boundary": sorted(result.boundary_flags),
        "warnings": list(result.warnings),
    }


def aic_ranking(blocks: Sequence[dict]) -> list[dict]:
    ok = [b for b in blocks if b.get("converged")]
    ok.sort(key=lambda b: b["aic"])
    best = ok[0]["aic"] if ok else math.nan
    return [{"model": b["model"], "aic": b["aic"], "delta_aic": b["aic"] - best} for b in ok]


def _fmt_num(v, width=10) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "NA".rjust(width)
    return f"{v:{width}.4f}"


def format_fit_report(report: dict) -> str:
    d = report["data"]
    out = io.StringIO()
    out.write(f"sites n = {d['n']}, visits T = {d['T']}\n")
    out.write("frequencies m_0..m_T: " + " ".join(str(v) for v in d["m"]) + "\n")
    out.write(f"sample occupancy (n - m_0)/n = {d['sample_occupancy']:.4f}\n")
    for block in report["models"]:
        out.write("\n")
        if "error" in block:
            out.write(f"{block['model']}: failed ({block['error']})\n")
            continue
        status = "" if block["converged"] else "  [not converged]"
        out.write(
            f"{block['model']}: loglik = {block['loglik']:.4f}, AIC = {block['aic']:.4f}{status}\n"
        )
        for name, est in block["estimates"].items():
            se = block["std_errors"].get(name)
            ci = block["ci"].get(name)
            line = f"  {name:<4} {_fmt_num(est)}"
            line += f" ({_fmt_num(se, 0).strip()})" if se is not None else " (NA)"
            if ci is not None:
                mark = " *" if ci["truncated"] else ""
                line += f"  CI [{ci['lower']:.4f}, {ci['upper']:.4f}]{mark}"
            out.write(line + "\n")
        for name, value in block["derived"].items():
            out.write(f"  {name} = {value:.4f}\n")
        for note in block["warnings"]:
            out.write(f"  warning: {note}\n")
    if report["aic_ranking"]:
        out.write("\nAIC ranking:\n")
        for i, row in enumerate(report["aic_ranking"], start=1):
            out.write(f"  {i}. {row['model']:<14} AIC = {row['aic']:.4f}  dAIC = {row['delta_aic']:.4f}\n")
    out.write(f"\n(* interval truncated to the parameter range; level {report['level']:g})\n")
    return out.getvalue()


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    counts = read_data(args.data, args.format)
    fixed = _parse_fixed(",".join(args.fix)) if args.fix else {}
    specs = parse_models(args.models, fixed)
    if counts.m[0] == counts.n_sites:
        raise DegenerateData("no detections at any site")
    opts = OptimOptions(seed=args.seed)
    blocks = []
    for spec in specs:
        try:
            result = fit(spec, counts, opts)
        except NonConvergence as exc:
            blocks.append({"model": spec.name, "converged": False, "error": str(exc)})
            continue
        blocks.append(model_block(result, args.level))
    report = {
        "schema": SCHEMA,
        "command": "fit",
        "level": args.level,
        "data": digest(counts),
        "models": blocks,
        "aic_ranking": aic_ranking(blocks),
    }
    _emit(_json_text(report) if args.json else format_fit_report(report), args.out)
    if not any(b.get("converged") for b in blocks):
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_test(args) -> int:
    if args.boot < 1:
        raise InputError("--boot must be at least 1")
    counts = read_data(args.data, args.format)
    fixed = _parse_fixed(",".join(args.fix)) if args.fix else {}
    null_name = args.null.lower()
    if null_name not in _ALTERNATIVE:
        raise InputError(f"unknown null model {args.null!r}")
    null_spec = parse_model(null_name, fixed)
    alt_spec = parse_model(_ALTERNATIVE[null_name])
    if counts.m[0] == counts.n_sites:
        raise DegenerateData("no detections at any site")
    try:
        result = bootstrap_pvalue(
            null_spec, alt_spec, counts, args.boot, args.seed,
            opts=OptimOptions(seed=args.seed), n_workers=args.workers,
        )
    except NotNested as exc:
        raise InputError(str(exc)) from None
    hypothesis = f"c={null_spec.fixed_values['c']:g}"
    alpha = 1.0 - args.level
    reject = result.p_boot <= alpha
    conclusion = f"{'reject' if reject else 'do not reject'} {hypothesis} at level {alpha:g}"
    report = {
        "schema": SCHEMA,
        "command": "test",
        "data": digest(counts),
        "null": model_block(result.null_fit, args.level),
        "alternative": model_block(result.alt_fit, args.level),
        "hypothesis": hypothesis,
        "lr_stat": result.lr_stat,
        "clamped": result.clamped,
        "n_boot": result.n_boot,
        "n_failed": result.n_failed,
        "p_boot": result.p_boot,
        "seed": args.seed,
        "note": result.p_asymptotic_note,
        "conclusion": conclusion,
    }
    if args.json:
        text = _json_text(report)
    else:
        text = (
            f"null {null_spec.name} (loglik {result.null_fit.loglik:.4f}) "
            f"vs {alt_spec.name} (loglik {result.alt_fit.loglik:.4f})\n"
            f"LR = {result.lr_stat:.4f}\n"
            f"B = {result.n_boot} (failed {result.n_failed}), seed = {args.seed}\n"
            f"bootstrap p = {result.p_boot:.4f}\n"
            f"note: {result.p_asymptotic_note}\n"
            f"conclusion: {conclusion}\n"
        )
    _emit(text, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        config = GenConfig(
            ModelParams(args.mu, args.r, args.c), args.sites, args.visits, psi=args.psi, seed=args.seed
        )
    except DomainError as exc:
        raise InputError(str(exc)) from None
    matrix = generate(config)
    text = counts_csv(matrix.to_counts()) if args.format == "counts" else matrix_csv(matrix)
    _emit(text, args.out)
    return EXIT_OK


def _curves_path(out: str) -> str:
    path = Path(out)
    return str(path.with_name(path.stem + "_curves" + (path.suffix or ".csv")))


def cmd_study(args) -> int:
    path = args.config or args.data
    if not path:
        raise InputError("study needs --config PATH")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config: {exc.strerror}", None, path) from exc
    config = parse_study_config(text, path)
    seed = args.seed if args.seed is not None else (config.seed or 0)
    summary = run_study(config.cells, seed, n_workers=args.workers, level=config.level)
    summary_buf = io.StringIO()
    summary.to_csv(summary_buf)
    if args.out:
        _emit(summary_buf.getvalue(), args.out)
        curves_buf = io.StringIO()
        summary.curves_csv(curves_buf)
        _emit(curves_buf.getvalue(), args.curves or _curves_path(args.out))
    else:
        sys.stdout.write(summary_buf.getvalue())
        if args.curves:
            curves_buf = io.StringIO()
            summary.curves_csv(curves_buf)
            _emit(curves_buf.getvalue(), args.curves)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _level(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("level must lie in (0, 1)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="occmix", description="N_c-mixture occupancy models")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(p):
        p.add_argument("--data", required=True, help="CSV detection matrix or y,count table")
        p.add_argument("--format", choices=("matrix", "counts"), help="input layout (auto by default)")

    def common(p, seed_default=0):
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--out", help="write output here instead of stdout")

    p = sub.add_parser("fit", help="fit models and rank them by AIC")
    data_args(p)
    p.add_argument("--models", default=",".join(DEFAULT_MODELS), help="comma-separated, e.g. nmix,zinc[c=0.5]")
    p.add_argument("--fix", action="append", default=[], metavar="NAME=VALUE", help="hold a parameter fixed where it is free")
    p.add_argument("--level", type=_level, default=0.95)
    p.add_argument("--json", action="store_true")
    common(p)

    p = sub.add_parser("test", help="parametric-bootstrap LR test of c=0 or c=1")
    data_args(p)
    p.add_argument("--null", required=True, help="zib (c=0), zin or nmix (c=1), or zinc/ncmix with --fix c=VALUE")
    p.add_argument("--boot", type=int, default=DEFAULT_BOOT)
    p.add_argument("--fix", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--level", type=_level, default=0.95)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--json", action="store_true")
    common(p)

    p = sub.add_parser("simulate", help="simulate one detection matrix")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--psi", type=float, default=None)
    p.add_argument("--sites", "-n", type=int, required=True)
    p.add_argument("--visits", "-T", type=int, required=True)
    p.add_argument("--format", choices=("matrix", "counts"), default="matrix")
    common(p)

    p = sub.add_parser("study", help="run a Monte Carlo study from a config file")
    p.add_argument("--config", help="key-value study configuration")
    p.add_argument("--data", help=argparse.SUPPRESS)
    p.add_argument("--curves", help="median-curve CSV (default: <out>_curves.csv)")
    p.add_argument("--workers", type=int, default=1)
    common(p, seed_default=None)
    return parser


_COMMANDS = {"fit": cmd_fit, "test": cmd_test, "simulate": cmd_simulate, "study": cmd_study}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except InputError as exc:
        sys.stderr.write(f"occmix: error: {exc}\n")
        return EXIT_USAGE
    except DegenerateData as exc:
        sys.stderr.write(f"occmix: degenerate data: {exc}\n")
        return EXIT_DEGENERATE
    except NonConvergence as exc:
        sys.stderr.write(f"occmix: no convergence: {exc}\n")
        return EXIT_NO_CONVERGENCE


if __name__ == "__main__":
    raise SystemExit(main())
