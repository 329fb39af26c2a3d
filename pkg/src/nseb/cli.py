"""Command-line front end.

Every subcommand accepts ``--config FILE``: a JSON object whose keys are the
subcommand's long option names (``from``, ``eps``, ``fit_lo`` ...).  Flags on
the command line override the file.  Exit codes: 0 success, 1 a check
failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import presets
from .errors import CapacityError, ConfigError, DomainError, InfeasibleCodebook, InsufficientDataError
from .analysis import (entropy_ceiling_report, hellinger_series, lag_independence, largest_block_length,
                       plug_in_entropy, tv_to_uniform)
from .expand import plan_expansion
from .factor import coding_radius_profile, extract_stream, run_pipeline
from .intervals import decompose
from .source import MarginalSchedule, _position, kakutani_divergence, load_schedule, sample_window
from .typecode import build_codebook

PRESETS = {
    "fair-coin": presets.fair_coin,
    "fair-power-decay": presets.fair_power_decay,
    "skewed4": presets.skewed4_stationary,
    "skewed4-power-decay": presets.skewed4_power_decay,
    "skewed4-table": presets.skewed4_table,
    "dissipative": presets.dissipative_schedule,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _schedule(ref: str | None, what: str = "schedule") -> MarginalSchedule:
    if not ref:
        raise UsageError(f"--{what} is required")
    if ref.startswith("preset:"):
        name = ref[len("preset:"):]
        if name not in PRESETS:
            raise UsageError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
        return PRESETS[name]()
    try:
        return load_schedule(ref)
    except ConfigError as exc:
        raise ConfigError(str(exc), source=ref) from None
    except OSError as exc:
        raise UsageError(f"cannot read {ref}: {exc.strerror}") from None


def _record(obj, fh) -> None:
    fh.write(json.dumps(obj, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _open_out(path: str, binary: bool = False):
    if path in (None, "-"):
        return sys.stdout.buffer if binary else sys.stdout, False
    return open(path, "wb" if binary else "w", encoding=None if binary else "utf-8", newline=None), True


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise UsageError(message)


def _codebook(args, schedule: MarginalSchedule):
    _check(args.k is not None and args.k >= 1, "--k must be a positive integer")
    _check(args.eps is not None and args.eps > 0, "--eps must be positive")
    _check(args.delta is None or 0 < args.delta <= 2, "--delta must lie in (0, 2]")
    cb = build_codebook(schedule.limiting, args.k, args.eps, args.delta, marker_a=schedule.alphabet.a)
    return cb, plan_expansion(cb.k, cb.m_bits, args.target)


# -- commands ---------------------------------------------------------------------

def cmd_simulate(args, out) -> int:
    s = _schedule(args.schedule)
    w = sample_window(s, args.start, args.end, args.seed)
    fh, close = _open_out(args.out, args.format == "binary")
    try:
        if args.format == "binary":
            _check(s.size <= 256, "binary format holds at most 256 symbols")
            fh.write(w.symbols.astype(np.uint8).tobytes())
        else:
            toks = w.tokens()
            fh.write("".join(f"{i}\t{t}\n" for i, t in zip(range(w.start, w.end + 1), toks)))
    finally:
        if close:
            fh.close()
    return 0


def cmd_codebook(args, out) -> int:
    s = _schedule(args.schedule)
    cb, plan = _codebook(args, s)
    rec = {"codebook": cb.summary(), "plan": plan.to_dict()}
    if not args.full:
        rec["codebook"]["types"] = rec["codebook"]["types"][:20]
        rec["codebook"]["n_types"] = len(cb.entries)
    _record(rec, out)
    return 0


def cmd_extract(args, out) -> int:
    s = _schedule(args.schedule)
    cb, plan = _codebook(args, s)
    _check(args.end >= args.start, "--to must not precede --from")
    fo = extract_stream(s, cb, plan, args.start, args.end, args.seed, chunk=args.chunk, overlap=args.overlap)
    fh, close = _open_out(args.out, args.format == "binary")
    try:
        fh.write(fo.to_bytes() if args.format == "binary" else fo.to_text())
    finally:
        if close:
            fh.close()
    prof = coding_radius_profile(fo, R=args.radius_tail)
    prof.pop("histogram")
    stats = {"stats": fo.stats, "plan": plan.to_dict(), "schedule_digest": s.digest(),
             "codebook": {"k": cb.k, "m_bits": cb.m_bits, "B_size": cb.B_size, "good_words": cb.good_count},
             "coding_radius": prof, "seed": args.seed}
    if args.stats:
        with open(args.stats, "w", encoding="utf-8") as sf:
            _record(stats, sf)
    else:
        _record(stats, sys.stderr if args.out in (None, "-") else out)
    return 0


def _read_stream(path: str, fmt: str) -> np.ndarray:
    if fmt == "binary":
        raw = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8).astype(np.int64)
        return raw[raw != 0xFF]
    vals = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 2:
                raise ConfigError("expected index<TAB>symbol", n, 1, path)
            if parts[1] == "-":
                continue
            try:
                vals.append(int(parts[1]))
            except ValueError:
                raise ConfigError(f"symbol {parts[1]!r} is not an integer", n, len(parts[0]) + 2, path) from None
    return np.asarray(vals, dtype=np.int64)


def cmd_analyze(args, out) -> int:
    _check(args.input is not None, "--input is required")
    try:
        seq = _read_stream(args.input, args.format)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
    _check(seq.size > 0, "no resolved symbols in the input")
    A = args.alphabet_size or int(seq.max()) + 1
    L = args.L or largest_block_length(seq.size, max(A, 2))
    rep = plug_in_entropy(seq, L, A, seed=args.seed)
    rec = {"n": int(seq.size), "alphabet_size": A, "entropy": rep.to_dict(), "tv_to_uniform": tv_to_uniform(seq, A),
           "lags": lag_independence(seq, A, tuple(args.lags))}
    status = 0
    if args.ceiling_p:
        c = entropy_ceiling_report(seq, args.ceiling_p, L=L, tolerance=args.tolerance, alphabet_size=A)
        rec["ceiling"] = c.to_dict()
        status = 0 if c.passed else 1
    _record(rec, out)
    return status


def cmd_kakutani(args, out) -> int:
    _check(args.N >= 10, "--N must be at least 10")
    r = kakutani_divergence(_schedule(args.a, "a"), _schedule(args.b, "b"), args.N)
    _record(r.to_dict(), out)
    return 0


def cmd_dissipativity(args, out) -> int:
    fit = (args.fit_lo or max(1, args.N // 10), args.fit_hi or args.N)
    r = hellinger_series(_schedule(args.schedule), args.N, args.K, fit_range=fit)
    _record(r.to_dict(full=args.full), out)
    return 0


def cmd_inspect(args, out) -> int:
    s = _schedule(args.schedule)
    w = sample_window(s, args.start, args.end, args.seed)
    if args.eps is None:
        _check(args.k is not None and args.k >= 1, "--k must be a positive integer")
        out.write(decompose(w, args.k).to_text(w) + "\n")
        return 0
    cb, plan = _codebook(args, s)
    p = run_pipeline(w, cb, plan)
    out.write(p.decomposition.to_text(w) + "\n")
    letters = "".join("grm"[c] for c in p.colors.colors)
    out.write(f"# colors {letters}\n")
    for o, greens in p.matching.partners.items():
        state = "unresolved" if o in p.matching.unresolved else "resolved"
        out.write(f"# match {o} -> {list(greens)} {state}\n")
    out.write(p.output.to_text())
    _record({"stats": p.output.stats, "plan": plan.to_dict()}, out)
    return 0


def cmd_verify(args, out) -> int:
    from .acceptance import CRITERIA, run_suite
    only = set(args.only) if args.only else None
    if only and not only <= set(CRITERIA):
        raise UsageError(f"criteria are numbered {min(CRITERIA)}..{max(CRITERIA)}")
    results = run_suite(only, echo=lambda line: (out.write(line + "\n"), out.flush()))
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            for r in results:
                _record(r.to_dict(), fh)
    failed = [r.number for r in results if not r.passed]
    out.write(f"{len(results) - len(failed)}/{len(results)} criteria passed\n")
    return 1 if failed else 0


# -- parser ---------------------------------------------------------------------

def _common(p, window=False, code=False):
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--schedule", help="schedule JSON file or preset:NAME")
    p.add_argument("--seed", type=int, default=0)
    if window:
        p.add_argument("--from", dest="start", type=int, default=0)
        p.add_argument("--to", dest="end", type=int, default=9999)
    if code:
        p.add_argument("--k", type=int)
        p.add_argument("--eps", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--target", type=float, default=1.0, help="output bits per symbol wanted")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nseb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="sample a window of the source")
    _common(p, window=True)
    p.add_argument("--format", choices=("text", "binary"), default="text")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("codebook", help="build and summarize a type codebook")
    _common(p, code=True)
    p.add_argument("--full", action="store_true", help="list every admissible type")
    p.set_defaults(func=cmd_codebook)

    p = sub.add_parser("extract", help="run the factor on a window")
    _common(p, window=True, code=True)
    p.add_argument("--chunk", type=int, default=1 << 20)
    p.add_argument("--overlap", type=int)
    p.add_argument("--format", choices=("text", "binary"), default="text")
    p.add_argument("--out", default="-")
    p.add_argument("--stats", help="write the stats record here")
    p.add_argument("--radius-tail", type=int, default=1000)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("analyze", help="entropy, uniformity and independence of a stream")
    p.add_argument("--config")
    p.add_argument("--input")
    p.add_argument("--format", choices=("text", "binary"), default="text")
    p.add_argument("--alphabet-size", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--lags", type=int, nargs="+", default=[1, 2, 3, 4])
    p.add_argument("--ceiling-p", type=float, nargs="+", help="limiting law for the entropy-ceiling check")
    p.add_argument("--tolerance", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("kakutani", help="equivalence verdict for two schedules")
    p.add_argument("--config")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--N", type=int, default=100_000)
    p.set_defaults(func=cmd_kakutani)

    p = sub.add_parser("dissipativity", help="Hellinger affinity series of the shift")
    p.add_argument("--config")
    p.add_argument("--schedule")
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--K", type=int, default=10_000)
    p.add_argument("--fit-lo", type=int, help="default N/10")
    p.add_argument("--fit-hi", type=int, help="default N")
    p.add_argument("--full", action="store_true")
    p.set_defaults(func=cmd_dissipativity)

    p = sub.add_parser("inspect", help="markers, intervals, colors and matching as text")
    _common(p, window=True, code=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--config")
    p.add_argument("--suite", choices=("desk",), default="desk")
    p.add_argument("--only", type=int, nargs="+")
    p.add_argument("--report", help="write one JSON record per criterion here")
    p.set_defaults(func=cmd_verify)
    return parser


def _config_keys(subparser) -> dict:
    keys = {}
    for action in subparser._actions:
        longs = [o for o in action.option_strings if o.startswith("--")]
        if longs and action.dest not in ("help", "config"):
            keys[longs[0][2:].replace("-", "_")] = action
    return keys


def _config_value(action, value):
    """Check a config value against the option it sets; returns None when it does not fit."""
    def fits(v):
        if action.type is int:
            return isinstance(v, int) and not isinstance(v, bool)
        if action.type is float:
            return isinstance(v, (int, float)) and not isinstance(v, bool)
        if action.nargs == 0:
            return isinstance(v, bool)
        return isinstance(v, str)
    if value is None:
        return None if action.required else value
    if action.nargs == "+":
        return value if isinstance(value, list) and value and all(fits(v) for v in value) else None
    if action.choices is not None and value not in action.choices:
        return None
    return value if fits(value) else None


def _apply_config(parser, args, argv):
    sub = parser._subparsers._group_actions[0].choices[args.command]
    path = args.config
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno, exc.colno, path) from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", 1, 1, path)
    keys = _config_keys(sub)
    defaults = {}
    for key, value in data.items():
        if key not in keys:
            line, col = _position(text, key)
            raise ConfigError(f"unknown key {key!r} for {args.command}", line, col, path)
        ok = _config_value(keys[key], value)
        if ok is None and value is not None:
            line, col = _position(text, key)
            raise ConfigError(f"bad value for {key!r}: {value!r}", line, col, path)
        defaults[keys[key].dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 2
        if getattr(args, "config", None):
            args = _apply_config(parser, args, argv)
        return args.func(args, sys.stdout)
    except (UsageError, ConfigError, DomainError, InfeasibleCodebook, CapacityError,
            InsufficientDataError) as exc:
        print(f"nseb: error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0
