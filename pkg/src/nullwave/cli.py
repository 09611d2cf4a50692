"""Command-line front end: ``python3 -m nullwave {classify,check,run,verify}``.

Config files are INI text read with :mod:`configparser`::

    [tensor]
    preset = FA0              # or: file = path/to/tensor.txt
                              # or: decomposition = C1[0]=1 C4[2]=-1
                              # or: entries such as  g[0][0][0] = 1

    [solver]
    epsilon = 0.01            # any SolverConfig field except tensor and source
    h = 0.03125
    t_final = 50
    f1 = bump(a=4)

    [output]
    csv = run.csv
    checkpoint = run.ckpt     # optional, written at the end of the run

Keys are case-insensitive and ``#`` or ``;`` start a comment. Command-line
flags override the file. Exit codes: classify and check return 0 for a null
tensor, 2 for a non-null one and 1 on bad input; run returns 0 when the
integration completes, 2 on detected breakdown and 1 on bad input; verify
returns 0 iff every check passes.
"""

import argparse
import configparser
import dataclasses
import sys
from pathlib import Path

from . import algebra
from .errors import NullwaveError, ParseError
from .solver import SolverConfig, run, save_checkpoint

EXIT_OK, EXIT_INPUT, EXIT_NOT_NULL = 0, 1, 2

_INT_FIELDS = {"max_iterations", "m_diag", "sample_stride", "order", "workers"}
_STR_FIELDS = {"f1", "f2"}
_SOLVER_FIELDS = {f.name for f in dataclasses.fields(SolverConfig)} - {"tensor", "source"}


def _read_config(path):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        raise ParseError(str(exc).splitlines()[0], lineno) from None
    unknown = set(parser.sections()) - {"tensor", "solver", "output"}
    if unknown:
        raise ParseError(f"unknown section(s): {', '.join(sorted(unknown))}")
    return parser


def _tensor_from_section(section, base=Path(".")):
    keys = set(section)
    sources = keys & {"preset", "file", "decomposition"}
    entries = [k for k in keys if k.startswith("g[")]
    if len(sources) + bool(entries) != 1:
        raise ParseError("[tensor] needs exactly one of preset, file, decomposition or g[k][i][j] entries")
    if "preset" in sources:
        return algebra.preset(section["preset"].strip())
    if "file" in sources:
        return algebra.parse_tensor((base / section["file"].strip()).read_text())
    if "decomposition" in sources:
        return algebra.synthesize(algebra.parse_decomposition(section["decomposition"]))
    return algebra.parse_tensor("\n".join(f"{k} = {section[k]}" for k in sorted(entries)))


def _solver_settings(section):
    settings = {}
    for key, raw in section.items():
        if key not in _SOLVER_FIELDS:
            raise ParseError(f"unknown [solver] key {key!r}")
        raw = raw.strip()
        try:
            if key in _STR_FIELDS:
                settings[key] = raw
            elif raw.lower() in ("", "none", "auto"):
                settings[key] = None
            elif key in _INT_FIELDS:
                settings[key] = int(raw)
            else:
                settings[key] = float(raw)
        except ValueError:
            raise ParseError(f"[solver] {key} = {raw!r} is not a number") from None
    return settings


def load_tensor(args):
    """Tensor from ``--preset``, ``--tensor`` or ``--decomposition``."""
    given = [x for x in (args.preset, args.tensor, args.decomposition) if x is not None]
    if len(given) != 1:
        raise ParseError("give exactly one of --preset, --tensor, --decomposition")
    if args.preset is not None:
        return algebra.preset(args.preset)
    if args.tensor is not None:
        return algebra.parse_tensor(Path(args.tensor).read_text())
    return algebra.synthesize(algebra.parse_decomposition(args.decomposition))


def build_run(args):
    """``(SolverConfig, csv path or None, checkpoint path or None)`` from the config and flags."""
    tensor = None
    settings = {}
    csv_path = ckpt = None
    if args.config is not None:
        parser = _read_config(args.config)
        base = Path(args.config).parent
        if parser.has_section("tensor"):
            tensor = _tensor_from_section(parser["tensor"], base)
        if parser.has_section("solver"):
            settings = _solver_settings(parser["solver"])
        if parser.has_section("output"):
            out = parser["output"]
            extra = set(out) - {"csv", "checkpoint"}
            if extra:
                raise ParseError(f"unknown [output] key(s): {', '.join(sorted(extra))}")
            csv_path = out.get("csv")
            ckpt = out.get("checkpoint")
    if any(x is not None for x in (args.preset, args.tensor, args.decomposition)):
        tensor = load_tensor(args)
    if tensor is None:
        raise ParseError("no tensor given: use [tensor] in the config or --preset/--tensor")
    if args.workers is not None:
        settings["workers"] = args.workers
    if args.out is not None:
        csv_path = args.out
    cfg = SolverConfig(tensor=tensor, **{k: v for k, v in settings.items() if v is not None})
    cfg.validate()
    return cfg, csv_path, ckpt


def _verdict(flag):
    return "yes" if flag else "no"


def classify_report(g):
    """``(text, exit code)`` for the classify subcommand."""
    null = algebra.check_null(g)
    strong = algebra.check_strong_null(g)
    lines = []
    if not null:
        coeffs = algebra.full_symbol(g).nonzero()
        lines.append("null: no, strong: no")
        lines.append("violated symbol coefficients: "
                     + " ".join(f"[{k}]={v}" for k, v in coeffs.items()))
        return "\n".join(lines), EXIT_NOT_NULL
    d = algebra.classify(g)
    lines.append(f"null: yes, strong: {_verdict(strong)}, {d}")
    if not strong:
        tang = algebra.tangency_symbol(g).nonzero()
        lines.append("tangency symbol coefficients: " + " ".join(f"[{k}]={v}" for k, v in tang.items()))
    lines.append(f"parameters: {algebra.parametrize(g)}")
    lines.append(f"decomposition: {d}")
    return "\n".join(lines), EXIT_OK


def check_report(g):
    """``(text, exit code)`` comparing the three null-condition routes."""
    routes = (("symbol", algebra.check_null, algebra.check_strong_null),
              ("relations", algebra.check_null_relations, algebra.check_strong_null_relations),
              ("sampled", algebra.check_null_sampled, algebra.check_strong_null_sampled))
    lines = []
    nulls, strongs = set(), set()
    for name, fn_null, fn_strong in routes:
        n, s = fn_null(g), fn_strong(g)
        nulls.add(n)
        strongs.add(s)
        lines.append(f"{name:<10} null: {_verdict(n)}, strong: {_verdict(s)}")
    agree = len(nulls) == 1 and len(strongs) == 1
    lines.append(f"routes agree: {_verdict(agree)}")
    if not agree:
        return "\n".join(lines), EXIT_INPUT
    return "\n".join(lines), EXIT_OK if nulls.pop() else EXIT_NOT_NULL


def _slopes(sink, t_final):
    from .diagnostics import RATES, fit_slope

    t = sink.column("t")
    out = {}
    for name in RATES:
        try:
            out[name] = fit_slope(t, sink.column(name), window=(10.0, t_final))
        except ValueError:
            out[name] = None
    return out


def run_report(cfg, csv_path=None, ckpt=None, stream=sys.stdout):
    from .diagnostics import DiagnosticsSink, drift_ratio

    sink = DiagnosticsSink(cfg.tensor, m=cfg.m_diag)
    record = run(cfg, sink)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            sink.write_csv(fh)
    if ckpt is not None and record.state is not None:
        save_checkpoint(ckpt, record.state)
    m = cfg.m_diag
    drift = drift_ratio(sink.column(f"E{m}")) if sink.reports else 1.0
    cum = sink.column("flux_cum")
    print(f"status: {record.status} at t={record.t_end:.6g} after {record.steps} steps", file=stream)
    if record.message:
        print(f"breakdown: {record.message}", file=stream)
    print(f"samples: {record.rows}", file=stream)
    print(f"E{m} drift ratio: {drift:.6g}", file=stream)
    print(f"cumulative flux: {cum[-1] if cum.size else 0.0:.6g}", file=stream)
    for name, slope in _slopes(sink, cfg.t_final).items():
        shown = "n/a" if slope is None else f"{slope:.4f}"
        print(f"slope {name}: {shown}", file=stream)
    if csv_path is not None:
        print(f"csv: {csv_path}", file=stream)
    return record, sink


def make_parser():
    p = argparse.ArgumentParser(prog="nullwave", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def tensor_flags(sp):
        sp.add_argument("--preset", help="named form, e.g. FA0, GC0 or CLM")
        sp.add_argument("--tensor", help="file with lines g[k][i][j] = p/q")
        sp.add_argument("--decomposition", help="text such as 'C1[0]=1 C4[2]=-1'")

    sp = sub.add_parser("classify", help="null, strong-null and decomposition of a tensor")
    tensor_flags(sp)
    sp = sub.add_parser("check", help="compare the null-condition checkers")
    tensor_flags(sp)
    sp = sub.add_parser("run", help="integrate and write the diagnostics CSV")
    tensor_flags(sp)
    sp.add_argument("--config", help="INI file with [tensor], [solver], [output]")
    sp.add_argument("--out", help="CSV output path")
    sp.add_argument("--workers", type=int, help="threads for the grid sweeps")
    sp = sub.add_parser("verify", help="run the regression suite")
    sp.add_argument("--only", help="comma-separated subset of checks")
    sp.add_argument("--workers", type=int, help="threads for the grid sweeps")
    sp.add_argument("--out", help="also write the result lines to this file")
    return p


def main(argv=None, stream=None):
    stream = sys.stdout if stream is None else stream
    args = make_parser().parse_args(argv)
    try:
        if args.command in ("classify", "check"):
            g = load_tensor(args)
            text, code = (classify_report if args.command == "classify" else check_report)(g)
            print(text, file=stream)
            return code
        if args.command == "run":
            cfg, csv_path, ckpt = build_run(args)
            record, _ = run_report(cfg, csv_path, ckpt, stream)
            return EXIT_OK if record.completed else EXIT_NOT_NULL
        return _verify(args, stream)
    except (ParseError, NullwaveError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def _verify(args, stream):
    from . import verify

    if args.workers is not None:
        import numba

        numba.set_num_threads(max(1, min(args.workers, numba.config.NUMBA_NUM_THREADS)))
    keys = None if args.only is None else [k.strip() for k in args.only.split(",") if k.strip()]
    lines = []

    def out(line):
        lines.append(line)
        print(line, file=stream, flush=True)

    results = verify.run_suite(keys, out=out)
    passed = sum(r.passed for r in results)
    out(f"{passed}/{len(results)} checks passed")
    if args.out is not None:
        Path(args.out).write_text("\n".join(lines) + "\n")
    return EXIT_OK if passed == len(results) else EXIT_INPUT
