"""``causec`` command line.

Exit codes: 0 success, 2 usage error, 3 engine error.  Engine errors print
one line ``E_CODE: message`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from . import causes, dbcompile
from .causes import Definition, format_fraction
from .errors import CausalityError
from .network import parse_expr, parse_network, format_network
from .potential import arithmetize, format_potential, network_potential
from .relational import AggregateQuery, load_instance, parse_query, parse_tuple

ENV_MAX_INPUTS = "CAUSE_MAX_INPUTS"
NO_CAUSES = "no causes found"


class UsageError(Exception):
    pass


# -- rendering ---------------------------------------------------------------------

def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    return "\n".join([line(header), line(["-" * w for w in widths])] + [line(r) for r in rows])


def _contingency_text(entry: dbcompile.ExplanationEntry) -> str:
    if not entry.contingency:
        return "-"
    return ", ".join(("+" if present else "-") + lbl for lbl, present in entry.contingency)


def emit_report(report: dbcompile.ExplanationReport, fmt: str = "table") -> str:
    """Render an explanation report; causes are already in rank order."""
    if fmt == "json":
        return _dumps(report.to_json())
    head = f"{report.question} {report.subject}  [definition: {report.definition.value}]"
    if not report.causes:
        return head + "\n" + _table(["rank", "tuple", "responsibility", "contingency"],
                                    [["-", NO_CAUSES, "-", "-"]])
    rows = []
    for k, e in enumerate(report.causes, 1):
        tag = "+" if e.inserted else " "
        rows.append([str(k), f"{tag}{e.label}", format_fraction(e.responsibility), _contingency_text(e)])
    return head + "\n" + _table(["rank", "tuple", "responsibility", "contingency"], rows)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False)


def _gamma_text(cert) -> str:
    if not cert.witness or not len(cert.witness):
        return "-"
    return ", ".join(f"{k}={int(v)}" for k, v in cert.witness.assignment)


# -- argument handling ---------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--db", metavar="DIR", help="directory with schema.txt and <Rel>.csv files")
    common.add_argument("--query", metavar="FILE", help="query file (rule syntax)")
    common.add_argument("--network", metavar="FILE", help="causal network file")
    common.add_argument("--answer", metavar="TUPLE", help="answer tuple, e.g. \"(1,'a')\"")
    common.add_argument("--missing", metavar="TUPLE", help="missing answer tuple")
    common.add_argument("--candidates", metavar="FILE", help="candidate insertions, one fact per line")
    common.add_argument("--definition", default="functional", choices=[d.value for d in Definition])
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--max-inputs", type=int, metavar="N",
                        help=f"primitive-input cap (default ${ENV_MAX_INPUTS} or {causes.DEFAULT_MAX_INPUTS})")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads")
    p = argparse.ArgumentParser(prog="causec", description="Causes and responsibility in Boolean "
                                "causal networks and query answers.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, text in [
        ("explain-why", "causes of a query answer"),
        ("explain-whynot", "insertion causes of a missing answer"),
        ("aggregate", "causes of a SUM/COUNT predicate"),
        ("rank", "causes of a network's output, ranked by responsibility"),
        ("compare", "verdicts of every definition side by side"),
        ("arith", "potential function of an expression or network"),
        ("check", "validate a network file"),
    ]:
        sp = sub.add_parser(name, parents=[common], help=text)
        if name == "arith":
            sp.add_argument("--expr", help="Boolean expression, e.g. \"(x&y)|z\"")
        if name == "check":
            sp.add_argument("--print", dest="print_net", action="store_true",
                            help="print the network in canonical form")
    return p


def _max_inputs(args) -> int:
    if args.max_inputs is not None:
        return args.max_inputs
    env = os.environ.get(ENV_MAX_INPUTS)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{ENV_MAX_INPUTS} must be an integer, got {env!r}") from None
    return causes.DEFAULT_MAX_INPUTS


def _need(args, *names):
    missing = ["--" + n.replace("_", "-") for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"{args.command} requires {' '.join(missing)}")


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _load_db(args):
    if not Path(args.db).is_dir():
        raise UsageError(f"--db {args.db} is not a directory")
    return load_instance(args.db)


def _query(args, aggregate: bool):
    q = parse_query(_read(args.query))
    if aggregate != isinstance(q, AggregateQuery):
        kind = "an aggregate" if aggregate else "a conjunctive"
        raise UsageError(f"{args.command} needs {kind} query")
    return q


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        text = _dispatch(args)
    except UsageError as exc:
        print(f"causec: error: {exc}", file=stderr)
        return 2
    except CausalityError as exc:
        print(f"{exc.code}: {exc}", file=stderr)
        return 3
    stdout.write(text if text.endswith("\n") else text + "\n")
    return 0


def _dispatch(args) -> str:
    fmt = "json" if args.json else "table"
    caps = {"max_inputs": _max_inputs(args)}
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    cmd = args.command

    if cmd == "explain-why":
        _need(args, "db", "query", "answer")
        inst = _load_db(args)
        report = dbcompile.explain_why(inst, _query(args, False), parse_tuple(args.answer),
                                       args.definition, workers=args.threads, **caps)
        return emit_report(report, fmt)

    if cmd == "explain-whynot":
        _need(args, "db", "query", "missing")
        inst = _load_db(args)
        space = dbcompile.WhyNotSpace.parse(inst, _read(args.candidates)) if args.candidates else None
        report = dbcompile.explain_why_not(inst, _query(args, False), parse_tuple(args.missing), space,
                                           args.definition, workers=args.threads, **caps)
        return emit_report(report, fmt)

    if cmd == "aggregate":
        _need(args, "db", "query")
        inst = _load_db(args)
        report = dbcompile.aggregate_causes(inst, _query(args, True), args.definition, **caps)
        return emit_report(report, fmt)

    if cmd == "arith":
        if (args.expr is None) == (args.network is None):
            raise UsageError("arith takes exactly one of --expr or --network")
        if args.expr is not None:
            p = arithmetize(parse_expr(args.expr))
        else:
            p = network_potential(parse_network(_read(args.network)))
        if fmt == "json":
            return _dumps({"potential": format_potential(p), "variables": sorted(p.variables)})
        return format_potential(p)

    _need(args, "network")
    net = parse_network(_read(args.network))

    if cmd == "check":
        if args.print_net:
            return format_network(net)
        info = {"variables": len(net.variables), "inputs": len(net.inputs),
                "output": net.output, "actual_output": net.actual_output,
                "unused": sorted(net.unused)}
        if fmt == "json":
            return _dumps(info)
        return (f"ok: {info['variables']} variables, {info['inputs']} primitive inputs, "
                f"output {net.output}={int(net.actual_output)}")

    if cmd == "rank":
        certs = causes.rank_by_responsibility(net, args.definition, workers=args.threads, **caps)
        if fmt == "json":
            return _dumps({"definition": args.definition, "output": net.output,
                           "causes": [c.to_json() for c in certs]})
        rows = [[str(k), c.label, format_fraction(c.responsibility), _gamma_text(c)]
                for k, c in enumerate(certs, 1)] or [["-", NO_CAUSES, "-", "-"]]
        return _table(["rank", "variable", "responsibility", "contingency"], rows)

    if cmd == "compare":
        report = causes.compare_definitions(net, workers=args.threads, **caps)
        if fmt == "json":
            return _dumps(report.to_json())
        defs = list(Definition)
        rows = []
        for r in report.rows:
            cells = [r.label]
            for d in defs:
                c = r.certificates[d]
                cells.append(format_fraction(c.responsibility) if c.verdict else "no")
            rows.append(cells)
        if not rows:
            rows = [[NO_CAUSES] + ["-"] * len(defs)]
        return _table(["variable"] + [d.value for d in defs], rows)

    raise UsageError(f"unknown command {cmd}")  # pragma: no cover


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
