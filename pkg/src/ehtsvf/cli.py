"""Command-line entry point: ``ehtsvf <command> ...``.

Exit codes: 0 success, 1 diagnostics or usage errors, 2 numeric
degeneracies such as impossible post-selection or a zero norm.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .dsl import Diagnostic, Directive, parse
from .errors import DegeneracyError, HistoryError
from .experiment import run_directive
from .histories import FamilyReport, HistoryState, _fmt
from .isomorphism import IsomorphismReport, history_to_mts, mts_to_history, random_mts_sample, verify_isomorphism
from .protocols import GenerationComparison, OracleReport
from .reduction import MixedHistory
from .serialize import AblResult, Diagnostics, InnerResult, WeightResult, serialize, to_dict, dumps
from .tsvf import MultiTimeState

DEFAULT_SEED = 20240607

EXIT_OK, EXIT_DIAG, EXIT_NUMERIC = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _num(x: float) -> str:
    return f"{x:.12g}"


def table(obj: Any) -> str:
    if isinstance(obj, WeightResult):
        return f"weight {obj.name or '-'}: {_num(obj.value)}"
    if isinstance(obj, InnerResult):
        return f"inner[{obj.kind}] ({obj.a}, {obj.b}): {_fmt(obj.value, 12)}"
    if isinstance(obj, AblResult):
        rows = [f"  outcome {i}: {_num(p)}" for i, p in enumerate(obj.probabilities)]
        return "\n".join(["abl probabilities", *rows])
    if isinstance(obj, HistoryState):
        return f"history: {obj.render()}"
    if isinstance(obj, MultiTimeState):
        return f"mts: {obj.render()}"
    if isinstance(obj, MixedHistory):
        lines = [f"mixed history: {len(obj)} components, total weight {_num(obj.total_weight)}"
                 f" (source {_num(obj.source_weight)})"]
        for w, h in obj.sorted().components:
            lines.append(f"  {_num(w)}  {h.render()}")
        return "\n".join(lines)
    if isinstance(obj, FamilyReport):
        return "\n".join([
            f"family: {'consistent' if obj.verdict else 'not consistent'}",
            f"  exhaustiveness residual: {_num(obj.exhaustiveness_residual)}",
            f"  max off-diagonal: {_num(obj.max_offdiagonal)}",
        ])
    if isinstance(obj, IsomorphismReport):
        return "\n".join([
            f"isomorphism check over {obj.n_states} states",
            f"  additivity: {_num(obj.additivity)}",
            f"  unit-phase scaling: {_num(obj.phase_scaling)}",
            f"  general scaling: {_num(obj.general_scaling)}",
            f"  inner product: {_num(obj.inner_product)}",
        ])
    if isinstance(obj, OracleReport):
        lines = ["tau-GHZ oracle report"]
        lines += [f"  state {k}: deviation {_num(v)}" for k, v in obj.state_deviation.items()]
        lines += [f"  p({k}) = {_num(v)}" for k, v in obj.probabilities.items()]
        lines += [f"  computational total: {_num(obj.computational_total)}",
                  f"  history s-norm: {_num(obj.history_s_norm)}",
                  f"  history weight: {_num(obj.history_weight)}",
                  f"  multiple-time state valid: {obj.mts_valid}"]
        return "\n".join(lines)
    if isinstance(obj, GenerationComparison):
        return "\n".join([
            "generation scheme",
            f"  oracle: {_num(obj.oracle)}",
            f"  two-time state: {_num(obj.two_time)}",
            f"  reduced history: {_num(obj.reduced)} ({obj.reduced_components} components)",
            f"  max deviation: {_num(obj.max_deviation)}",
        ])
    return str(obj)


def _build_parser() -> argparse.ArgumentParser:
    # common options are accepted before or after the subcommand
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("table", "canonical"), default=argparse.SUPPRESS)
    common.add_argument("--output", default=argparse.SUPPRESS,
                        help="write results to this file instead of standard output")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help=f"random seed (default {DEFAULT_SEED})")
    p = _Parser(prog="ehtsvf", description="Entangled histories and multiple-time states.",
                parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    def spec_cmd(name, help_):
        c = add(name, help_)
        c.add_argument("spec", help="experiment file (.ehs)")
        return c

    spec_cmd("weight", "history weights")
    spec_cmd("inner", "inner products").add_argument("--kind", choices=("k", "s", "mts"), default="s")
    spec_cmd("abl", "ABL probabilities")
    spec_cmd("isomap", "map between histories and multiple-time states").add_argument(
        "--dir", choices=("mts2eh", "eh2mts"), required=True)
    spec_cmd("ptrace", "cross-time partial traces")
    spec_cmd("check-family", "consistency of declared families")
    spec_cmd("run", "execute every directive in the file")
    rp = add("run-protocol", "simulate a built-in protocol")
    rp.add_argument("protocol", choices=("tau-ghz", "generation"))
    vi = add("verify-iso", "sample the isomorphism properties")
    vi.add_argument("--samples", type=int, default=50)
    vi.add_argument("--slots", type=int, default=2)
    vi.add_argument("--dim", type=int, default=2)
    return p


def _load(path: str):
    try:
        text = Path(path).read_bytes()
    except OSError as exc:
        return None, [Diagnostic(0, 0, f"cannot read {path}: {exc.strerror}")]
    res = parse(text)
    return res.spec, res.diagnostics


def _select(spec, kind: str) -> list[Directive]:
    return [d for d in spec.directives if d.kind == kind]


def _spec_results(args, spec, rng) -> list[Any]:
    cmd = args.command
    out: list[Any] = []
    if cmd == "run":
        for d in spec.directives:
            out.extend(run_directive(spec, d, rng))
    elif cmd == "weight":
        ds = _select(spec, "weight") or [Directive("weight", {"histories": []})]
        for d in ds:
            out.extend(run_directive(spec, d, rng))
    elif cmd == "inner":
        pairs = [(d.args["a"], d.args["b"]) for d in _select(spec, "inner")
                 if (d.args["kind"] == "mts") == (args.kind == "mts")]
        pool = list(spec.mts if args.kind == "mts" else spec.histories)
        if not pairs and len(pool) >= 2:
            pairs = [(pool[0], pool[1])]
        if not pairs:
            raise _UsageError("no pair to take an inner product of")
        for a, b in pairs:
            out.extend(run_directive(spec, Directive("inner", {"kind": args.kind, "a": a, "b": b}), rng))
    elif cmd == "abl":
        ds = _select(spec, "abl")
        if not ds:
            raise _UsageError("the file has no abl directive")
        for d in ds:
            out.extend(run_directive(spec, d, rng))
    elif cmd == "isomap":
        if args.dir == "mts2eh":
            out = [mts_to_history(m, spec.bridging) for m in spec.mts.values()]
        else:
            out = [history_to_mts(h) for h in spec.histories.values()]
        if not out:
            raise _UsageError("nothing to map")
    elif cmd == "ptrace":
        ds = _select(spec, "ptrace")
        if not ds:
            raise _UsageError("the file has no ptrace directive")
        for d in ds:
            out.extend(run_directive(spec, d, rng))
    elif cmd == "check-family":
        ds = _select(spec, "check") or [Directive("check", {"family": f}) for f in spec.families]
        if not ds:
            raise _UsageError("the file declares no family")
        for d in ds:
            out.extend(run_directive(spec, d, rng))
    return out


def _emit(results: Sequence[Any], fmt: str, header: str | None) -> str:
    if fmt == "canonical":
        body = dumps([to_dict(r) for r in results]) if len(results) != 1 else serialize(results[0])
        return body + "\n"
    lines = [header] if header else []
    lines += [table(r) for r in results]
    return "\n".join(lines) + "\n"


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_DIAG
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_DIAG

    for name, default in (("format", "table"), ("output", None), ("seed", DEFAULT_SEED)):
        if not hasattr(args, name):
            setattr(args, name, default)
    seed = args.seed
    rng = np.random.default_rng(seed)
    header = None
    try:
        if args.command == "run-protocol":
            d = Directive("run", {"protocol": args.protocol})
            results = list(run_directive(None, d, rng))
            if args.protocol == "generation":
                header = f"seed: {seed}"
        elif args.command == "verify-iso":
            if args.samples < 1 or args.slots < 1 or args.dim < 1:
                raise _UsageError("samples, slots and dim must be positive")
            sample = random_mts_sample(rng, args.samples, args.slots, args.dim)
            results = [verify_isomorphism(sample)]
            header = f"seed: {seed}"
        else:
            spec, diags = _load(args.spec)
            if diags:
                for dg in diags:
                    print(f"{args.spec}:{dg}", file=sys.stderr)
                if args.format == "canonical":
                    print(serialize(Diagnostics(tuple(diags))), file=sys.stderr)
                return EXIT_DIAG
            results = _spec_results(args, spec, rng)
            if any(d.kind == "run" and d.args["protocol"] == "generation" for d in spec.directives) \
                    and args.command == "run":
                header = f"seed: {seed}"
    except DegeneracyError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (_UsageError, HistoryError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIAG

    text = _emit(results, args.format, header)
    if header and args.format == "canonical":
        print(header, file=sys.stderr)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
