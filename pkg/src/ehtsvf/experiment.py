"""Execution of parsed experiment directives."""

from __future__ import annotations

from typing import Any, Iterator

from .dsl import Directive, ExperimentSpec
from .histories import ConsistentFamily, check_family, k_inner, s_inner, weight
from .isomorphism import history_to_mts, mts_to_history
from .protocols import run_generation_scheme, run_tau_ghz, random_generation_params, spanning_bases
from .reduction import build_subsystem_family, partial_trace_time
from .serialize import AblResult, InnerResult, WeightResult
from .tsvf import abl_probability, mts_inner


def run_directive(spec: ExperimentSpec, d: Directive, rng=None) -> Iterator[Any]:
    a = d.args
    if d.kind == "weight":
        for name in a["histories"] or list(spec.histories):
            yield WeightResult(weight(spec.histories[name]), name)
    elif d.kind == "inner":
        if a["kind"] == "mts":
            value = mts_inner(spec.mts[a["a"]], spec.mts[a["b"]])
        else:
            fn = k_inner if a["kind"] == "k" else s_inner
            value = fn(spec.histories[a["a"]], spec.histories[a["b"]])
        yield InnerResult(a["kind"], value, a["a"], a["b"])
    elif d.kind == "abl":
        yield AblResult(tuple(abl_probability(a["pre"], a["post"], a["u1"], a["u2"], a["outcomes"])))
    elif d.kind == "ptrace":
        h = spec.histories[a["history"]]
        bases = None
        if a["bases"] == "spanning":
            dim = dict(spec.factors.factors[0])[a["factor"]]
            bases = spanning_bases(len(spec.grid), dim)
        fam = build_subsystem_family(spec.factors, a["factor"], h.bridging, bases)
        yield partial_trace_time(h, spec.factors, fam)
    elif d.kind == "check":
        members = [spec.histories[n] for n in spec.families[a["family"]]]
        yield check_family(ConsistentFamily.of(members))
    elif d.kind == "isomap":
        if "history" in a:
            yield history_to_mts(spec.histories[a["history"]])
        else:
            yield mts_to_history(spec.mts[a["mts"]], spec.bridging)
    elif d.kind == "run":
        if a["protocol"] == "tau-ghz":
            history, report = run_tau_ghz()
            yield history
            yield report
        else:
            yield run_generation_scheme(**random_generation_params(rng))[1]
    else:  # pragma: no cover - the parser only emits known kinds
        raise ValueError(f"unknown directive {d.kind!r}")
