"""Canonical JSON for every result type.

Keys are sorted, complex numbers are ``[re, im]`` pairs and floats are
written with Python's shortest round-tripping repr, so
``serialize(deserialize(serialize(x))) == serialize(x)`` and dyadic values
survive bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .dsl import Diagnostic
from .histories import BridgingSet, FamilyReport, HistoryBranch, HistoryState, TimeGrid
from .isomorphism import IsomorphismReport
from .protocols import GenerationComparison, OracleReport
from .reduction import MixedHistory
from .tsvf import MtsBranch, MultiTimeState, SlotDirection


@dataclass(frozen=True)
class WeightResult:
    value: float
    name: str = ""


@dataclass(frozen=True)
class InnerResult:
    kind: str  # "k", "s" or "mts"
    value: complex
    a: str = ""
    b: str = ""


@dataclass(frozen=True)
class AblResult:
    probabilities: tuple[float, ...]


@dataclass(frozen=True)
class Diagnostics:
    items: tuple[Diagnostic, ...]


def _c(z) -> list[float]:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def _uc(p) -> complex:
    return complex(float(p[0]), float(p[1]))


def _vec(v) -> list:
    return [_c(z) for z in np.asarray(v).ravel()]


def _uvec(rows) -> np.ndarray:
    return np.array([_uc(p) for p in rows], dtype=np.complex128)


def _mat(m) -> list:
    return [_vec(row) for row in np.asarray(m)]


def _umat(rows) -> np.ndarray:
    return np.array([[_uc(p) for p in row] for row in rows], dtype=np.complex128).reshape(len(rows), -1)


def _grid(g: TimeGrid) -> dict:
    return {"labels": list(g.labels), "dims": list(g.dims)}


def _ugrid(d) -> TimeGrid:
    return TimeGrid(tuple(d["labels"]), tuple(int(x) for x in d["dims"]))


def _history(h: HistoryState) -> dict:
    branches = sorted(h.branches, key=lambda b: (b.fingerprint(), b.amplitude.real, b.amplitude.imag))
    return {
        "kind": "history",
        "grid": _grid(h.grid),
        "bridging": [_mat(s) for s in h.bridging.steps],
        "branches": [
            {"amplitude": _c(b.amplitude), "ops": [_mat(o) for o in b.ops], "general": b.general}
            for b in branches
        ],
    }


def _uhistory(d) -> HistoryState:
    grid = _ugrid(d["grid"])
    bridging = BridgingSet(grid, tuple(_umat(s) for s in d["bridging"]), tol=1e-8)
    branches = tuple(HistoryBranch(_uc(b["amplitude"]), tuple(_umat(o) for o in b["ops"]))
                     for b in d["branches"])
    return HistoryState(grid, bridging, branches)


def _mts_key(b: MtsBranch):
    return tuple(tuple(np.round(np.concatenate([v.real, v.imag]), 12)) for _, v in b.slots)


def _mts(m: MultiTimeState) -> dict:
    return {
        "kind": "mts",
        "grid": _grid(m.grid),
        "directions": [d.value for d in m.pattern],
        "branches": [
            {"amplitude": _c(b.amplitude), "states": [_vec(v) for _, v in b.slots]}
            for b in sorted(m.branches, key=lambda b: (_mts_key(b), b.amplitude.real, b.amplitude.imag))
        ],
    }


def _umts(d) -> MultiTimeState:
    dirs = [SlotDirection.parse(x) for x in d["directions"]]
    branches = tuple(
        MtsBranch(_uc(b["amplitude"]), tuple(zip(dirs, (_uvec(v) for v in b["states"]))))
        for b in d["branches"]
    )
    return MultiTimeState(_ugrid(d["grid"]), branches)


def to_dict(obj: Any) -> dict:
    if isinstance(obj, WeightResult):
        return {"kind": "weight", "name": obj.name, "value": float(obj.value)}
    if isinstance(obj, InnerResult):
        return {"kind": "inner", "inner": obj.kind, "a": obj.a, "b": obj.b, "value": _c(obj.value)}
    if isinstance(obj, AblResult):
        return {"kind": "abl", "probabilities": [float(p) for p in obj.probabilities]}
    if isinstance(obj, HistoryState):
        return _history(obj)
    if isinstance(obj, MultiTimeState):
        return _mts(obj)
    if isinstance(obj, MixedHistory):
        comps = sorted(obj.components, key=lambda c: -c[0])
        return {
            "kind": "mixed_history",
            "source_weight": float(obj.source_weight),
            "components": [{"weight": float(w), "history": _history(h)} for w, h in comps],
        }
    if isinstance(obj, FamilyReport):
        return {
            "kind": "family_report",
            "exhaustiveness_residual": float(obj.exhaustiveness_residual),
            "max_offdiagonal": float(obj.max_offdiagonal),
            "tol": float(obj.tol),
            "verdict": obj.verdict,
        }
    if isinstance(obj, IsomorphismReport):
        return {
            "kind": "isomorphism_report",
            "n_states": obj.n_states,
            "additivity": float(obj.additivity),
            "phase_scaling": float(obj.phase_scaling),
            "general_scaling": float(obj.general_scaling),
            "inner_product": float(obj.inner_product),
        }
    if isinstance(obj, OracleReport):
        return {
            "kind": "tau_ghz_report",
            "state_deviation": {k: float(v) for k, v in obj.state_deviation.items()},
            "norms": {k: float(v) for k, v in obj.norms.items()},
            "probabilities": {k: float(v) for k, v in obj.probabilities.items()},
            "residuals": {k: [[float(x) for x in p] for p in v] for k, v in obj.residuals.items()},
            "computational_total": float(obj.computational_total),
            "history_s_norm": float(obj.history_s_norm),
            "history_weight": float(obj.history_weight),
            "mts_valid": bool(obj.mts_valid),
        }
    if isinstance(obj, GenerationComparison):
        return {
            "kind": "generation_report",
            "oracle": float(obj.oracle),
            "two_time": float(obj.two_time),
            "reduced": float(obj.reduced),
            "reduced_components": int(obj.reduced_components),
        }
    if isinstance(obj, Diagnostics):
        return {
            "kind": "diagnostics",
            "items": [{"line": d.line, "col": d.col, "message": d.message} for d in obj.items],
        }
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def from_dict(d: dict) -> Any:
    kind = d.get("kind")
    if kind == "weight":
        return WeightResult(float(d["value"]), d.get("name", ""))
    if kind == "inner":
        return InnerResult(d["inner"], _uc(d["value"]), d.get("a", ""), d.get("b", ""))
    if kind == "abl":
        return AblResult(tuple(float(p) for p in d["probabilities"]))
    if kind == "history":
        return _uhistory(d)
    if kind == "mts":
        return _umts(d)
    if kind == "mixed_history":
        comps = tuple((float(c["weight"]), _uhistory(c["history"])) for c in d["components"])
        return MixedHistory(comps, float(d["source_weight"]))
    if kind == "family_report":
        return FamilyReport(float(d["exhaustiveness_residual"]), float(d["max_offdiagonal"]), float(d["tol"]))
    if kind == "isomorphism_report":
        return IsomorphismReport(int(d["n_states"]), float(d["additivity"]), float(d["phase_scaling"]),
                                 float(d["general_scaling"]), float(d["inner_product"]))
    if kind == "tau_ghz_report":
        return OracleReport(dict(d["state_deviation"]), dict(d["norms"]), dict(d["probabilities"]),
                            {k: [list(p) for p in v] for k, v in d["residuals"].items()},
                            float(d["computational_total"]), float(d["history_s_norm"]),
                            float(d["history_weight"]), bool(d["mts_valid"]))
    if kind == "generation_report":
        return GenerationComparison(float(d["oracle"]), float(d["two_time"]), float(d["reduced"]),
                                    int(d["reduced_components"]))
    if kind == "diagnostics":
        return Diagnostics(tuple(Diagnostic(int(i["line"]), int(i["col"]), i["message"]) for i in d["items"]))
    raise ValueError(f"unknown kind {kind!r}")


def dumps(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def serialize(obj: Any) -> str:
    return dumps(to_dict(obj))


def serialize_many(objs: Sequence[Any]) -> str:
    return dumps([to_dict(o) for o in objs])


def deserialize(text: str) -> Any:
    data = json.loads(text)
    if isinstance(data, list):
        return [from_dict(d) for d in data]
    return from_dict(data)
