"""Parser for the experiment description language (``.ehs`` files).

The grammar is LL(1) and documented in ``docs/grammar.md``. Parsing is
total: any input string yields either a resolved :class:`ExperimentSpec` or
a list of positioned diagnostics, never an exception.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import linalg as la
from .histories import BridgingSet, HistoryBranch, HistoryState, TimeGrid
from .reduction import CompositeGrid
from .tsvf import BWD, FWD, MtsBranch, MultiTimeState

MAX_DEPTH = 48

_REAL = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_NUM_RE = re.compile(rf"({_REAL})(?:([+-])({_REAL})i|(i))?")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_PUNCT = set("[]{}()<>|,=.&:+-*@")

KEYWORDS = {"times", "dim", "dims", "factors", "state", "op", "bridge", "history", "mts",
            "family", "weight", "inner", "abl", "ptrace", "check", "isomap", "run"}
DIRECTIVES = ("weight", "inner", "abl", "ptrace", "check", "isomap", "run")


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def __str__(self):
        return f"{self.line}:{self.col}: {self.message}"


@dataclass(frozen=True)
class Token:
    kind: str  # NAME, SYM, NUM, NL, EOF or the punctuation text itself
    text: str
    line: int
    col: int
    value: Any = None


@dataclass
class Directive:
    kind: str
    args: dict
    line: int = 0
    col: int = 0


@dataclass
class ExperimentSpec:
    grid: TimeGrid
    bridging: BridgingSet
    factors: CompositeGrid | None = None
    states: dict[str, np.ndarray] = field(default_factory=dict)
    ops: dict[str, np.ndarray] = field(default_factory=dict)
    histories: dict[str, HistoryState] = field(default_factory=dict)
    mts: dict[str, MultiTimeState] = field(default_factory=dict)
    families: dict[str, list[str]] = field(default_factory=dict)
    directives: list[Directive] = field(default_factory=list)


@dataclass
class ParseResult:
    spec: ExperimentSpec | None
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return self.spec is not None


class _Error(Exception):
    def __init__(self, tok_or_pos, message: str):
        if isinstance(tok_or_pos, Token):
            self.line, self.col = tok_or_pos.line, tok_or_pos.col
        else:
            self.line, self.col = tok_or_pos
        self.message = message


def tokenize(text: str) -> tuple[list[Token], list[Diagnostic]]:
    toks: list[Token] = []
    diags: list[Diagnostic] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n" or c == ";":
            toks.append(Token("NL", c, line, col))
            i += 1
            if c == "\n":
                line, col = line + 1, 1
            else:
                col += 1
            continue
        if c in " \t\r\f\v":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c.isascii() and (c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit())):
            m = _NUM_RE.match(text, i)
            re_part, sign, im_part, pure = m.groups()
            if pure:
                val = complex(0, float(re_part))
            elif sign:
                val = complex(float(re_part), float(im_part) * (1 if sign == "+" else -1))
            else:
                val = complex(float(re_part), 0.0)
            if not (np.isfinite(val.real) and np.isfinite(val.imag)):
                diags.append(Diagnostic(line, col, f"number {m.group(0)!r} is out of range"))
            toks.append(Token("NUM", m.group(0), line, col, val))
            col += m.end() - i
            i = m.end()
            continue
        if c.isascii() and (c.isalpha() or c == "_"):
            m = _NAME_RE.match(text, i)
            word = m.group(0)
            end = m.end()
            if word in ("x", "y", "z") and end < n and text[end] in "+-":
                toks.append(Token("SYM", word + text[end], line, col))
                end += 1
            else:
                toks.append(Token("NAME", word, line, col))
            col += end - i
            i = end
            continue
        if c == "-" and i + 1 < n and text[i + 1] == ">":
            toks.append(Token("->", "->", line, col))
            i += 2
            col += 2
            continue
        if c == "⊙":
            toks.append(Token(".", c, line, col))
        elif c in _PUNCT:
            toks.append(Token(c, c, line, col))
        else:
            diags.append(Diagnostic(line, col, f"unexpected character {c!r}"))
        i += 1
        col += 1
    toks.append(Token("EOF", "", line, col))
    return toks, diags


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0
        self.depth = 0
        self.diags: list[Diagnostic] = []
        self.labels: list[str] | None = None
        self.dims: list[int] | None = None
        self.factors: list[tuple[str, int]] | None = None
        self.states: dict[str, np.ndarray] = {}
        self.ops: dict[str, np.ndarray] = {}
        self.bridges: dict[int, tuple[np.ndarray, Token]] = {}
        self.hist_terms: dict[str, tuple[list, Token]] = {}
        self.mts_terms: dict[str, tuple[list, Token]] = {}
        self.families: dict[str, list[str]] = {}
        self.directives: list[Directive] = []

    # -- token helpers -------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def advance(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def at(self, *kinds) -> bool:
        return self.tok.kind in kinds

    def at_word(self, word: str) -> bool:
        return self.tok.kind == "NAME" and self.tok.text == word

    def expect(self, kind: str, what: str | None = None) -> Token:
        if self.tok.kind != kind:
            raise _Error(self.tok, f"expected {what or repr(kind)}, found {self._describe(self.tok)}")
        return self.advance()

    def expect_close(self, kind: str, opener: Token) -> Token:
        if self.tok.kind != kind:
            raise _Error(opener, f"unclosed {opener.text!r}: expected {kind!r}, "
                                 f"found {self._describe(self.tok)}")
        return self.advance()

    @staticmethod
    def _describe(t: Token) -> str:
        if t.kind == "EOF":
            return "end of input"
        if t.kind == "NL":
            return "end of line"
        return repr(t.text)

    def name(self, what="a name") -> Token:
        t = self.expect("NAME", what)
        if t.text in KEYWORDS:
            raise _Error(t, f"{t.text!r} is a keyword and cannot be used as a name")
        return t

    def nest(self, opener: Token):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise _Error(opener, "expression nested too deeply")

    # -- top level -----------------------------------------------------
    def parse(self):
        while not self.at("EOF"):
            if self.at("NL"):
                self.advance()
                continue
            start = self.pos
            try:
                self.depth = 0
                self.statement()
                if not self.at("NL", "EOF"):
                    raise _Error(self.tok, f"unexpected {self._describe(self.tok)} after statement")
            except _Error as e:
                self.diags.append(Diagnostic(e.line, e.col, e.message))
                while not self.at("NL", "EOF"):
                    self.advance()
            except (ValueError, ArithmeticError) as e:
                # numeric trouble such as overflow while building a value
                first = self.toks[start]
                self.diags.append(Diagnostic(first.line, first.col, f"invalid value: {e}"))
                while not self.at("NL", "EOF"):
                    self.advance()
            if self.pos == start:
                self.advance()

    def statement(self):
        t = self.tok
        if t.kind in ("[", "{"):
            # parse the bare expression so bracket errors are reported precisely
            self.sum_of(self.history_term)
            raise _Error(t, "a history needs a declaration: history NAME = ...")
        if t.kind != "NAME":
            raise _Error(t, f"expected a statement, found {self._describe(t)}")
        handler = getattr(self, f"st_{t.text}", None)
        if handler is None or t.text not in KEYWORDS:
            raise _Error(t, f"unknown statement {t.text!r}")
        self.advance()
        handler(t)

    # -- declarations --------------------------------------------------
    def st_times(self, kw):
        if self.labels is not None:
            raise _Error(kw, "times already declared")
        labels = []
        while self.at("NAME", "NUM"):
            t = self.advance()
            if t.text in labels:
                raise _Error(t, f"duplicate time label {t.text!r}")
            labels.append(t.text)
        if not labels:
            raise _Error(self.tok, "expected at least one time label")
        self.labels = labels

    def _positive_int(self) -> int:
        t = self.expect("NUM", "a positive integer")
        v = t.value
        if v.imag != 0 or v.real != int(v.real) or v.real < 1 or v.real > la.MAX_DIM:
            raise _Error(t, "expected a positive integer")
        return int(v.real)

    def st_dim(self, kw):
        if self.dims is not None:
            raise _Error(kw, "dimensions already declared")
        d = self._positive_int()
        self.dims = [d] * len(self.labels) if self.labels else [d]
        self._dim_uniform = True

    def st_dims(self, kw):
        if self.dims is not None:
            raise _Error(kw, "dimensions already declared")
        dims = []
        while self.at("NUM"):
            dims.append(self._positive_int())
        if not dims:
            raise _Error(self.tok, "expected dimensions")
        if self.labels is not None and len(dims) != len(self.labels):
            raise _Error(kw, f"{len(dims)} dimensions for {len(self.labels)} times")
        self.dims = dims
        self._dim_uniform = False

    def st_factors(self, kw):
        if self.factors is not None:
            raise _Error(kw, "factors already declared")
        fs = []
        while self.at("NAME"):
            n = self.name("a factor label")
            self.expect(":")
            fs.append((n.text, self._positive_int()))
        if not fs:
            raise _Error(self.tok, "expected factor declarations such as S:2")
        self.factors = fs

    def _fresh(self, t: Token):
        taken = (self.states, self.ops, self.hist_terms, self.mts_terms, self.families)
        if any(t.text in table for table in taken):
            raise _Error(t, f"duplicate name {t.text!r}")
        if t.text in la.GATES:
            raise _Error(t, f"{t.text!r} is a built-in gate name")

    def st_state(self, kw):
        n = self.name("a state name")
        self._fresh(n)
        self.expect("=")
        self.states[n.text] = la.as_vector(self.state_expr())

    def st_op(self, kw):
        n = self.name("an operator name")
        self._fresh(n)
        self.expect("=")
        self.ops[n.text] = la.as_matrix(self.op_expr())

    def _label_index(self, t: Token) -> int:
        if self.labels is None:
            raise _Error(t, "declare times before bridging")
        if t.text not in self.labels:
            raise _Error(t, f"unknown time label {t.text!r}")
        return self.labels.index(t.text)

    def st_bridge(self, kw):
        a = self.advance()
        i = self._label_index(a)
        self.expect("->")
        b = self.advance()
        j = self._label_index(b)
        if j != i + 1:
            raise _Error(b, "bridging must link consecutive times")
        if i in self.bridges:
            raise _Error(a, f"bridging from {a.text!r} already declared")
        self.expect("=")
        start = self.tok
        self.bridges[i] = (la.as_matrix(self.op_expr()), start)

    def st_history(self, kw):
        n = self.name("a history name")
        self._fresh(n)
        self.expect("=")
        self.hist_terms[n.text] = (self.sum_of(self.history_term), n)

    def st_mts(self, kw):
        n = self.name("a multiple-time state name")
        self._fresh(n)
        self.expect("=")
        self.mts_terms[n.text] = (self.sum_of(self.mts_term), n)

    def st_family(self, kw):
        n = self.name("a family name")
        self._fresh(n)
        self.expect("=")
        members = [self.name("a history name")]
        while self.at(","):
            self.advance()
            members.append(self.name("a history name"))
        for m in members:
            if m.text not in self.hist_terms:
                raise _Error(m, f"unknown history {m.text!r}")
        self.families[n.text] = [m.text for m in members]

    # -- directives ----------------------------------------------------
    def _ref(self, table, what) -> str:
        t = self.name(what)
        if t.text not in table:
            raise _Error(t, f"unknown {what.split()[-1]} {t.text!r}")
        return t.text

    def _directive(self, kw, **args):
        self.directives.append(Directive(kw.text, args, kw.line, kw.col))

    def st_weight(self, kw):
        names = []
        while self.at("NAME"):
            names.append(self._ref(self.hist_terms, "a history"))
        self._directive(kw, histories=names)

    def st_inner(self, kw):
        k = self.expect("NAME", "an inner product kind (k, s or mts)")
        if k.text not in ("k", "s", "mts"):
            raise _Error(k, f"unknown inner product kind {k.text!r}")
        table = self.mts_terms if k.text == "mts" else self.hist_terms
        what = "a multiple-time state" if k.text == "mts" else "a history"
        a = self._ref(table, what)
        b = self._ref(table, what)
        self._directive(kw, kind=k.text, a=a, b=b)

    def st_abl(self, kw):
        args: dict[str, Any] = {}
        while self.at("NAME"):
            key = self.advance()
            if key.text in args:
                raise _Error(key, f"duplicate abl argument {key.text!r}")
            if key.text in ("pre", "post"):
                args[key.text] = la.as_vector(self.state_expr())
            elif key.text in ("u1", "u2"):
                args[key.text] = la.as_matrix(self.op_expr())
            elif key.text == "outcomes":
                outs = []
                while self.at("[", "{"):
                    outs.append(self.slot())
                if not outs:
                    raise _Error(self.tok, "expected outcome projectors such as [z+]")
                args["outcomes"] = outs
            else:
                raise _Error(key, f"unknown abl argument {key.text!r}")
        for need in ("pre", "post", "outcomes"):
            if need not in args:
                raise _Error(kw, f"abl needs '{need}'")
        d = args["pre"].size
        args.setdefault("u1", la.identity(d))
        args.setdefault("u2", la.identity(d))
        for key in ("post",):
            if args[key].size != d:
                raise _Error(kw, "pre and post states differ in dimension")
        for m in [args["u1"], args["u2"], *args["outcomes"]]:
            if m.shape != (d, d):
                raise _Error(kw, f"operator of shape {m.shape} does not act on dimension {d}")
        self._directive(kw, **args)

    def st_ptrace(self, kw):
        h = self._ref(self.hist_terms, "a history")
        over = self.expect("NAME", "'over'")
        if over.text != "over":
            raise _Error(over, "expected 'over'")
        f = self.expect("NAME", "a factor label")
        if self.factors is None:
            raise _Error(f, "declare factors before ptrace")
        if f.text not in [n for n, _ in self.factors]:
            raise _Error(f, f"unknown factor {f.text!r}")
        bases = "computational"
        if self.at_word("bases"):
            self.advance()
            b = self.expect("NAME", "computational or spanning")
            if b.text not in ("computational", "spanning"):
                raise _Error(b, f"unknown basis choice {b.text!r}")
            bases = b.text
        self._directive(kw, history=h, factor=f.text, bases=bases)

    def st_check(self, kw):
        self._directive(kw, family=self._ref(self.families, "a family"))

    def st_isomap(self, kw):
        t = self.name("a history or multiple-time state")
        if t.text in self.hist_terms:
            self._directive(kw, history=t.text)
        elif t.text in self.mts_terms:
            self._directive(kw, mts=t.text)
        else:
            raise _Error(t, f"unknown history or multiple-time state {t.text!r}")

    def st_run(self, kw):
        first = self.expect("NAME", "a protocol name")
        parts = [first.text]
        while self.at("-"):
            self.advance()
            parts.append(self.expect("NAME", "a protocol name").text)
        proto = "-".join(parts)
        if proto not in ("tau-ghz", "generation"):
            raise _Error(first, f"unknown protocol {proto!r}")
        self._directive(kw, protocol=proto)

    # -- expressions ---------------------------------------------------
    def sum_of(self, term):
        terms = [term(1.0)]
        while self.at("+", "-"):
            sign = 1.0 if self.advance().kind == "+" else -1.0
            terms.append(term(sign))
        return terms

    def amplitude(self, sign: float) -> complex:
        amp = complex(sign)
        if self.at("NUM"):
            amp *= self.advance().value
            if self.at("*"):
                self.advance()
        return amp

    def state_expr(self) -> np.ndarray:
        start = self.tok
        terms = self.sum_of(self.state_term)
        dims = {t.size for t in terms}
        if len(dims) > 1:
            raise _Error(start, "state terms have different dimensions")
        return sum(terms)

    def state_term(self, sign):
        amp = self.amplitude(sign)
        v = self.state_factor()
        while self.at("&"):
            amp_tok = self.advance()
            w = self.state_factor()
            if v.size * w.size > la.MAX_DIM:
                raise _Error(amp_tok, "state dimension exceeds the maximum")
            v = np.kron(v, w)
        return amp * v

    def state_factor(self) -> np.ndarray:
        t = self.tok
        if t.kind == "SYM":
            self.advance()
            return np.array(la.STATES[t.text])
        if t.kind == "NAME":
            self.advance()
            if t.text in self.states:
                return np.array(self.states[t.text])
            raise _Error(t, f"unknown state {t.text!r}")
        if t.kind == "(":
            opener = self.advance()
            self.nest(opener)
            entries = [self.number()]
            while self.at(","):
                self.advance()
                entries.append(self.number())
            self.expect_close(")", opener)
            self.depth -= 1
            return np.array(entries, dtype=np.complex128)
        raise _Error(t, f"expected a state, found {self._describe(t)}")

    def number(self) -> complex:
        sign = 1.0
        if self.at("+", "-"):
            sign = 1.0 if self.advance().kind == "+" else -1.0
        return sign * self.expect("NUM", "a number").value

    def op_expr(self) -> np.ndarray:
        start = self.tok
        terms = self.sum_of(self.op_term)
        shapes = {t.shape for t in terms}
        if len(shapes) > 1:
            raise _Error(start, "operator terms have different shapes")
        return sum(terms)

    def op_term(self, sign):
        amp = self.amplitude(sign)
        m = self.op_factor()
        while self.at("&"):
            amp_tok = self.advance()
            w = self.op_factor()
            if m.shape[0] * w.shape[0] > la.MAX_DIM:
                raise _Error(amp_tok, "operator dimension exceeds the maximum")
            m = np.kron(m, w)
        return amp * m

    def op_factor(self) -> np.ndarray:
        t = self.tok
        if t.kind == "NAME":
            self.advance()
            if t.text in self.ops:
                return np.array(self.ops[t.text])
            if t.text in la.GATES:
                gate = np.array(la.GATES[t.text])
                if self.at("@"):
                    return self.placed_gate(t, gate)
                return gate
            raise _Error(t, f"unknown operator {t.text!r}")
        if t.kind == "[":
            opener = self.advance()
            self.nest(opener)
            v = self.state_expr()
            self.expect_close("]", opener)
            self.depth -= 1
            if not np.any(v):
                raise _Error(opener, "cannot project onto the zero vector")
            return np.array(la.projector(v))
        if t.kind == "(":
            opener = self.advance()
            self.nest(opener)
            rows = [self.matrix_row()]
            while self.at(","):
                self.advance()
                rows.append(self.matrix_row())
            self.expect_close(")", opener)
            self.depth -= 1
            if len({len(r) for r in rows}) != 1 or len(rows) != len(rows[0]):
                raise _Error(opener, "matrix literal must be square")
            return np.array(rows, dtype=np.complex128)
        raise _Error(t, f"expected an operator, found {self._describe(t)}")

    def placed_gate(self, name: Token, gate: np.ndarray) -> np.ndarray:
        """``G@(t0, t1):n`` places gate G on qubits t0, t1 of an n-qubit register."""
        self.advance()
        opener = self.expect("(", "a target list such as (0, 1)")
        targets = [self._count()]
        while self.at(","):
            self.advance()
            targets.append(self._count())
        self.expect_close(")", opener)
        self.expect(":", "':' and a qubit count")
        tok = self.tok
        n = self._positive_int()
        if 2 ** n > la.MAX_DIM:
            raise _Error(tok, "too many qubits")
        if gate.shape[0] != 2 ** len(targets):
            raise _Error(name, f"{name.text} acts on {gate.shape[0].bit_length() - 1} qubits, "
                               f"{len(targets)} targets given")
        if len(set(targets)) != len(targets) or max(targets) >= n:
            raise _Error(opener, f"invalid targets {targets} for {n} qubits")
        return la.embed(gate, targets, n)

    def _count(self) -> int:
        t = self.expect("NUM", "a qubit index")
        v = t.value
        if v.imag != 0 or v.real != int(v.real) or v.real < 0 or v.real >= 64:
            raise _Error(t, "expected a qubit index")
        return int(v.real)

    def matrix_row(self) -> list[complex]:
        opener = self.expect("(", "a matrix row such as (1, 0)")
        row = [self.number()]
        while self.at(","):
            self.advance()
            row.append(self.number())
        self.expect_close(")", opener)
        return row

    def slot(self) -> np.ndarray:
        t = self.tok
        if t.kind == "[":
            return self.op_factor()
        if t.kind == "{":
            opener = self.advance()
            self.nest(opener)
            m = self.op_expr()
            self.expect_close("}", opener)
            self.depth -= 1
            return m
        raise _Error(t, f"expected a history slot '[state]' or '{{operator}}', found {self._describe(t)}")

    def history_term(self, sign):
        start = self.tok
        amp = self.amplitude(sign)
        slots = [self.slot()]
        while self.at("."):
            self.advance()
            slots.append(self.slot())
        return amp, slots[::-1], start

    def mts_term(self, sign):
        start = self.tok
        amp = self.amplitude(sign)
        slots = []
        while self.at("<", "|"):
            opener = self.advance()
            self.nest(opener)
            v = self.state_expr()
            if opener.kind == "<":
                self.expect_close("|", opener)
                slots.append((BWD, v))
            else:
                self.expect_close(">", opener)
                slots.append((FWD, v))
            self.depth -= 1
        if not slots:
            raise _Error(self.tok, f"expected '<state|' or '|state>', found {self._describe(self.tok)}")
        return amp, slots[::-1], start

    # -- resolution ----------------------------------------------------
    def finish(self) -> ExperimentSpec | None:
        if self.diags:
            return None
        try:
            return self._resolve()
        except _Error as e:
            self.diags.append(Diagnostic(e.line, e.col, e.message))
        except (ValueError, ArithmeticError) as e:
            self.diags.append(Diagnostic(1, 1, f"invalid value: {e}"))
        return None

    def _resolve(self) -> ExperimentSpec:
        first = next(iter(self.hist_terms.values()), None) or next(iter(self.mts_terms.values()), None)
        if self.labels is None:
            n = len(first[0][0][1]) if first else 2
            self.labels = [f"t{i}" for i in range(n)]
        n = len(self.labels)
        if self.dims is None:
            if first:
                term = first[0][0][1]
                sizes = [(s[1].size if isinstance(s, tuple) else s.shape[0]) for s in term]
                self.dims = sizes if len(sizes) == n else [sizes[0]] * n
            else:
                self.dims = [2] * n
        elif getattr(self, "_dim_uniform", False) and len(self.dims) != n:
            self.dims = [self.dims[0]] * n
        if len(self.dims) != n:
            raise _Error((1, 1), f"{len(self.dims)} dimensions for {n} times")
        grid = TimeGrid(tuple(self.labels), tuple(self.dims))
        steps = []
        for i in range(n - 1):
            if i in self.bridges:
                m, tok = self.bridges[i]
                if m.shape != (self.dims[i + 1], self.dims[i]):
                    raise _Error(tok, f"bridging operator of shape {m.shape} between "
                                      f"dimensions {self.dims[i]} and {self.dims[i + 1]}")
                if not la.is_unitary(m, 1e-8):
                    raise _Error(tok, "bridging operator is not unitary")
                steps.append(m)
            else:
                if self.dims[i] != self.dims[i + 1]:
                    raise _Error((1, 1), f"missing bridging between {self.labels[i]} and {self.labels[i + 1]}")
                steps.append(np.eye(self.dims[i]))
        bridging = BridgingSet(grid, tuple(steps), tol=1e-8)
        factors = None
        if self.factors is not None:
            prod = int(np.prod([d for _, d in self.factors]))
            if any(d != prod for d in self.dims):
                raise _Error((1, 1), f"factor dimensions multiply to {prod}, not the slot dimension")
            factors = CompositeGrid.uniform(grid, self.factors)
        spec = ExperimentSpec(grid, bridging, factors, dict(self.states), dict(self.ops))
        for name, (terms, tok) in self.hist_terms.items():
            branches = []
            for amp, slots, start in terms:
                self._check_slots(start, [s.shape[0] for s in slots], n, slots_are_ops=True)
                branches.append(HistoryBranch(amp, tuple(slots)))
            spec.histories[name] = HistoryState(grid, bridging, tuple(branches))
        for name, (terms, tok) in self.mts_terms.items():
            branches = []
            pattern = None
            for amp, slots, start in terms:
                self._check_slots(start, [v.size for _, v in slots], n)
                p = tuple(d for d, _ in slots)
                if pattern is not None and p != pattern:
                    raise _Error(start, "branches have different bra/ket patterns")
                pattern = p
                branches.append(MtsBranch(amp, tuple(slots)))
            spec.mts[name] = MultiTimeState(grid, tuple(branches))
        spec.families = dict(self.families)
        spec.directives = list(self.directives)
        return spec

    def _check_slots(self, tok, sizes, n, slots_are_ops=False):
        if len(sizes) != n:
            raise _Error(tok, f"{len(sizes)} slots for {n} times")
        for i, (s, d) in enumerate(zip(sizes[::1], self.dims)):
            if s != d:
                raise _Error(tok, f"slot at {self.labels[i]} has dimension {s}, expected {d}")


def parse(text: str | bytes) -> ParseResult:
    """Parse an experiment description; never raises."""
    try:
        if isinstance(text, (bytes, bytearray)):
            text = bytes(text).decode("utf-8", errors="replace")
        tokens, diags = tokenize(text)
        if diags:
            return ParseResult(None, diags)
        p = _Parser(tokens)
        with np.errstate(all="ignore"):
            p.parse()
            spec = p.finish()
        return ParseResult(spec, p.diags)
    except Exception as exc:  # pragma: no cover - guarded by the fuzz tests
        return ParseResult(None, [Diagnostic(0, 0, f"internal error: {type(exc).__name__}: {exc}")])
