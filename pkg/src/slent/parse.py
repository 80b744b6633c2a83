"""Surface syntax: problem files, extended sequent strings, and printing.

Grammar (comments run from '#' to end of line):

    problem  := "ncell" INT ";" preddef* query
    preddef  := "pred" ID "(" ids ")" ":=" clause ("|" clause)* ";"
    clause   := ["ex" ids "."] atom (("&"|"*") atom)*
    query    := "entail" sheap "|-" sheap ("," sheap)* ";"
    atom     := term "=" term | term "!=" term | "emp"
              | term "->" "(" terms ")" | predchain
    predchain:= ID "(" terms ")" ("-*s" ID "(" terms ")")*
    term     := ID | "nil"

Extended annotations (sequent strings in proofs/traces): "up{x,…}" prefixes an
antecedent, "dn{x,…}"/"uup{x,…}" attach to a spatial atom after "&", a leading
"uup{y,…}" conjunct in a disjunct marks which bound variables are the
not-allocated-not-leaf existentials.  A wand chain "Q1(a⃗) -*s Q2(b⃗) -*s P(t⃗)"
denotes the residual predicate with head P and combined arguments t⃗ a⃗ b⃗.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .syntax import (
    NIL, AnnotatedAtom, Antecedent, DefClause, DefEnv, Disjunct, Entailment,
    Pred, PredCall, PredSym, PointsTo, eq, ne, pure, show_antecedent,
    show_annotated, show_atom, show_disjunct, show_entailment, show_pure_atom,
    wf_check,
)

KEYWORDS = {"ncell", "pred", "entail", "ex", "emp", "nil", "up", "dn", "uup"}

_TOKEN = re.compile(
    r"""(?P<ws>\s+)
      | (?P<comment>\#[^\n]*)
      | (?P<wand>-\*s)
      | (?P<arrow>->)
      | (?P<turnstile>\|-)
      | (?P<assign>:=)
      | (?P<neq>!=)
      | (?P<id>[A-Za-z_][A-Za-z0-9_']*)
      | (?P<int>\d+)
      | (?P<punct>[;(){},.|&*=])
    """,
    re.VERBOSE,
)


class ParseError(Exception):
    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.message = message


class WellFormednessError(Exception):
    def __init__(self, report):
        super().__init__("; ".join(
            f"{v.pred}[{v.clause}]: {v.condition} ({v.detail})" for v in report))
        self.report = report


@dataclass(frozen=True)
class Problem:
    env: DefEnv
    query: Entailment


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list:
    toks = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(line, col, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        val = m.group()
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, val, line, col))
        nl = val.count("\n")
        if nl:
            line += nl
            col = len(val) - val.rfind("\n")
        else:
            col += len(val)
        pos = m.end()
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, k: int = 0) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def fail(self, msg: str, tok: _Tok = None):
        tok = tok or self.peek()
        raise ParseError(tok.line, tok.col, msg)

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text:
            self.fail(f"expected {text!r}, found {t.text!r}")
        return self.next()

    def at(self, text: str) -> bool:
        return self.peek().text == text

    def ident(self, what: str = "identifier") -> str:
        t = self.peek()
        if t.kind != "id" or t.text in KEYWORDS:
            self.fail(f"expected {what}, found {t.text!r}")
        return self.next().text

    # -- shared pieces ----------------------------------------------------

    def id_list(self) -> tuple:
        out = [self.ident("variable")]
        while self.at(","):
            self.next()
            out.append(self.ident("variable"))
        return tuple(out)

    def term(self) -> str:
        t = self.peek()
        if t.text == "nil":
            self.next()
            return NIL
        return self.ident("term")

    def term_list(self) -> tuple:
        self.expect("(")
        out = []
        if not self.at(")"):
            out.append(self.term())
            while self.at(","):
                self.next()
                out.append(self.term())
        self.expect(")")
        return tuple(out)

    def varset(self, kw: str) -> frozenset:
        self.expect(kw)
        self.expect("{")
        out = set()
        if not self.at("}"):
            out.add(self.ident("variable"))
            while self.at(","):
                self.next()
                out.add(self.ident("variable"))
        self.expect("}")
        return frozenset(out)

    def atom(self):
        """Returns ("pure", atom) | ("emp",) | ("spatial", SpatialAtom)."""
        t = self.peek()
        if t.text == "emp":
            self.next()
            return ("emp",)
        if t.kind == "id" and t.text not in KEYWORDS and self.peek(1).text == "(" \
                and self.peek(2).text != "=" :
            # predicate call or wand chain (lookahead settled below)
            save = self.i
            name = self.next().text
            args = self.term_list()
            comps = [(name, args)]
            while self.at("-*s"):
                self.next()
                nm = self.ident("predicate")
                comps.append((nm, self.term_list()))
            if self.peek().text in ("=", "!="):
                # it was actually a term followed by =: impossible since terms
                # have no parentheses; report clearly
                self.i = save
                self.fail("predicate call cannot appear in a pure atom")
            head_name, head_args = comps[-1]
            wand_comps = comps[:-1]
            sym = PredSym(head_name, tuple((n, len(a)) for n, a in wand_comps))
            combined = tuple(head_args) + tuple(t for _, a in wand_comps for t in a)
            return ("spatial", PredCall(sym, combined))
        first = self.term()
        op = self.peek()
        if op.text == "=":
            self.next()
            return ("pure", eq(first, self.term()))
        if op.text == "!=":
            self.next()
            return ("pure", ne(first, self.term()))
        if op.text == "->":
            self.next()
            return ("spatial", PointsTo(first, self.term_list()))
        self.fail(f"expected '=', '!=' or '->' after term {first!r}")

    def body(self):
        """Parse atoms joined by '&'/'*' with optional dn/uup annotations.

        Returns (pure_atoms, annotated_spatial, saw_emp).
        """
        pure_atoms = set()
        spatial = []
        saw_emp = False
        while True:
            if self.peek().text in ("dn", "uup") and self.peek(1).text == "{":
                if self.peek().text == "dn":
                    if not spatial:
                        self.fail("dn{...} must follow a spatial atom")
                    s = self.varset("dn")
                    a = spatial[-1]
                    spatial[-1] = AnnotatedAtom(a.atom, a.defined | s, a.unrelated)
                else:
                    if not spatial:
                        self.fail("uup{...} must follow a spatial atom")
                    s = self.varset("uup")
                    a = spatial[-1]
                    spatial[-1] = AnnotatedAtom(a.atom, a.defined, a.unrelated | s)
            else:
                a = self.atom()
                if a[0] == "pure":
                    pure_atoms.add(a[1])
                elif a[0] == "emp":
                    saw_emp = True
                else:
                    spatial.append(AnnotatedAtom(a[1]))
            if self.peek().text in ("&", "*"):
                self.next()
                continue
            break
        return pure(pure_atoms), tuple(spatial), saw_emp

    def sheap(self):
        """["ex" ids "."] [uup{...} "&"] body -> Disjunct."""
        ex = ()
        if self.at("ex"):
            self.next()
            ex = self.id_list()
            self.expect(".")
        uup = frozenset()
        if self.peek().text == "uup" and self.peek(1).text == "{":
            uup = self.varset("uup")
            for y in uup:
                if y not in ex:
                    self.fail(f"uup variable {y!r} is not bound by ex")
            self.expect("&")
        p, sp, _ = self.body()
        cells = tuple(x for x in ex if x not in uup)
        unrel = tuple(x for x in ex if x in uup)
        return Disjunct(cells, unrel, p, sp)

    # -- problems ---------------------------------------------------------

    def preddef(self, n_cell: int) -> Pred:
        self.expect("pred")
        name = self.ident("predicate name")
        self.expect("(")
        params = self.id_list()
        self.expect(")")
        self.expect(":=")
        clauses = [self.clause(params)]
        while self.at("|"):
            self.next()
            clauses.append(self.clause(params))
        self.expect(";")
        return Pred(name, params, tuple(clauses))

    def clause(self, params: tuple) -> DefClause:
        tok = self.peek()
        ex = ()
        if self.at("ex"):
            self.next()
            ex = self.id_list()
            self.expect(".")
        p, sp, saw_emp = self.body()
        cells = [a.atom for a in sp if isinstance(a.atom, PointsTo)]
        children = [a.atom for a in sp if isinstance(a.atom, PredCall)]
        if len(cells) != 1:
            self.fail("each definition clause needs exactly one '->' atom", tok)
        if saw_emp and (cells or children):
            self.fail("emp cannot be combined with spatial atoms in a clause", tok)
        for a in sp:
            if a.defined or a.unrelated:
                self.fail("annotations are not allowed in definitions", tok)
        return DefClause(ex, p, cells[0], tuple(children))

    def problem(self) -> Problem:
        self.expect("ncell")
        t = self.peek()
        if t.kind != "int":
            self.fail("expected cell width")
        n_cell = int(self.next().text)
        if n_cell < 1:
            self.fail("cell width must be positive", t)
        self.expect(";")
        preds = {}
        while self.at("pred"):
            p = self.preddef(n_cell)
            if p.name in preds:
                self.fail(f"predicate {p.name!r} defined twice")
            preds[p.name] = p
        env = DefEnv(n_cell, preds)
        report = wf_check(env)
        if report:
            raise WellFormednessError(report)
        self.expect("entail")
        tok = self.peek()
        ante = self.sheap()
        if ante.ex_cells or ante.ex_unrelated:
            self.fail("the antecedent of a query cannot bind variables", tok)
        self.expect("|-")
        if self.at(";"):
            self.fail("empty succedent")
        succ = [self.sheap()]
        while self.at(","):
            self.next()
            succ.append(self.sheap())
        self.expect(";")
        query = Entailment(Antecedent(frozenset(), ante.pure, ante.spatial),
                           frozenset(succ))
        self._check_arities(env, query, tok)
        return Problem(env, query)

    def _check_arities(self, env: DefEnv, j: Entailment, tok: _Tok):
        def chk_atoms(sp):
            for a in sp:
                if isinstance(a.atom, PointsTo):
                    if len(a.atom.contents) != env.n_cell:
                        self.fail(f"'->' atom has {len(a.atom.contents)} fields, "
                                  f"cell width is {env.n_cell}", tok)
                else:
                    sym = a.atom.sym
                    for nm, k in ((sym.head, None), *sym.wands):
                        if nm not in env.preds:
                            self.fail(f"unknown predicate {nm!r}", tok)
                        if k is not None and k != env.preds[nm].arity:
                            self.fail(f"{nm} expects {env.preds[nm].arity} args, got {k}",
                                      tok)
                    want = env.preds[sym.head].arity + sum(k for _, k in sym.wands)
                    if len(a.atom.args) != want:
                        self.fail(f"{sym.head} call expects {want} args, "
                                  f"got {len(a.atom.args)}", tok)
        chk_atoms(j.ante.spatial)
        for d in j.succ:
            chk_atoms(d.spatial)

    def entailment(self) -> Entailment:
        undef = frozenset()
        if self.peek().text == "up" and self.peek(1).text == "{":
            undef = self.varset("up")
            self.expect("&")
        p, sp, _ = self.body()
        ante = Antecedent(undef, p, sp)
        self.expect("|-")
        succ = []
        if self.peek().kind != "eof":
            succ.append(self.sheap())
            while self.at(","):
                self.next()
                succ.append(self.sheap())
        return Entailment(ante, frozenset(succ))


def parse_problem(text: str) -> Problem:
    p = _Parser(text)
    prob = p.problem()
    if p.peek().kind != "eof":
        p.fail("trailing input after query")
    return prob


def parse_entailment(text: str) -> Entailment:
    """Parse an extended-language sequent (as printed into proofs/traces)."""
    p = _Parser(text)
    j = p.entailment()
    if p.peek().kind != "eof":
        p.fail("trailing input after entailment")
    return j


# ---------------------------------------------------------------------------
# Printing

def print_clause(c: DefClause) -> str:
    parts = [show_pure_atom(a) for a in sorted(c.pure)]
    sp = " * ".join([show_atom(c.cell), *(show_atom(ch) for ch in c.children)])
    parts.append(sp)
    s = " & ".join(parts)
    if c.ex:
        s = "ex " + ",".join(c.ex) + " . " + s
    return s


def print_pred(p: Pred) -> str:
    clauses = " | ".join(print_clause(c) for c in p.clauses)
    return f"pred {p.name}({','.join(p.params)}) := {clauses};"


def print_query(j: Entailment) -> str:
    succ = " , ".join(sorted(show_disjunct(d) for d in j.succ))
    return f"entail {show_antecedent(j.ante)} |- {succ};"


def print_problem(p: Problem) -> str:
    lines = [f"ncell {p.env.n_cell};"]
    lines.extend(print_pred(pred) for pred in p.env.preds.values())
    lines.append(print_query(p.query))
    return "\n".join(lines) + "\n"


def print_syntax(x) -> str:
    """Deterministic rendering of any syntax value."""
    if isinstance(x, Problem):
        return print_problem(x)
    if isinstance(x, Entailment):
        return show_entailment(x)
    if isinstance(x, Antecedent):
        return show_antecedent(x)
    if isinstance(x, Disjunct):
        return show_disjunct(x)
    if isinstance(x, AnnotatedAtom):
        return show_annotated(x)
    if isinstance(x, (PointsTo, PredCall)):
        return show_atom(x)
    if isinstance(x, DefClause):
        return print_clause(x)
    if isinstance(x, Pred):
        return print_pred(x)
    if isinstance(x, tuple) and len(x) == 3 and x[0] in ("eq", "ne"):
        return show_pure_atom(x)
    raise TypeError(f"cannot print {type(x).__name__}")
