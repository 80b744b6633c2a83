"""Abstract syntax for symbolic-heap entailments with inductive definitions.

Terms are plain strings; the constant ``nil`` is the reserved name "nil".
Pure formulas are frozensets of normalized (op, t, u) atoms.  Spatial formulas
are sequences of annotated atoms; the empty sequence encodes emp.  Inductive
definitions live in a DefEnv; predicate symbols may carry a chain of strong
wands (residual predicates).
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

NIL = "nil"

Term = str  # a variable name, or NIL
PureAtom = tuple[str, Term, Term]  # ("eq"|"ne", t, u), operands ordered
Pure = frozenset  # frozenset[PureAtom]

EMPTY_PURE: Pure = frozenset()


def is_var(t: Term) -> bool:
    return t != NIL


def _order(t: Term, u: Term) -> tuple[Term, Term]:
    # nil sorts first, then lexicographic
    ka = (t != NIL, t)
    kb = (u != NIL, u)
    return (t, u) if ka <= kb else (u, t)


def eq(t: Term, u: Term) -> PureAtom:
    t, u = _order(t, u)
    return ("eq", t, u)


def ne(t: Term, u: Term) -> PureAtom:
    t, u = _order(t, u)
    return ("ne", t, u)


def pure(atoms: Iterable[PureAtom] = ()) -> Pure:
    """Normalize: drop trivial t=t atoms (t≠t is kept; it means false)."""
    out = set()
    for op, t, u in atoms:
        if op == "eq" and t == u:
            continue
        out.add((op, *_order(t, u)))
    return frozenset(out)


def neq_block(left: Iterable[Term], right: Iterable[Term]) -> Pure:
    """All disequalities t ≠ u for t in left, u in right with t distinct from u."""
    out = set()
    for t in left:
        for u in right:
            if t != u:
                out.add(ne(t, u))
    return frozenset(out)


@dataclass(frozen=True)
class PredSym:
    """head base predicate, optionally preceded by a chain of strong wands.

    wands is a sequence of (base name, argument slot count); the combined call
    argument list is head args followed by each wand component's args in chain
    order.
    """

    head: str
    wands: tuple[tuple[str, int], ...] = ()

    @property
    def depth(self) -> int:
        return len(self.wands)


@dataclass(frozen=True)
class PointsTo:
    root: Term
    contents: tuple[Term, ...]


@dataclass(frozen=True)
class PredCall:
    sym: PredSym
    args: tuple[Term, ...]

    @property
    def root(self) -> Term:
        return self.args[0]

    def arg_groups(self) -> tuple[tuple[Term, ...], tuple[tuple[Term, ...], ...]]:
        """Split combined args into (head args, per-wand args)."""
        total_wand = sum(k for _, k in self.sym.wands)
        head = self.args[: len(self.args) - total_wand]
        rest = self.args[len(head):]
        groups = []
        for _, k in self.sym.wands:
            groups.append(rest[:k])
            rest = rest[k:]
        return head, tuple(groups)


SpatialAtom = Union[PointsTo, PredCall]


@dataclass(frozen=True)
class AnnotatedAtom:
    atom: SpatialAtom
    defined: frozenset = frozenset()    # X↓: allocated in this atom's footprint
    unrelated: frozenset = frozenset()  # X⇑: outside footprint and not a leaf of it

    @property
    def root(self) -> Term:
        return self.atom.root


def spatial_atom(atom: SpatialAtom, defined: Iterable[str] = (),
                 unrelated: Iterable[str] = ()) -> AnnotatedAtom:
    return AnnotatedAtom(atom, frozenset(defined), frozenset(unrelated))


@dataclass(frozen=True)
class Antecedent:
    undef: frozenset = frozenset()  # Y↑
    pure: Pure = EMPTY_PURE
    spatial: tuple[AnnotatedAtom, ...] = ()


@dataclass(frozen=True)
class Disjunct:
    ex_cells: tuple[str, ...] = ()      # ∃x⃗
    ex_unrelated: tuple[str, ...] = ()  # ∃y⃗⇑
    pure: Pure = EMPTY_PURE
    spatial: tuple[AnnotatedAtom, ...] = ()

    @property
    def bound(self) -> frozenset:
        return frozenset(self.ex_cells) | frozenset(self.ex_unrelated)


@dataclass(frozen=True)
class Entailment:
    ante: Antecedent
    succ: frozenset  # frozenset[Disjunct]


@dataclass(frozen=True)
class DefClause:
    ex: tuple[str, ...]
    pure: Pure
    cell: PointsTo
    children: tuple[PredCall, ...]


@dataclass(frozen=True)
class Pred:
    name: str
    params: tuple[str, ...]
    clauses: tuple[DefClause, ...]

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class DefEnv:
    n_cell: int
    preds: Mapping  # name -> Pred (insertion-ordered dict)

    @property
    def k_max(self) -> int:
        return max((p.arity for p in self.preds.values()), default=0)

    def pred(self, name: str) -> Pred:
        try:
            return self.preds[name]
        except KeyError:
            raise UnknownPredicate(name) from None


class UnknownPredicate(Exception):
    pass


class ArityMismatch(Exception):
    pass


# ---------------------------------------------------------------------------
# Free variables

def fv_term(t: Term) -> frozenset:
    return frozenset() if t == NIL else frozenset((t,))


def fv_pure(p: Pure) -> frozenset:
    out = set()
    for _, t, u in p:
        if t != NIL:
            out.add(t)
        if u != NIL:
            out.add(u)
    return frozenset(out)


def fv_atom(a: SpatialAtom) -> frozenset:
    if isinstance(a, PointsTo):
        return frozenset(t for t in (a.root, *a.contents) if t != NIL)
    return frozenset(t for t in a.args if t != NIL)


def fv_annotated(a: AnnotatedAtom) -> frozenset:
    return fv_atom(a.atom) | a.defined | a.unrelated


def fv_spatial(sp: Sequence[AnnotatedAtom]) -> frozenset:
    out = frozenset()
    for a in sp:
        out |= fv_annotated(a)
    return out


def fv_antecedent(psi: Antecedent) -> frozenset:
    return psi.undef | fv_pure(psi.pure) | fv_spatial(psi.spatial)


def fv_disjunct(d: Disjunct) -> frozenset:
    return (fv_pure(d.pure) | fv_spatial(d.spatial)) - d.bound


def fv_entailment(j: Entailment) -> frozenset:
    out = fv_antecedent(j.ante)
    for d in j.succ:
        out |= fv_disjunct(d)
    return out


# ---------------------------------------------------------------------------
# Roots / Cells / address variables

class UndefinedRoots:
    """Distinguished marker: a bound variable occurs as a root."""

    def __repr__(self) -> str:
        return "UndefinedRoots"


UNDEFINED_ROOTS = UndefinedRoots()


def roots_spatial(sp: Sequence[AnnotatedAtom]) -> frozenset:
    return frozenset(a.root for a in sp if a.root != NIL)


def cells_spatial(sp: Sequence[AnnotatedAtom]) -> frozenset:
    out = frozenset()
    for a in sp:
        out |= a.defined
    return out


def roots(f) -> Union[frozenset, UndefinedRoots]:
    if isinstance(f, Antecedent):
        return roots_spatial(f.spatial)
    if isinstance(f, Disjunct):
        r = roots_spatial(f.spatial)
        if r & f.bound:
            return UNDEFINED_ROOTS
        return r
    return roots_spatial(f)


def cells(f) -> frozenset:
    if isinstance(f, Antecedent):
        return cells_spatial(f.spatial)
    if isinstance(f, Disjunct):
        return cells_spatial(f.spatial) - f.bound
    return cells_spatial(f)


def addr(f) -> Union[frozenset, UndefinedRoots]:
    r = roots(f)
    if isinstance(r, UndefinedRoots):
        return r
    return r | cells(f)


# ---------------------------------------------------------------------------
# Substitution

Subst = Mapping  # variable -> Term


def sub_term(t: Term, th: Subst) -> Term:
    return th.get(t, t) if t != NIL else NIL


def sub_pure(p: Pure, th: Subst) -> Pure:
    return pure((op, sub_term(t, th), sub_term(u, th)) for op, t, u in p)


def sub_varset(xs: frozenset, th: Subst, *, drop_nil: bool = True) -> frozenset:
    out = set(sub_term(x, th) for x in xs)
    if drop_nil:
        out.discard(NIL)
    return frozenset(out)


def sub_atom(a: SpatialAtom, th: Subst) -> SpatialAtom:
    if isinstance(a, PointsTo):
        return PointsTo(sub_term(a.root, th), tuple(sub_term(t, th) for t in a.contents))
    return PredCall(a.sym, tuple(sub_term(t, th) for t in a.args))


def sub_annotated(a: AnnotatedAtom, th: Subst) -> AnnotatedAtom:
    return AnnotatedAtom(sub_atom(a.atom, th),
                         sub_varset(a.defined, th),
                         sub_varset(a.unrelated, th))


def sub_antecedent(psi: Antecedent, th: Subst) -> Antecedent:
    return Antecedent(sub_varset(psi.undef, th),
                      sub_pure(psi.pure, th),
                      tuple(sub_annotated(a, th) for a in psi.spatial))


def fresh_name(base: str, avoid: Iterable[str]) -> str:
    avoid = set(avoid)
    stem = base.rstrip("0123456789") or base
    i = 1
    while True:
        cand = f"{stem}{i}"
        if cand not in avoid and cand != NIL:
            return cand
        i += 1


def sub_disjunct(d: Disjunct, th: Subst) -> Disjunct:
    th = {k: v for k, v in th.items() if k not in d.bound}
    if not th:
        return d
    # capture avoidance: rename bound variables that collide with the image
    image = set()
    for v in th.values():
        if v != NIL:
            image.add(v)
    ren = {}
    avoid = set(image) | set(fv_disjunct(d)) | set(d.bound) | set(th)
    for b in (*d.ex_cells, *d.ex_unrelated):
        if b in image:
            nb = fresh_name(b, avoid)
            avoid.add(nb)
            ren[b] = nb
    if ren:
        d = Disjunct(tuple(ren.get(x, x) for x in d.ex_cells),
                     tuple(ren.get(y, y) for y in d.ex_unrelated),
                     sub_pure(d.pure, ren),
                     tuple(sub_annotated(a, ren) for a in d.spatial))
    return Disjunct(d.ex_cells, d.ex_unrelated,
                    sub_pure(d.pure, th),
                    tuple(sub_annotated(a, th) for a in d.spatial))


def sub_entailment(j: Entailment, th: Subst) -> Entailment:
    return Entailment(sub_antecedent(j.ante, th),
                      frozenset(sub_disjunct(d, th) for d in j.succ))


def substitute(f, th: Subst):
    if isinstance(f, Entailment):
        return sub_entailment(f, th)
    if isinstance(f, Antecedent):
        return sub_antecedent(f, th)
    if isinstance(f, Disjunct):
        return sub_disjunct(f, th)
    if isinstance(f, AnnotatedAtom):
        return sub_annotated(f, th)
    if isinstance(f, (PointsTo, PredCall)):
        return sub_atom(f, th)
    if isinstance(f, frozenset):
        return sub_pure(f, th)
    raise TypeError(f"cannot substitute in {type(f).__name__}")


# ---------------------------------------------------------------------------
# Definition well-formedness

@dataclass(frozen=True)
class WfViolation:
    pred: str
    clause: int  # index, or -1 for predicate-level problems
    condition: str
    detail: str


def wf_check(env: DefEnv) -> list:
    """Check strong connectivity, decisiveness, arities and cell widths.

    Returns a list of violations; empty means OK.
    """
    out = []
    for name, p in env.preds.items():
        if p.arity == 0:
            out.append(WfViolation(name, -1, "arity", "predicate needs a root parameter"))
            continue
        for i, c in enumerate(p.clauses):
            if c.cell.root != p.params[0]:
                out.append(WfViolation(name, i, "root",
                                       f"cell root {c.cell.root} is not the first parameter"))
            if len(c.cell.contents) != env.n_cell:
                out.append(WfViolation(name, i, "n_cell mismatch",
                                       f"cell width {len(c.cell.contents)} != {env.n_cell}"))
            child_roots = []
            for ch in c.children:
                if ch.sym.head not in env.preds:
                    out.append(WfViolation(name, i, "unknown predicate", ch.sym.head))
                    continue
                want = env.preds[ch.sym.head].arity
                if ch.sym.wands:
                    out.append(WfViolation(name, i, "wand in definition", ch.sym.head))
                if len(ch.args) != want:
                    out.append(WfViolation(name, i, "arity",
                                           f"{ch.sym.head} expects {want} args, got {len(ch.args)}"))
                child_roots.append(ch.root)
            if set(child_roots) != set(c.ex) or len(child_roots) != len(set(child_roots)):
                out.append(WfViolation(name, i, "strong connectivity",
                                       f"child roots {child_roots} vs existentials {list(c.ex)}"))
            missing = [z for z in c.ex if z not in c.cell.contents]
            if missing:
                out.append(WfViolation(name, i, "decisiveness",
                                       f"existentials {missing} not among cell contents"))
            scope = set(p.params) | set(c.ex)
            for v in fv_pure(c.pure) | fv_atom(c.cell):
                if v not in scope:
                    out.append(WfViolation(name, i, "scope", f"unbound variable {v}"))
            for ch in c.children:
                for v in fv_atom(ch):
                    if v not in scope:
                        out.append(WfViolation(name, i, "scope", f"unbound variable {v}"))
    return out


# ---------------------------------------------------------------------------
# Equality-fullness

def is_equality_full(d: Disjunct) -> bool:
    """True iff pure contains y ≠ t for every ⇑-bound y and every other term in
    scope (free variables, ⇑-variables, nil)."""
    fv = fv_disjunct(d)
    partners = fv | frozenset(d.ex_unrelated) | {NIL}
    for y in d.ex_unrelated:
        for t in partners:
            if t != y and ne(y, t) not in d.pure:
                return False
    return True


# ---------------------------------------------------------------------------
# Printing (deterministic; also used by canonicalization)

def show_term(t: Term) -> str:
    return t


def show_pure_atom(a: PureAtom) -> str:
    op, t, u = a
    return f"{t} {'=' if op == 'eq' else '!='} {u}"


def show_atom(a: SpatialAtom) -> str:
    if isinstance(a, PointsTo):
        return f"{a.root} -> ({','.join(a.contents)})"
    head, groups = a.arg_groups()
    parts = [f"{name}({','.join(g)})" for (name, _), g in zip(a.sym.wands, groups)]
    parts.append(f"{a.sym.head}({','.join(head)})")
    return " -*s ".join(parts)


def show_annotated(a: AnnotatedAtom) -> str:
    s = show_atom(a.atom)
    if a.defined:
        s += " & dn{" + ",".join(sorted(a.defined)) + "}"
    if a.unrelated:
        s += " & uup{" + ",".join(sorted(a.unrelated)) + "}"
    return s


def _show_body(p: Pure, sp: Sequence[AnnotatedAtom]) -> str:
    parts = [show_pure_atom(a) for a in sorted(p)]
    if sp:
        parts.append(" * ".join(show_annotated(a) for a in sp))
    else:
        parts.append("emp")
    return " & ".join(parts)


def show_antecedent(psi: Antecedent) -> str:
    s = _show_body(psi.pure, psi.spatial)
    if psi.undef:
        s = "up{" + ",".join(sorted(psi.undef)) + "} & " + s
    return s


def show_disjunct(d: Disjunct) -> str:
    s = _show_body(d.pure, d.spatial)
    if d.ex_unrelated:
        s = "uup{" + ",".join(d.ex_unrelated) + "} & " + s
    if d.ex_cells or d.ex_unrelated:
        s = "ex " + ",".join((*d.ex_cells, *d.ex_unrelated)) + " . " + s
    return s


def show_entailment(j: Entailment) -> str:
    succ = sorted(show_disjunct(d) for d in j.succ)
    return show_antecedent(j.ante) + " |- " + " , ".join(succ)


# ---------------------------------------------------------------------------
# Alpha-normalized printing (bound variables positionally renamed, free as-is)

def alpha_disjunct(d: Disjunct) -> Disjunct:
    """Rename bound variables to a positional scheme for comparison."""
    n = len(d.ex_cells) + len(d.ex_unrelated)
    if n == 0:
        return d
    # order bound vars by their first occurrence in a name-independent walk
    occurrences = []
    bound = d.bound

    def note(t):
        if t in bound and t not in occurrences:
            occurrences.append(t)

    for a in d.spatial:
        if isinstance(a.atom, PointsTo):
            note(a.atom.root)
            for t in a.atom.contents:
                note(t)
        else:
            for t in a.atom.args:
                note(t)
        for t in sorted(a.defined):
            note(t)
        for t in sorted(a.unrelated):
            note(t)
    for atom in sorted(d.pure):
        note(atom[1])
        note(atom[2])
    for b in (*d.ex_cells, *d.ex_unrelated):
        note(b)
    ren = {b: f".b{i}" for i, b in enumerate(occurrences)}
    return Disjunct(tuple(sorted(ren[x] for x in d.ex_cells)),
                    tuple(sorted(ren[y] for y in d.ex_unrelated)),
                    sub_pure(d.pure, ren),
                    tuple(sub_annotated(a, ren) for a in d.spatial))


def alpha_show(j: Entailment) -> str:
    """Entailment fingerprint invariant under bound-variable renaming and
    spatial/disjunct order, but not under free-variable renaming."""
    ante = j.ante
    sp = sorted(show_annotated(a) for a in ante.spatial)
    a_str = "up{" + ",".join(sorted(ante.undef)) + "} & " + \
        " & ".join(show_pure_atom(x) for x in sorted(ante.pure)) + " & " + " * ".join(sp)
    ds = sorted(show_disjunct(alpha_disjunct(d)) for d in j.succ)
    return a_str + " |- " + " , ".join(ds)


def entailment_equal(a: Entailment, b: Entailment) -> bool:
    return alpha_show(a) == alpha_show(b)


# ---------------------------------------------------------------------------
# Canonicalization up to free-variable renaming

def _var_signature(j: Entailment) -> dict:
    """Initial role-based coloring of free variables, refined by co-occurrence."""
    free = fv_entailment(j)
    sig = {v: [] for v in free}

    def tok(v, t):
        if v in sig:
            sig[v].append(t)

    for v in j.ante.undef:
        tok(v, "up")
    for op, t, u in sorted(j.ante.pure):
        tok(t, ("ap", op, u == NIL))
        tok(u, ("ap", op, t == NIL))
    for a in j.ante.spatial:
        key = ("pt",) if isinstance(a.atom, PointsTo) else \
            ("pc", a.atom.sym.head, a.atom.sym.wands)
        if isinstance(a.atom, PointsTo):
            tok(a.atom.root, (key, "root"))
            for i, t in enumerate(a.atom.contents):
                tok(t, (key, i))
        else:
            for i, t in enumerate(a.atom.args):
                tok(t, (key, i))
        for t in a.defined:
            tok(t, (key, "dn"))
        for t in a.unrelated:
            tok(t, (key, "uu"))
    for d in j.succ:
        dd = alpha_disjunct(d)
        dkey = ("d", len(dd.ex_cells), len(dd.ex_unrelated))
        for op, t, u in sorted(dd.pure):
            tok(t, (dkey, "p", op))
            tok(u, (dkey, "p", op))
        for a in dd.spatial:
            key = (dkey, "pt") if isinstance(a.atom, PointsTo) else \
                (dkey, "pc", a.atom.sym.head, a.atom.sym.wands)
            terms = (a.atom.root, *a.atom.contents) if isinstance(a.atom, PointsTo) \
                else a.atom.args
            for i, t in enumerate(terms):
                tok(t, (key, i))
            for t in a.defined:
                tok(t, (key, "dn"))
            for t in a.unrelated:
                tok(t, (key, "uu"))
    colors = {v: repr(sorted(map(repr, toks))) for v, toks in sig.items()}
    # refine by partner multisets in pure atoms (two rounds)
    for _ in range(2):
        new = {}
        for v in colors:
            partners = []
            for op, t, u in j.ante.pure:
                if t == v:
                    partners.append((op, colors.get(u, "")))
                if u == v:
                    partners.append((op, colors.get(t, "")))
            new[v] = repr((colors[v], sorted(partners)))
        colors = new
    return colors


@functools.lru_cache(maxsize=65536)
def canonical_with_renaming(j: Entailment) -> tuple[str, tuple]:
    """Lexicographically least alpha_show over renamings of free variables.

    Returns (encoding, renaming) where renaming maps original free variables
    to canonical names v0, v1, ….  canonical(j1) == canonical(j2) iff j2 is j1
    under some free-variable renaming (up to the documented identifications).
    """
    free = sorted(fv_entailment(j))
    if not free:
        return alpha_show(j), ()
    colors = _var_signature(j)
    groups: dict = {}
    for v in free:
        groups.setdefault(colors[v], []).append(v)
    ordered_groups = [sorted(groups[c]) for c in sorted(groups)]
    best = None
    best_ren = None
    for perms in itertools.product(*[_perms_capped(g) for g in ordered_groups]):
        order = [v for p in perms for v in p]
        ren = {v: f"v{i}" for i, v in enumerate(order)}
        s = alpha_show(sub_entailment(j, ren))
        if best is None or s < best:
            best = s
            best_ren = ren
    return best, tuple(sorted(best_ren.items()))


def _perms_capped(group: list, cap: int = 720) -> list:
    perms = []
    for i, p in enumerate(itertools.permutations(group)):
        if i >= cap:
            break
        perms.append(p)
    return perms


def canonical(j: Entailment) -> str:
    return canonical_with_renaming(j)[0]
