"""Antecedent satisfiability checking.

The procedure works on antecedents of the shape Y↑ ∧ Π ∧ *ᵢ(Pᵢ(t⃗ᵢ) ∧ Xᵢ↓):

1. each conjunct is rewritten with an allocation-tracking variant P̂ of its
   predicate, whose extra arguments are exactly the Xᵢ (points-to conjuncts
   become one-clause predicates first);
2. for every variant the set of *base pairs* (V, Π') is computed by a least
   fixpoint: V lists the formal parameters that must be allocated and Π' the
   pure constraints of some unfolding;
3. one base pair per conjunct is sought such that the allocated parameters
   avoid Y (up to the equality in Π) and all pure parts together with the
   pairwise-distinctness of the allocated terms are satisfiable.

Pure reasoning is an equivalence closure over the finite term set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import wands
from .syntax import (
    Antecedent, DefClause, DefEnv, NIL, PointsTo, Pred, PredCall, PredSym,
    Pure, eq, fresh_name, ne, pure, sub_pure, sub_term,
)


class IllFormedAntecedent(Exception):
    pass


# ---------------------------------------------------------------------------
# Pure formulas


class _Union:
    def __init__(self):
        self.up = {}

    def find(self, t):
        r = t
        while r in self.up:
            r = self.up[r]
        while t in self.up:
            self.up[t], t = r, self.up[t]
        return r

    def union(self, t, u):
        rt, ru = self.find(t), self.find(u)
        if rt != ru:
            self.up[rt] = ru


def _closure(pi: Pure) -> _Union:
    uf = _Union()
    for op, t, u in pi:
        if op == "eq":
            uf.union(t, u)
    return uf


def pure_sat(pi: Pure) -> bool:
    uf = _closure(pi)
    return all(uf.find(t) != uf.find(u) for op, t, u in pi if op == "ne")


def pure_entails(pi: Pure, atom) -> bool:
    op, t, u = atom
    if op == "eq":
        uf = _closure(pi)
        return uf.find(t) == uf.find(u)
    return not pure_sat(pure(set(pi) | {eq(t, u)}))


def complete_valuations(terms, pi: Pure):
    """All complete =/≠ valuations over terms ∪ {nil} consistent with pi.

    Each yielded Pure decides t = u or t ≠ u for every pair over the given
    terms and nil; equalities of pi are respected (classes may only be
    merged, never split) and its disequalities are never contradicted.
    """
    if not pure_sat(pi):
        return
    univ = sorted(set(terms) | {NIL})
    uf = _closure(pi)
    classes: dict = {}
    for t in univ:
        classes.setdefault(uf.find(t), []).append(t)
    blocks = [tuple(v) for _, v in sorted(classes.items())]
    sep = {(i, j)
           for i, j in itertools.combinations(range(len(blocks)), 2)
           if not pure_sat(pure(set(pi) | {eq(blocks[i][0], blocks[j][0])}))}

    def place(k, grouping):
        if k == len(blocks):
            out = set()
            flat = [tuple(t for b in g for t in blocks[b]) for g in grouping]
            for g in flat:
                for t, u in itertools.combinations(g, 2):
                    out.add(eq(t, u))
            for g, g2 in itertools.combinations(flat, 2):
                for t in g:
                    for u in g2:
                        out.add(ne(t, u))
            yield pure(out)
            return
        for g in grouping:
            if all((min(b, k), max(b, k)) not in sep for b in g):
                g.append(k)
                yield from place(k + 1, grouping)
                g.pop()
        grouping.append([k])
        yield from place(k + 1, grouping)
        grouping.pop()

    yield from place(0, [])


# ---------------------------------------------------------------------------
# Flattening: give every reachable (possibly wand) predicate symbol a plain
# name so the variant construction can work on an ordinary environment.


def flat_env(env: DefEnv, syms) -> tuple[DefEnv, dict]:
    names: dict = {}
    preds: dict = {}

    def visit(sym: PredSym) -> str:
        if sym in names:
            return names[sym]
        name = wands.mangle(sym)
        names[sym] = name
        src = wands.resolve(env, sym)
        preds[name] = None  # reserve before recursing
        clauses = []
        for cl in src.clauses:
            kids = tuple(PredCall(PredSym(visit(c.sym)), c.args)
                         for c in cl.children)
            clauses.append(DefClause(cl.ex, cl.pure, cl.cell, kids))
        preds[name] = Pred(name, src.params, tuple(clauses))
        return name

    for sym in syms:
        visit(sym)
    return DefEnv(env.n_cell, preds), names


# ---------------------------------------------------------------------------
# Allocation-tracking variants


def hat_name(name: str, n: int) -> str:
    return name if n == 0 else f"{name}^hat{n}"


def hat_extend(env: DefEnv, needed) -> DefEnv:
    """Extend env with the variant P̂ⁿ for every requested (name, n): P̂ⁿ has
    n extra parameters, each of which is either equated to the clause root or
    handed (order within each child preserved) to a child's variant."""
    preds = dict(env.preds)
    todo = [(name, n) for name, n in needed if n > 0]
    while todo:
        name, n = todo.pop()
        hname = hat_name(name, n)
        if hname in preds:
            continue
        base = env.pred(name)
        avoid = set(base.params)
        for cl in base.clauses:
            avoid.update(cl.ex)
        ys = []
        for _ in range(n):
            y = fresh_name("_y", avoid)
            avoid.add(y)
            ys.append(y)
        clauses = []
        for cl in base.clauses:
            for root_set, dealt in _deals(ys, len(cl.children)):
                extra = pure(set(cl.pure) |
                             {eq(cl.cell.root, y) for y in root_set})
                kids = []
                for child, yi in zip(cl.children, dealt):
                    kname = hat_name(child.sym.head, len(yi))
                    if len(yi) > 0:
                        todo.append((child.sym.head, len(yi)))
                    kids.append(PredCall(PredSym(kname),
                                         child.args + tuple(yi)))
                clauses.append(DefClause(cl.ex, extra, cl.cell, tuple(kids)))
        preds[hname] = Pred(hname, base.params + tuple(ys), tuple(clauses))
    return DefEnv(env.n_cell, preds)


def _deals(ys, n_children):
    """Every split of ys into a root-equated subset and n_children
    order-preserving subsequences; splits that would orphan an extra
    argument (no child to receive it) yield nothing."""
    for mask in itertools.product(range(n_children + 1), repeat=len(ys)):
        # slot 0: equated to the root; slot i>0: dealt to child i-1
        root_set = [y for y, m in zip(ys, mask) if m == 0]
        dealt = [[y for y, m in zip(ys, mask) if m == i + 1]
                 for i in range(n_children)]
        yield root_set, dealt


# ---------------------------------------------------------------------------
# Base pairs


@dataclass(frozen=True)
class BasePair:
    V: frozenset
    pure: Pure


def _alldiff(terms) -> Pure:
    out = set()
    for t in terms:
        out.add(ne(t, NIL))
    for t, u in itertools.combinations(terms, 2):
        out.add(ne(t, u))
    return pure(out)


def base_pairs_table(env: DefEnv) -> dict:
    """Least fixpoint of per-clause base-pair composition for every
    predicate in env."""
    table = {name: set() for name in env.preds}
    changed = True
    while changed:
        changed = False
        for name, pred in env.preds.items():
            for cl in pred.clauses:
                for bp in _clause_pairs(env, cl, pred, table):
                    if bp not in table[name]:
                        table[name].add(bp)
                        changed = True
    return {name: frozenset(bps) for name, bps in table.items()}


def _clause_pairs(env: DefEnv, cl: DefClause, pred: Pred, table):
    choices = []
    for child in cl.children:
        sub = dict(zip(env.pred(child.sym.head).params, child.args))
        opts = [(tuple(sub_term(v, sub) for v in sorted(bp.V)),
                 sub_pure(bp.pure, sub))
                for bp in table[child.sym.head]]
        if not opts:
            return
        choices.append(opts)
    for combo in itertools.product(*choices):
        vs = [cl.cell.root]
        pi = set(cl.pure)
        for cv, cp in combo:
            vs.extend(cv)
            pi |= cp
        pi |= _alldiff(vs)
        yield from _eliminate(cl.ex, vs, pure(pi), pred.params)


def _eliminate(ex, vs, pi, params):
    """Case-split every existential: equal to a parameter or nil, or fresh
    and distinct from everything named (then dropped, with its atoms)."""
    if not pure_sat(pi):
        return
    if not ex:
        keep = set(params) | {NIL}
        if all(t in keep for t in vs):
            proj = pure(a for a in pi
                        if {a[1], a[2]} <= keep)
            yield BasePair(frozenset(vs), proj)
        return
    z, rest = ex[0], ex[1:]
    for t in (*params, NIL):
        th = {z: t}
        yield from _eliminate(rest, [sub_term(v, th) for v in vs],
                              sub_pure(pi, th), params)
    # fresh-distinct: a never-named location/value
    fresh_pi = pure(set(pi) | {ne(z, t) for t in (*params, NIL)})
    if pure_sat(fresh_pi):
        dropped = pure(a for a in fresh_pi if z not in (a[1], a[2]))
        yield from _eliminate(rest, [v for v in vs if v != z],
                              dropped, params)


def base_pairs(env: DefEnv, name: str) -> frozenset:
    fenv, nm = flat_env(env, [PredSym(name)])
    return base_pairs_table(fenv)[nm[PredSym(name)]]


# ---------------------------------------------------------------------------
# The satisfiability check


_sat_caches: dict = {}  # id(env) -> (env, {key: (henv, names, table)})


def _cell_pred_name(env: DefEnv) -> str:
    return fresh_name("_cell", env.preds)


def _sat_tables(env: DefEnv, calls):
    """Cached (hat environment, flat-name map, base-pair table) for the given
    multiset of (symbol, mark count) call shapes."""
    entry = _sat_caches.get(id(env))
    if entry is None or entry[0] is not env:
        entry = (env, {})
        _sat_caches[id(env)] = entry
    key = frozenset((sym, len(xs)) for sym, _, xs in calls)
    hit = entry[1].get(key)
    if hit is not None:
        return hit
    cell = _cell_pred_name(env)
    params = tuple(f"_p{k}" for k in range(env.n_cell + 1))
    extra = {cell: Pred(
        cell, params,
        (DefClause((), pure(), PointsTo(params[0], params[1:]), ()),))}
    base_env = DefEnv(env.n_cell, {**dict(env.preds), **extra})
    fenv, names = flat_env(base_env, [sym for sym, _, _ in calls])
    needed = {(names[sym], len(xs)) for sym, _, xs in calls}
    henv = hat_extend(fenv, needed)
    table = base_pairs_table(henv)
    out = (henv, names, table)
    entry[1][key] = out
    return out


def check_sat(env: DefEnv, psi: Antecedent) -> bool:
    if not pure_sat(psi.pure):
        return False
    if any(a.unrelated for a in psi.spatial):
        raise IllFormedAntecedent("only allocation annotations are allowed")
    if not psi.spatial:
        return True

    # points-to conjuncts use a shared one-clause cell predicate
    cell = _cell_pred_name(env)
    calls = []
    for a in psi.spatial:
        if isinstance(a.atom, PointsTo):
            calls.append((PredSym(cell),
                          (a.atom.root, *a.atom.contents), a.defined))
        else:
            calls.append((a.atom.sym, a.atom.args, a.defined))

    henv, names, table = _sat_tables(env, calls)

    uf = _closure(psi.pure)
    y_classes = {uf.find(y) for y in psi.undef}
    options = []
    for sym, args, xs in calls:
        hname = hat_name(names[sym], len(xs))
        hp = henv.pred(hname)
        sub = dict(zip(hp.params, (*args, *sorted(xs))))
        opts = []
        for bp in table[hname]:
            vi = tuple(sub_term(v, sub) for v in sorted(bp.V))
            if any(uf.find(v) in y_classes for v in vi):
                continue
            opts.append((vi, sub_pure(bp.pure, sub)))
        if not opts:
            return False
        options.append(opts)
    for combo in itertools.product(*options):
        vs = [v for vi, _ in combo for v in vi]
        pi = set(psi.pure) | _alldiff(vs)
        for _, cp in combo:
            pi |= cp
        # Y-disjointness under the equalities of the combined formula
        pi |= {ne(v, y) for v in vs for y in psi.undef}
        if pure_sat(pure(pi)):
            return True
    return False
