"""Residual ("strong wand") predicates: synthesized definition clauses.

A call (Q1 -*s ... -*s Qm -*s P)(t⃗, t⃗1, …, t⃗m) denotes P with one occurrence
of each Qi removed from its unfolding.  Its definition clauses are synthesized
from P's clauses: for every way of matching a sub-multiset of the wand chain
against the clause's child calls (eliminating them directly, equating their
arguments) and distributing the remaining chain among the surviving children
as nested wands.  Chain order is irrelevant up to renaming, so lookups go
through a canonical ordering.
"""

from __future__ import annotations

import itertools

from .syntax import (
    DefClause, DefEnv, Pred, PredCall, PredSym, UnknownPredicate, eq,
    fresh_name, fv_atom, fv_pure, pure, sub_atom, sub_pure,
)

_env_caches: dict = {}  # id(env) -> (env, {"dep": …, "clauses": …})


def _cache(env: DefEnv) -> dict:
    entry = _env_caches.get(id(env))
    if entry is None or entry[0] is not env:
        entry = (env, {"dep": {}, "clauses": {}})
        _env_caches[id(env)] = entry
    return entry[1]


def dep(env: DefEnv, name: str) -> frozenset:
    """Predicates reachable through clause children (name itself included iff
    it occurs in its own unfolding)."""
    cache = _cache(env)["dep"]
    if name in cache:
        return cache[name]
    if name not in env.preds:
        raise UnknownPredicate(name)
    seen = set()
    frontier = [name]
    while frontier:
        p = frontier.pop()
        for c in env.pred(p).clauses:
            for ch in c.children:
                if ch.sym.head not in seen:
                    seen.add(ch.sym.head)
                    frontier.append(ch.sym.head)
    out = frozenset(seen)
    cache[name] = out
    return out


def wand_formals(env: DefEnv, sym: PredSym) -> tuple:
    """Formal parameter list of a (possibly wand-extended) predicate symbol."""
    base = env.pred(sym.head)
    avoid = set(base.params)
    for cl in base.clauses:
        avoid.update(cl.ex, fv_pure(cl.pure), fv_atom(cl.cell))
        for c in cl.children:
            avoid.update(fv_atom(c))
    params = list(base.params)
    for j, (_, k) in enumerate(sym.wands):
        for i in range(k):
            name = fresh_name(f"_w{j}_{i}", avoid)
            avoid.add(name)
            params.append(name)
    return tuple(params)


def wand_clauses(env: DefEnv, sym: PredSym) -> tuple:
    """Definition clauses of sym over wand_formals(env, sym)."""
    if not sym.wands:
        return env.pred(sym.head).clauses
    cache = _cache(env)["clauses"]
    if sym in cache:
        return cache[sym]
    for name, k in sym.wands:
        if name not in env.preds:
            raise UnknownPredicate(name)
        if k != env.pred(name).arity:
            raise UnknownPredicate(f"{name} used with {k} argument slots")
    base = env.pred(sym.head)
    formals = wand_formals(env, sym)
    # per wand component j: its slice of the formals (root, rest)
    comp_slices = []
    pos = base.arity
    for _, k in sym.wands:
        comp_slices.append((formals[pos], formals[pos + 1: pos + k]))
        pos += k
    out = []
    seen = set()
    for cl in base.clauses:
        for new in _clause_divisions(env, sym, cl, comp_slices):
            if new not in seen:
                seen.add(new)
                out.append(new)
    out = tuple(out)
    cache[sym] = out
    return out


def _clause_divisions(env: DefEnv, sym: PredSym, cl: DefClause, comp_slices):
    comps = list(range(len(sym.wands)))
    children = list(range(len(cl.children)))
    # choose the directly-eliminated components: an injective, name-matching
    # partial map from components to children
    for elim_set in _subsets(comps):
        remaining = [j for j in comps if j not in elim_set]
        for match in _injections(elim_set, children,
                                 lambda j, i: sym.wands[j][0] == cl.children[i].sym.head):
            kept = [i for i in children if i not in match.values()]
            if remaining and not kept:
                continue
            for assign in itertools.product(kept, repeat=len(remaining)):
                yield _build_clause(env, sym, cl, comp_slices, match,
                                    dict(zip(remaining, assign)))


def _subsets(xs):
    for r in range(len(xs) + 1):
        yield from itertools.combinations(xs, r)


def _injections(sources, targets, ok):
    sources = list(sources)
    if not sources:
        yield {}
        return
    for perm in itertools.permutations(targets, len(sources)):
        if all(ok(j, i) for j, i in zip(sources, perm)):
            yield dict(zip(sources, perm))


def _build_clause(env: DefEnv, sym: PredSym, cl: DefClause, comp_slices,
                  elim: dict, assign: dict) -> DefClause:
    """elim: component -> eliminated child; assign: component -> kept child."""
    th = {}  # eliminated child roots := component roots
    extra = set()
    for j, i in elim.items():
        root_j, rest_j = comp_slices[j]
        child = cl.children[i]
        th[child.root] = root_j
        for u, s in zip(rest_j, child.args[1:]):
            extra.add(eq(u, s))
    new_children = []
    for i, child in enumerate(cl.children):
        if i in elim.values():
            continue
        chain = [j for j in sorted(assign) if assign[j] == i]
        if not chain:
            new_children.append(child)
            continue
        new_sym = PredSym(child.sym.head, tuple(sym.wands[j] for j in chain))
        args = list(child.args)
        for j in chain:
            root_j, rest_j = comp_slices[j]
            args.extend((root_j, *rest_j))
        new_children.append(PredCall(new_sym, tuple(args)))
    ex = tuple(z for z in cl.ex if z not in th)
    new_pure = sub_pure(pure(set(cl.pure) | extra), th)
    cell = sub_atom(cl.cell, th)
    children = tuple(sub_atom(c, th) for c in new_children)
    return DefClause(ex, new_pure, cell, children)


def resolve(env: DefEnv, sym: PredSym) -> Pred:
    """A Pred view (formals + clauses) of any predicate symbol."""
    if not sym.wands:
        return env.pred(sym.head)
    return Pred(mangle(sym), wand_formals(env, sym), wand_clauses(env, sym))


def mangle(sym: PredSym) -> str:
    if not sym.wands:
        return sym.head
    return "(" + " -*s ".join([*(n for n, _ in sym.wands), sym.head]) + ")"


def clause_instances(env: DefEnv, call: PredCall, avoid):
    """Definition clause bodies of a (possibly wand) call, instantiated at the
    call's arguments with existentials freshened against avoid.

    Yields (fresh, pure, cell, children) per clause: the freshened existential
    names, the instantiated pure part, the PointsTo cell and the child calls.
    """
    pred = resolve(env, call.sym)
    if len(call.args) != len(pred.params):
        from .syntax import ArityMismatch
        raise ArityMismatch(pred.name, len(pred.params), len(call.args))
    base = dict(zip(pred.params, call.args))
    for cl in pred.clauses:
        th = dict(base)
        av = set(avoid) | set(call.args)
        fresh = []
        for z in cl.ex:
            nz = fresh_name(z, av)
            av.add(nz)
            fresh.append(nz)
            th[z] = nz
        yield (tuple(fresh), sub_pure(cl.pure, th), sub_atom(cl.cell, th),
               tuple(sub_atom(c, th) for c in cl.children))


def canonical_call(call: PredCall) -> PredCall:
    """Reorder the wand chain lexicographically by (name, argument tuple)."""
    if not call.sym.wands:
        return call
    head, groups = call.arg_groups()
    comps = sorted(zip(call.sym.wands, groups), key=lambda c: (c[0][0], c[1]))
    sym = PredSym(call.sym.head, tuple(c[0] for c in comps))
    args = tuple(head) + tuple(t for c in comps for t in c[1])
    return PredCall(sym, args)
