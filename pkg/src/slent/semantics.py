"""Finite heap-model semantics and a bounded exhaustive model oracle.

Models are pairs (store, heap): a store maps variables to naturals (nil is 0)
and a heap maps positive naturals to fixed-width tuples of naturals.  The
evaluator is footprint-based: for every spatial atom it computes the set of
sub-heap domains on which the atom can hold, which makes the *-splitting
search and the per-atom annotations (X "dn", X "uup") direct.

The oracle enumerates antecedent models by derivation: a model of a symbolic
heap is a disjoint union of clause-unfolding footprints, so choosing store
values, clauses, and existential witnesses generates every model — up to a
bijection of locations, which satisfaction is invariant under.  Values are
numbered canonically by first use, so the enumeration is exhaustive up to
that bijection and deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import wands
from .syntax import (
    AnnotatedAtom, Antecedent, ArityMismatch, DefEnv, Disjunct, Entailment,
    NIL, PointsTo, PredCall, fv_antecedent, fv_disjunct, is_var,
)

Store = dict  # var -> int
Heap = dict   # loc (> 0) -> tuple[int, ...]


class ResourceLimit(Exception):
    pass


class NotABijection(Exception):
    pass


class UnboundVariable(Exception):
    pass


DEFAULT_BUDGET = 2_000_000


class _Meter:
    def __init__(self, budget: int):
        self.left = budget

    def tick(self, n: int = 1):
        self.left -= n
        if self.left < 0:
            raise ResourceLimit("model enumeration budget exhausted")


def term_val(s: Store, t) -> int:
    if t == NIL:
        return 0
    try:
        return s[t]
    except KeyError:
        raise UnboundVariable(t) from None


def leaves(h: Heap) -> frozenset:
    rng = {v for tup in h.values() for v in tup}
    return frozenset(rng - set(h))


# ---------------------------------------------------------------------------
# Footprint-based evaluation


def _solve_cell(s: Store, ex, terms, contents) -> dict | None:
    """Match clause cell contents (terms over params ∪ ex, params already in
    s) against concrete contents; returns witness values for ex or None."""
    wit = {}
    for t, v in zip(terms, contents):
        if t in ex:
            if wit.setdefault(t, v) != v:
                return None
        elif term_val(s, t) != v:
            return None
    if set(wit) != set(ex):  # decisiveness: every existential occurs
        return None
    return wit


def footprints(env: DefEnv, s: Store, h: Heap, atom, depth: int | None = None,
               meter: _Meter | None = None) -> set:
    """All A ⊆ Dom(h) such that s, h|A satisfies the atom, unfolding
    predicates at most `depth` times (default: enough for any sub-heap)."""
    meter = meter or _Meter(DEFAULT_BUDGET)
    if depth is None:
        depth = len(h) + 1
    return _fps(env, s, h, atom, depth, meter)


def _fps(env: DefEnv, s: Store, h: Heap, atom, depth: int, meter: _Meter) -> set:
    meter.tick()
    if isinstance(atom, PointsTo):
        a = term_val(s, atom.root)
        if len(atom.contents) != env.n_cell:
            raise ArityMismatch(f"cell of width {len(atom.contents)}")
        if a in h and h[a] == tuple(term_val(s, t) for t in atom.contents):
            return {frozenset({a})}
        return set()
    pred = wands.resolve(env, atom.sym)
    if len(atom.args) != pred.arity:
        raise ArityMismatch(f"{pred.name}/{pred.arity} applied to {len(atom.args)}")
    if depth <= 0:
        return set()
    out = set()
    a = term_val(s, atom.root)
    if a not in h:
        return out
    for cl in wands.resolve(env, atom.sym).clauses:
        inst = dict(zip(pred.params, (term_val(s, t) for t in atom.args)))
        wit = _solve_cell(inst, set(cl.ex), cl.cell.contents, h[a])
        if wit is None:
            continue
        s2 = {**inst, **wit}
        if term_val(s2, cl.cell.root) != a:
            continue
        if not eval_pure(s2, cl.pure):
            continue
        child_fps = [
            {f for f in _fps(env, s2, h, c, depth - 1, meter) if a not in f}
            for c in cl.children]
        for combo in itertools.product(*child_fps):
            meter.tick()
            if _disjoint(combo):
                out.add(frozenset({a}).union(*combo))
    return out


def _disjoint(parts) -> bool:
    total = 0
    seen = set()
    for p in parts:
        total += len(p)
        seen |= p
    return len(seen) == total


def eval_pure(s: Store, p) -> bool:
    for op, t, u in p:
        same = term_val(s, t) == term_val(s, u)
        if same != (op == "eq"):
            return False
    return True


def _atom_ok(env, s, h, a: AnnotatedAtom, fp: frozenset) -> bool:
    """Annotations of one atom against its chosen footprint."""
    sub = {loc: h[loc] for loc in fp}
    lv = leaves(sub)
    for x in a.defined:
        if term_val(s, x) not in sub:
            return False
    for x in a.unrelated:
        v = term_val(s, x)
        if v in sub or v in lv:
            return False
    return True


def eval_spatial(env: DefEnv, s: Store, h: Heap, spatial, meter=None) -> bool:
    """Exact-cover check: the atoms split Dom(h) with annotations holding."""
    meter = meter or _Meter(DEFAULT_BUDGET)
    options = []
    for a in spatial:
        fps = _fps(env, s, h, a.atom, len(h) + 1, meter)
        opts = [f for f in fps if _atom_ok(env, s, h, a, f)]
        if not opts:
            return False
        options.append(opts)
    dom = frozenset(h)
    for combo in itertools.product(*options):
        meter.tick()
        if _disjoint(combo) and frozenset().union(*combo, frozenset()) == dom:
            return True
    return False


def eval_antecedent(env: DefEnv, s: Store, h: Heap, psi: Antecedent,
                    meter=None) -> bool:
    if not eval_pure(s, psi.pure):
        return False
    if any(term_val(s, y) in h for y in psi.undef):
        return False
    return eval_spatial(env, s, h, psi.spatial, meter)


def _value_universe(s: Store, h: Heap, extra: int) -> list:
    used = {0} | set(s.values()) | set(h) | {v for t in h.values() for v in t}
    top = max(used) + 1
    return sorted(used) + list(range(top, top + extra))


def eval_disjunct(env: DefEnv, s: Store, h: Heap, d: Disjunct,
                  meter=None) -> bool:
    meter = meter or _Meter(DEFAULT_BUDGET)
    bound = list(d.ex_cells) + list(d.ex_unrelated)
    univ = _value_universe(s, h, len(bound))
    lv = leaves(h)
    for vals in itertools.product(univ, repeat=len(bound)):
        meter.tick()
        s2 = {**s, **dict(zip(bound, vals))}
        if any(s2[y] in h or s2[y] in lv for y in d.ex_unrelated):
            continue
        if eval_pure(s2, d.pure) and eval_spatial(env, s2, h, d.spatial, meter):
            return True
    return False


def eval_entailment_at(env: DefEnv, s: Store, h: Heap, j: Entailment,
                       meter=None) -> bool:
    if not eval_antecedent(env, s, h, j.ante, meter):
        return True
    return any(eval_disjunct(env, s, h, d, meter) for d in j.succ)


def eval_pred_at(env: DefEnv, s: Store, h: Heap, call: PredCall, m: int,
                 meter=None) -> bool:
    """Depth-indexed approximant: the call holds on exactly h within m
    unfolding levels."""
    meter = meter or _Meter(DEFAULT_BUDGET)
    return frozenset(h) in _fps(env, s, h, call, m, meter)


# ---------------------------------------------------------------------------
# Location bijections


def apply_bijection(s: Store, h: Heap, beta: dict) -> tuple:
    vals = list(beta.values())
    if len(set(vals)) != len(vals) or set(beta) != set(vals) or \
            any(v <= 0 for v in list(beta) + vals):
        raise NotABijection(beta)

    def b(v):
        return beta.get(v, v)

    s2 = {x: b(v) for x, v in s.items()}
    h2 = {b(a): tuple(b(v) for v in t) for a, t in h.items()}
    return s2, h2


# ---------------------------------------------------------------------------
# Canonical model enumeration


def _store_choices(fvs):
    """Stores over sorted free variables, values canonically numbered by
    first use (0 = nil is always available)."""
    fvs = sorted(fvs)

    def go(i, used_max):
        if i == len(fvs):
            yield {}
            return
        for v in range(used_max + 2):
            for rest in go(i + 1, max(used_max, v)):
                yield {fvs[i]: v, **rest}

    yield from go(0, 0)


def _derive_atom(env, s, atom, h, used_max, cap, meter):
    """Extend heap h with a footprint for the atom, never exceeding `cap`
    cells in total; existential witnesses take used values or the next
    canonical fresh one.  Yields (heap, used_max)."""
    meter.tick()
    a = term_val(s, atom.root)
    if a <= 0 or a in h or len(h) >= cap:
        return
    if isinstance(atom, PointsTo):
        yield {**h, a: tuple(term_val(s, t) for t in atom.contents)}, used_max
        return
    pred = wands.resolve(env, atom.sym)
    if len(atom.args) != pred.arity:
        raise ArityMismatch(f"{pred.name}/{pred.arity} applied to {len(atom.args)}")
    inst = dict(zip(pred.params, (term_val(s, t) for t in atom.args)))
    for cl in pred.clauses:
        for wit in _witness_choices(cl.ex, used_max):
            meter.tick()
            s2 = {**inst, **wit}
            if not eval_pure(s2, cl.pure):
                continue
            if term_val(s2, cl.cell.root) != a:
                continue
            cell = tuple(term_val(s2, t) for t in cl.cell.contents)
            states = [({**h, a: cell},
                       max([used_max, *wit.values(), *cell]))]
            for child in cl.children:
                states = [
                    nxt
                    for hh, uu in states
                    for nxt in _derive_atom(env, s2, child, hh, uu, cap, meter)
                ]
                if not states:
                    break
            yield from states


def _witness_choices(ex, used_max):
    """Each existential takes a value in {0..used_max} or the next fresh
    canonical value (fresh values stack up left to right)."""
    ex = list(ex)

    def go(i, um):
        if i == len(ex):
            yield {}
            return
        for v in range(um + 2):
            for rest in go(i + 1, max(um, v)):
                yield {ex[i]: v, **rest}

    yield from go(0, used_max)


def models(env: DefEnv, psi: Antecedent, max_cells: int,
           budget: int | None = None, extra_vars=()):
    """Antecedent models with at most max_cells heap cells, canonical up to
    location bijection, in deterministic order.  extra_vars widens the store
    domain (e.g. to variables free only in a succedent)."""
    meter = _Meter(DEFAULT_BUDGET if budget is None else budget)
    fvs = sorted(fv_antecedent(psi) | frozenset(extra_vars))
    seen = set()
    for s in _store_choices(fvs):
        used_max = max([0, *s.values()])
        states = [({}, used_max)]
        ok = True
        for a in psi.spatial:
            states = [
                (hh, uu)
                for h, um in states
                for hh, uu in _derive_atom(env, s, a.atom, h, um,
                                           max_cells, meter)
            ]
            if not states:
                ok = False
                break
        if not ok:
            continue
        for h, _ in states:
            key = (tuple(sorted(s.items())), tuple(sorted(h.items())))
            if key in seen:
                continue
            seen.add(key)
            if eval_antecedent(env, s, h, psi, meter):
                yield s, h


# ---------------------------------------------------------------------------
# Oracle verdicts


@dataclass(frozen=True)
class Sat:
    store: tuple
    heap: tuple


@dataclass(frozen=True)
class NoModelUpTo:
    max_cells: int


@dataclass(frozen=True)
class Counterexample:
    store: tuple
    heap: tuple


@dataclass(frozen=True)
class NoCounterexampleUpTo:
    max_cells: int


def _freeze(s: Store, h: Heap):
    return tuple(sorted(s.items())), tuple(sorted(h.items()))


def _dummy_vars(n: int):
    return tuple(f"_u{i}" for i in range(n))


def oracle_sat(env: DefEnv, psi: Antecedent, max_cells: int,
               budget: int | None = None, universe_extra: int = 0):
    for s, h in models(env, psi, max_cells, budget,
                       extra_vars=_dummy_vars(universe_extra)):
        return Sat(*_freeze(s, h))
    return NoModelUpTo(max_cells)


def oracle_entailment(env: DefEnv, j: Entailment, max_cells: int,
                      budget: int | None = None, universe_extra: int = 0):
    meter = _Meter(DEFAULT_BUDGET if budget is None else budget)
    extra = frozenset().union(*(fv_disjunct(d) for d in j.succ), frozenset())
    extra |= set(_dummy_vars(universe_extra))
    for s, h in models(env, j.ante, max_cells, budget, extra_vars=extra):
        if not any(eval_disjunct(env, s, h, d, meter) for d in j.succ):
            return Counterexample(*_freeze(s, h))
    return NoCounterexampleUpTo(max_cells)


def render_model(store, heap) -> str:
    st = ", ".join(f"{x}={v}" for x, v in sorted(dict(store).items()))
    hp = "; ".join(f"{a} -> ({','.join(map(str, t))})"
                   for a, t in sorted(dict(heap).items()))
    return f"store: {st} / heap: {hp}"
