"""Entailment decision by cyclic-proof search.

decide() layers three case analyses over the input goal — ↑/↓ classification
of free variables, ↓-distribution over the succedent's address variables, and
a complete =/≠ valuation — and then, per satisfiable case, searches for a
cyclic proof: factor succedent disjuncts until all sides share a root, unfold
that root on both sides, case-split the extended variable set, match and
remove the shared cell, split the antecedent into address-disjoint groups,
normalize, and discharge repeats against the path history as buds.  The
result of a successful search is a ProofTree that the independent checker in
proofcheck accepts.
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass, field

from . import proofcheck, satcheck, semantics, wands
from .syntax import (
    AnnotatedAtom, Antecedent, DefEnv, Disjunct, Entailment, NIL, PointsTo,
    PredCall, PredSym, UndefinedRoots, alpha_disjunct, canonical,
    canonical_with_renaming, cells_spatial, eq, fresh_name, fv_disjunct,
    fv_entailment, fv_pure, fv_spatial, ne, pure, roots, show_disjunct,
    show_entailment, sub_annotated, sub_disjunct, sub_entailment, sub_pure,
)


# ---------------------------------------------------------------------------
# Configuration and verdicts

@dataclass
class Config:
    d_wand: int | None = None       # wand-chain depth bound (default: max arity)
    strategy: str = "exhaustive"    # "exhaustive" (backtracking) or "greedy"
    step_budget: int = 200_000
    oracle_bound: int = 4           # countermodel search bound; 0 disables
    jobs: int = 1                   # worker threads (the search is sequential;
                                    # values > 1 are accepted and ignored)


@dataclass(frozen=True)
class Valid:
    proof: proofcheck.ProofTree


@dataclass(frozen=True)
class Invalid:
    witness: object = None  # semantics.Counterexample when one was found


@dataclass(frozen=True)
class ResourceExhausted:
    steps: int


class _Budget(Exception):
    pass


class NoCommonRoot(Exception):
    pass


class NoCommonCell(Exception):
    pass


class DepthExceeded(Exception):
    pass


# ---------------------------------------------------------------------------
# Search nodes (turned into a ProofTree on success)

class _Box:
    """Forward reference to a companion node, patched once its subtree closes."""
    __slots__ = ("node",)

    def __init__(self):
        self.node = None


@dataclass
class _Node:
    sequent: Entailment
    rule: str
    premises: list
    companion: _Box | None = None
    subst: dict | None = None


@dataclass
class _Ctx:
    env: DefEnv
    cfg: Config
    d: int
    budget: int
    V: frozenset = frozenset()
    used: int = 0
    trace: list | None = None
    goals: list = field(default_factory=list)
    proof_memo: dict = field(default_factory=dict)
    fail_memo: set = field(default_factory=set)
    sat_memo: dict = field(default_factory=dict)

    def check_sat(self, psi: Antecedent) -> bool:
        hit = self.sat_memo.get(psi)
        if hit is None:
            hit = satcheck.check_sat(self.env, psi)
            self.sat_memo[psi] = hit
        return hit

    def tick(self, n: int = 1):
        self.used += n
        if self.used > self.budget:
            raise _Budget

    def step(self, name, j):
        if self.trace is not None:
            self.trace.append(f"STEP {name} {show_entailment(j)}")

    def choices(self, seq):
        seq = list(seq)
        return seq[:1] if self.cfg.strategy == "greedy" else seq


def _wrap(chain, leaf):
    """Stack single-premise rule applications (outermost first) above leaf."""
    if leaf is None:
        return None
    for rule, seq, th in reversed(chain):
        leaf = _Node(seq, rule, [leaf], subst=th)
    return leaf


# ---------------------------------------------------------------------------
# Entry point

def decide(env: DefEnv, j: Entailment, cfg: Config | None = None,
           trace: list | None = None):
    """Decide the entailment; Valid carries a checkable proof, Invalid a
    bounded countermodel when the finite-model oracle finds one."""
    cfg = cfg or Config()
    ctx = _Ctx(env=env, cfg=cfg, d=cfg.d_wand or max(env.k_max, 1),
               budget=cfg.step_budget, trace=trace)
    j = _freshen_bound(j)
    limit = sys.getrecursionlimit()
    if limit < 30000:
        sys.setrecursionlimit(30000)
    try:
        root = _main(ctx, j)
    except _Budget:
        return ResourceExhausted(ctx.used)
    if root is None:
        witness = None
        if cfg.oracle_bound:
            try:
                r = semantics.oracle_entailment(env, j, cfg.oracle_bound,
                                                budget=5_000_000)
            except semantics.ResourceLimit:
                r = None
            if isinstance(r, semantics.Counterexample):
                witness = r
        return Invalid(witness)
    return Valid(_assemble(root))


def _freshen_bound(j: Entailment) -> Entailment:
    """Rename succedent-bound variables that clash with free variables."""
    free = fv_entailment(j)
    out = set()
    for d in j.succ:
        clash = d.bound & free
        if clash:
            avoid = set(free) | set(d.bound) | fv_disjunct(d)
            ren = {}
            for b in sorted(clash):
                nb = fresh_name(b, avoid)
                avoid.add(nb)
                ren[b] = nb
            d = Disjunct(tuple(ren.get(x, x) for x in d.ex_cells),
                         tuple(ren.get(y, y) for y in d.ex_unrelated),
                         sub_pure(d.pure, ren),
                         tuple(sub_annotated(a, ren) for a in d.spatial))
        out.add(d)
    return Entailment(j.ante, frozenset(out))


# ---------------------------------------------------------------------------
# The outer case analyses

def _main(ctx: _Ctx, j: Entailment):
    cases = proofcheck.classification_family(j)
    ctx.step("Classify", j)
    nodes = []
    for jc in cases:
        n = _main_distribute(ctx, jc)
        if n is None:
            return None
        nodes.append(n)
    if len(cases) == 1 and cases[0] == j:
        return nodes[0]
    return _Node(j, "CaseL", nodes)


def _succ_distributions(d: Disjunct, X: frozenset):
    """Succedent ↓-distribution: every free variable of X that is not a root
    of the disjunct is ↓-placed on one of its atoms.  Empty when the
    disjunct's roots are undefined or escape X (the disjunct is dropped)."""
    rd = roots(d)
    if isinstance(rd, UndefinedRoots) or not rd <= X:
        return []
    pre = frozenset().union(frozenset(), *(a.defined for a in d.spatial))
    todo = sorted(X - rd - pre)
    slots = [i for i, a in enumerate(d.spatial) if a.root != NIL]
    if not slots:
        return [] if todo else [d]
    out = []
    seen = set()
    for f in itertools.product(slots, repeat=len(todo)):
        marks = [set(a.defined) for a in d.spatial]
        for v, i in zip(todo, f):
            if d.spatial[i].root != v:
                marks[i].add(v)
        sp = tuple(AnnotatedAtom(a.atom, frozenset(m), a.unrelated)
                   for a, m in zip(d.spatial, marks))
        nd = Disjunct(d.ex_cells, d.ex_unrelated, d.pure, sp)
        if nd not in seen:
            seen.add(nd)
            out.append(nd)
    return out


def _main_distribute(ctx: _Ctx, jc: Entailment):
    psi = jc.ante
    X = frozenset(a.root for a in psi.spatial if a.root != NIL)
    for a in psi.spatial:
        X |= a.defined
    # each disjunct is replaced by the disjunction of all its ↓-placements;
    # disjuncts that cannot absorb the antecedent's address variables are
    # dropped (sound strengthening)
    newsucc = set()
    for d in jc.succ:
        newsucc.update(_succ_distributions(d, X))
    jv = Entailment(psi, frozenset(newsucc))
    n = _main_valuations(ctx, jv)
    if n is None:
        return None
    if jv == jc:
        return n
    ctx.step("Distribute", jc)
    return _Node(jc, "AndR", [n])


def _main_valuations(ctx: _Ctx, jv: Entailment):
    cases = proofcheck.valuation_family(jv)
    nodes = []
    for jc in cases:
        n = _case_start(ctx, jc)
        if n is None:
            return None
        nodes.append(n)
    if len(cases) == 1 and cases[0] == jv:
        return nodes[0]
    return _Node(jv, "CaseL", nodes)


def _case_start(ctx: _Ctx, jc: Entailment):
    ctx.tick()
    if not ctx.check_sat(jc.ante):
        ctx.step("Unsat", jc)
        return _Node(jc, "Unsat", [])
    if not jc.ante.spatial:
        return _emp_node(ctx, jc)
    ctx.V = frozenset().union(frozenset(),
                              *(cells_spatial(d.spatial) - d.bound
                                for d in jc.succ))
    return _prove_goal(ctx, jc, [])


def _emp_node(ctx: _Ctx, j: Entailment):
    for d in j.succ:
        if d.spatial or d.ex_cells:
            continue
        bound = set(d.ex_unrelated)
        ok = True
        for at in d.pure:
            if bound & set(at[1:]):
                if at[0] != "ne" or at[1] == at[2]:
                    ok = False
                    break
            elif not satcheck.pure_entails(j.ante.pure, at):
                ok = False
                break
        if ok:
            ctx.step("Emp", j)
            return _Node(j, "Emp", [])
    return None


# ---------------------------------------------------------------------------
# The search loop: one call per (normalized) goal on the path

def _prove_goal(ctx: _Ctx, j: Entailment, hist):
    ctx.tick()
    if not j.succ:
        return None
    if not ctx.check_sat(j.ante):
        ctx.step("Unsat", j)
        return _Node(j, "Unsat", [])
    if not j.ante.spatial:
        return _emp_node(ctx, j)
    c, ren = canonical_with_renaming(j)
    for c2, ren2, box in hist:
        if c2 == c:
            inv = {cv: v for v, cv in ren}
            th = {v: inv[cv] for v, cv in ren2 if inv[cv] != v}
            ctx.step("Bud", j)
            return _Node(j, "Subst", [], companion=box, subst=th)
    cached = ctx.proof_memo.get(j)
    if cached is not None:
        return cached
    fkey = (j, tuple(h[0] for h in hist))
    if fkey in ctx.fail_memo:
        return None
    box = _Box()
    hist2 = hist + [(c, ren, box)]
    ctx.goals.append((j, len(hist), tuple(h[0] for h in hist)))
    node = _iteration(ctx, j, hist2)
    if node is not None:
        box.node = node
        if _self_contained(node):
            ctx.proof_memo[j] = node
    else:
        ctx.fail_memo.add(fkey)
    return node


def _self_contained(node: _Node) -> bool:
    """True when every bud in the subtree points at a companion inside it,
    so the subtree is a complete proof reusable in any context."""
    ids = set()
    buds = []
    stack = [node]
    while stack:
        n = stack.pop()
        if id(n) in ids:
            continue
        ids.add(id(n))
        if n.companion is not None:
            buds.append(n)
        stack.extend(n.premises)
    return all(b.companion.node is not None and
               id(b.companion.node) in ids for b in buds)


def _common_roots(j: Entailment) -> frozenset:
    r = roots(j.ante)
    for d in j.succ:
        rd = roots(d)
        r &= rd if not isinstance(rd, UndefinedRoots) else frozenset()
    return r


def _iteration(ctx: _Ctx, j: Entailment, hist2):
    for j2, chain in _factor_alternatives(ctx, j, (), 0):
        for x in ctx.choices(sorted(_common_roots(j2))):
            n = _after_root(ctx, j2, x, hist2)
            if n is not None:
                return _wrap(chain, n)
    return None


def _factor_alternatives(ctx: _Ctx, j: Entailment, chain, depth):
    """Yield (goal, rule chain) states in which a common root exists,
    factoring succedent disjuncts as needed."""
    if _common_roots(j):
        yield j, chain
        return
    if depth > 2 * len(j.succ) + 2 or not j.succ:
        return
    cands = []
    for y in sorted(roots(j.ante)):
        for d in sorted(j.succ, key=show_disjunct):
            for ai, a in enumerate(d.spatial):
                if y in a.defined and isinstance(a.atom, PredCall):
                    cands.append((y, d, ai))
    for y, d, ai in ctx.choices(cands):
        res = _apply_factor(ctx, j, d, ai, y)
        if res is None:
            continue
        j2, more = res
        yield from _factor_alternatives(ctx, j2, chain + tuple(more),
                                        depth + 1)


def _apply_factor(ctx: _Ctx, j: Entailment, D: Disjunct, ai: int, y: str):
    """BoundedFactor on one succedent occurrence P'(t⃗)∧y↓, followed by the
    name case analysis for the freshly bound component arguments.  Returns
    (resulting goal, rule chain) or None when the side conditions fail."""
    A = D.spatial[ai]
    x = A.root
    if not satcheck.pure_entails(j.ante.pure, ne(x, y)):
        return None
    head, groups = A.atom.arg_groups()
    comps = list(zip(A.atom.sym.wands, groups))
    P = A.atom.sym.head
    avoid = set(fv_entailment(j)) | set(D.bound)
    for dd in j.succ:
        avoid |= dd.bound
    cands = []
    for keep_ix in _subsets(range(len(comps))):
        q1 = [comps[i] for i in keep_ix]
        q2 = [comps[i] for i in range(len(comps)) if i not in keep_ix]
        for q in sorted(wands.dep(ctx.env, P)):
            if not {w[0][0] for w in q2} <= wands.dep(ctx.env, q):
                continue
            arity = ctx.env.pred(q).arity
            ws = []
            av = set(avoid)
            for k in range(arity - 1):
                w = fresh_name("w", av)
                av.add(w)
                ws.append(w)
            m1 = len(({g[0] for _, g in q1} | {y}) - ctx.V)
            m2 = len({g[0] for _, g in q2} - ctx.V)
            if m1 > ctx.d or m2 > ctx.d:
                continue
            for d1 in _mark_splits(A.defined - {y}):
                def1, def2 = d1
                sym1 = PredSym(P, tuple(w for w, _ in q1) + ((q, arity),))
                args1 = tuple(head) + tuple(t for _, g in q1 for t in g) + \
                    (y, *ws)
                sym2 = PredSym(q, tuple(w for w, _ in q2))
                args2 = (y, *ws) + tuple(t for _, g in q2 for t in g)
                a1 = AnnotatedAtom(PredCall(sym1, args1), def1, A.unrelated)
                a2 = AnnotatedAtom(PredCall(sym2, args2), def2, A.unrelated)
                nd = Disjunct(D.ex_cells + tuple(ws), D.ex_unrelated, D.pure,
                              D.spatial[:ai] + (a1, a2) + D.spatial[ai + 1:])
                cands.append((nd, tuple(ws), ai))
    chain = [("BoundedFactor", j, None)]
    base = j.succ - {D}
    if not cands:
        # no admissible division within the wand depth bound: drop the
        # disjunct (sound strengthening)
        j1 = Entailment(j.ante, base)
        ctx.step("Factor", j1)
        return (j1, chain) if j1.succ else None
    dedup = []
    seen = set()
    for nd, ws, pos in cands:
        key = alpha_disjunct(nd)
        if key not in seen:
            seen.add(key)
            dedup.append((nd, ws, pos))
    j1 = Entailment(j.ante, base | frozenset(nd for nd, _, _ in dedup))
    vn = sorted(fv_entailment(j)) + [NIL]
    out = set()
    for nd, ws, pos in dedup:
        variants = [nd]
        for w in ws:
            nxt = []
            for dv in variants:
                # fresh-distinct case: w differs from everything named and is
                # allocated inside the left part's footprint
                block = {ne(w, t) for t in vn if t != w}
                sp = list(dv.spatial)
                a1 = sp[pos]
                sp[pos] = AnnotatedAtom(a1.atom, a1.defined | {w},
                                        a1.unrelated)
                nxt.append(Disjunct(dv.ex_cells, dv.ex_unrelated,
                                    pure(set(dv.pure) | block), tuple(sp)))
                # instantiation cases
                for t in vn:
                    stripped = Disjunct(
                        tuple(b for b in dv.ex_cells if b != w),
                        dv.ex_unrelated, dv.pure, dv.spatial)
                    nxt.append(sub_disjunct(stripped, {w: t}))
            variants = nxt
        out |= set(variants)
    j2 = Entailment(j.ante, base | frozenset(out))
    if j2 != j1:
        chain.append(("AndR", j1, None))
    ctx.step("Factor", j2)
    return j2, chain


def _subsets(xs):
    xs = list(xs)
    for r in range(len(xs) + 1):
        yield from itertools.combinations(xs, r)


def _mark_splits(marks: frozenset):
    marks = sorted(marks)
    for mask in itertools.product((0, 1), repeat=len(marks)):
        yield (frozenset(m for m, b in zip(marks, mask) if b == 0),
               frozenset(m for m, b in zip(marks, mask) if b == 1))


# ---------------------------------------------------------------------------
# Unfold, case analysis, match

def _after_root(ctx: _Ctx, j: Entailment, x: str, hist2):
    fam = proofcheck.unfold_family(ctx.env, j, x)
    ctx.step("Unfold", j)
    nodes = []
    for jp in fam:
        n = _case_analysis(ctx, jp, hist2)
        if n is None:
            return None
        nodes.append(n)
    return _Node(j, "PredL", nodes)


def _case_analysis(ctx: _Ctx, jp: Entailment, hist2):
    cases = proofcheck.valuation_family(jp)
    nodes = []
    for jc in cases:
        n = _case_after_valuation(ctx, jc, hist2)
        if n is None:
            return None
        nodes.append(n)
    if len(cases) == 1 and cases[0] == jp:
        return nodes[0]
    return _Node(jp, "CaseL", nodes)


def _case_after_valuation(ctx: _Ctx, jc: Entailment, hist2):
    ctx.tick()
    if not ctx.check_sat(jc.ante):
        ctx.step("Unsat", jc)
        return _Node(jc, "Unsat", [])
    res = _match(ctx, jc)
    if res is None:
        return None
    jm, chain = res
    if not jm.ante.spatial:
        return _wrap(chain, _emp_node(ctx, jm))
    return _wrap(chain, _split_phase(ctx, jm, hist2))


def _match(ctx: _Ctx, jc: Entailment):
    """Equality elimination, per-disjunct cell alignment, shared-cell
    removal.  Returns (resulting goal, rule chain) or None when no shared
    cell exists or a side condition fails."""
    chain = []
    j = jc
    while True:
        eqs = sorted(a for a in j.ante.pure if a[0] == "eq")
        if not eqs:
            break
        _, t, u = eqs[0]
        x, v = (u, t) if t == NIL else (t, u)
        chain.append(("EqL", j, {x: v}))
        j = sub_entailment(j, {x: v})
    target = None
    for ci, a in enumerate(j.ante.spatial):
        if isinstance(a.atom, PointsTo) and a.root != NIL and not a.unrelated:
            x = a.root
            if all(any(isinstance(b.atom, PointsTo) and b.root == x
                       for b in d.spatial) for d in j.succ) and j.succ:
                target = ci
                break
    if target is None:
        return None
    ci = target
    cell = j.ante.spatial[ci]
    x, u = cell.root, cell.atom.contents
    newds = set()
    for d in j.succ:
        d2 = _match_disjunct(j.ante.pure, d, x, u)
        if d2 is not None:
            newds.add(d2)
    j2 = Entailment(j.ante, frozenset(newds))
    if j2 != j:
        chain.append(("AndR", j, None))
        j = j2
    if not j.succ:
        return None
    for w in cell.defined:
        if not satcheck.pure_entails(j.ante.pure, eq(w, x)):
            return None
    p_ante = Antecedent(j.ante.undef | {x}, j.ante.pure,
                        j.ante.spatial[:ci] + j.ante.spatial[ci + 1:])
    stripped = set()
    for d in j.succ:
        sd = _strip_cell(d, x, u)
        if sd is None:
            return None
        stripped.add(sd)
    jr = Entailment(p_ante, frozenset(stripped))
    chain.append(("StarMapsto", j, None))
    ctx.step("Match", jr)
    return jr, chain


def _match_disjunct(pi, d: Disjunct, x, u):
    """Align one succedent disjunct with the antecedent cell x↦(u⃗):
    equate contents, instantiate bound cell variables, drop the disjunct on a
    contradiction, discharge the marks on the matched cell.  Returns the
    aligned disjunct or None (disjunct dropped)."""
    pure_d = set()
    for at in d.pure:
        pure_d.add(at)
    for a in d.spatial:
        if isinstance(a.atom, PointsTo) and a.root == x:
            for s, t in zip(u, a.atom.contents):
                pure_d.add(eq(s, t))
    pure_d = set(pure(pure_d))
    ex_cells = list(d.ex_cells)
    sp = list(d.spatial)
    while True:
        inst = next((at for at in sorted(pure_d)
                     if at[0] == "eq" and (at[1] in ex_cells or
                                           at[2] in ex_cells)), None)
        if inst is None:
            break
        _, t1, t2 = inst
        z, t = (t1, t2) if t1 in ex_cells else (t2, t1)
        ex_cells.remove(z)
        th = {z: t}
        pure_d = set(sub_pure(frozenset(pure_d), th))
        sp = [sub_annotated(a, th) for a in sp]
    bound = set(ex_cells) | set(d.ex_unrelated)
    out_pure = set()
    for at in pure_d:
        op, t1, t2 = at
        if op == "eq":
            if t1 not in bound and t2 not in bound:
                return None  # contradicts the complete valuation
            out_pure.add(at)
        else:
            if t1 == t2:
                return None
            if t1 in bound or t2 in bound:
                out_pure.add(at)
            # free ≠ free is implied by the valuation and dropped
    for a in sp:
        if isinstance(a.atom, PointsTo):
            if (set(a.unrelated) | set(d.ex_unrelated)) & set(a.atom.contents):
                return None  # an "unrelated" variable cannot be a leaf
    sp2 = []
    found = False
    for a in sp:
        if isinstance(a.atom, PointsTo) and a.root == x:
            for w in a.defined:
                if not satcheck.pure_entails(pi, eq(w, x)):
                    return None
            for w in a.unrelated:
                if not satcheck.pure_entails(pi, ne(w, x)):
                    return None
                if not all(satcheck.pure_entails(pi, ne(w, v)) or
                           satcheck.pure_entails(pi, eq(v, x))
                           for v in a.atom.contents):
                    return None
            a = AnnotatedAtom(a.atom)
            if a.atom.contents == u:
                found = True
        sp2.append(a)
    if not found:
        return None
    return Disjunct(tuple(ex_cells), d.ex_unrelated, pure(out_pure),
                    tuple(sp2))


def _strip_cell(d: Disjunct, x, u):
    for i, a in enumerate(d.spatial):
        if isinstance(a.atom, PointsTo) and a.root == x \
                and a.atom.contents == u and not a.defined and not a.unrelated:
            return Disjunct(d.ex_cells, d.ex_unrelated, d.pure,
                            d.spatial[:i] + d.spatial[i + 1:])
    return None


# ---------------------------------------------------------------------------
# Split and normalize

def _ante_groups(psi: Antecedent):
    return proofcheck.ante_groups(psi)


def _extra_definedness(j: Entailment):
    """Every antecedent root missing from a disjunct's address variables is
    ↓-placed on one of the disjunct's atoms (one new disjunct per placement)."""
    rpsi = roots(j.ante)
    newsucc = set()
    changed = False
    for d in j.succ:
        rd = roots(d)
        have = (rd if not isinstance(rd, UndefinedRoots) else frozenset()) | \
            (cells_spatial(d.spatial) - d.bound)
        missing = sorted(rpsi - have)
        if not missing:
            newsucc.add(d)
            continue
        changed = True
        slots = [i for i, a in enumerate(d.spatial) if a.root != NIL]
        if not slots:
            continue  # dropped: emp disjunct cannot allocate the root
        for f in itertools.product(slots, repeat=len(missing)):
            marks = [set(a.defined) for a in d.spatial]
            for v, i in zip(missing, f):
                if d.spatial[i].root != v:
                    marks[i].add(v)
            sp = tuple(AnnotatedAtom(a.atom, frozenset(m), a.unrelated)
                       for a, m in zip(d.spatial, marks))
            newsucc.add(Disjunct(d.ex_cells, d.ex_unrelated, d.pure, sp))
    return (Entailment(j.ante, frozenset(newsucc)), changed)


def _grouping_pass(ctx: _Ctx, j: Entailment):
    """Factor (or drop) succedent occurrences whose ↓-variable lives in a
    different antecedent group than the occurrence's root; yields
    (goal, chain) alternatives with all occurrences resolved.  May yield
    nothing when every alternative empties the succedent."""
    groups = _ante_groups(j.ante)
    gof = {}
    for gi, (_, vs) in enumerate(groups):
        for v in vs:
            gof[v] = gi

    def offending(jj):
        for d in sorted(jj.succ, key=show_disjunct):
            for ai, a in enumerate(d.spatial):
                if a.root in d.bound or a.root == NIL:
                    continue
                rg = gof.get(a.root)
                if rg is None:
                    continue
                for y in sorted(a.defined - d.bound):
                    if y not in gof:
                        # ↓ on a variable outside every antecedent group:
                        # the disjunct cannot describe the heap; drop it
                        return ("drop", d, ai, y)
                    if gof[y] != rg:
                        return ("factor", d, ai, y)
        return None

    limit = 3 * max(1, len(j.succ)) + 3

    def go(jj, chain, fdepth):
        ctx.tick()
        off = offending(jj)
        if off is None:
            yield jj, chain
            return
        kind, d, ai, y = off
        if kind == "factor" and isinstance(d.spatial[ai].atom, PredCall) \
                and fdepth < limit:
            res = _apply_factor(ctx, jj, d, ai, y)
            if res is not None:
                j2, more = res
                yield from go(j2, chain + tuple(more), fdepth + 1)
        # dropping the offending disjunct is always a sound fallback
        j1 = Entailment(jj.ante, jj.succ - {d})
        if j1.succ:
            yield from go(j1, chain + (("AndR", jj, None),), fdepth)

    yield from go(j, (), 0)


def _existential_disequality(j: Entailment):
    """Add the full disequality block between each disjunct-bound variable
    and every named term."""
    vn = sorted(fv_entailment(j)) + [NIL]
    newsucc = set()
    changed = False
    for d in j.succ:
        block = set()
        for b in (*d.ex_cells, *d.ex_unrelated):
            for t in vn:
                if t != b:
                    block.add(ne(b, t))
            for b2 in d.bound:
                if b2 != b:
                    block.add(ne(b, b2))
        np = pure(set(d.pure) | block)
        if np != d.pure:
            changed = True
        newsucc.add(Disjunct(d.ex_cells, d.ex_unrelated, np, d.spatial))
    return Entailment(j.ante, frozenset(newsucc)), changed


def _unrelatedness(j: Entailment):
    """For every ↓-marked *bound* variable of a disjunct, mark the atoms of
    the other antecedent groups as unrelated to it (x⇑).  Free variables are
    excluded: a free variable may name a leaf of another group's heap, so the
    mark would not preserve validity; for a bound variable the disequality
    block rules that out."""
    groups = _ante_groups(j.ante)
    gof = {}
    for gi, (_, vs) in enumerate(groups):
        for v in vs:
            gof[v] = gi
    newsucc = set()
    changed = False
    for d in j.succ:
        bgrp = {}  # bound var -> group of its atom
        agrp = []
        for a in d.spatial:
            fa = ({a.root} | a.defined) - d.bound
            g = next((gof[v] for v in sorted(fa) if v in gof), None)
            agrp.append(g)
        for ai, a in enumerate(d.spatial):
            for v in ({a.root} | a.defined) & d.bound:
                bgrp[v] = agrp[ai]
        sp = []
        for ai, a in enumerate(d.spatial):
            unr = set(a.unrelated)
            for bi, b in enumerate(d.spatial):
                if agrp[bi] == agrp[ai] or agrp[bi] is None or agrp[ai] is None:
                    continue
                for v in b.defined & d.bound:
                    home = gof.get(v, bgrp.get(v))
                    if home is not None and home != agrp[ai] and v != a.root:
                        unr.add(v)
            sp.append(AnnotatedAtom(a.atom, a.defined, frozenset(unr)))
        nd = Disjunct(d.ex_cells, d.ex_unrelated, d.pure, tuple(sp))
        if nd != d:
            changed = True
        newsucc.add(nd)
    return Entailment(j.ante, frozenset(newsucc)), changed


def _split_phase(ctx: _Ctx, jm: Entailment, hist2):
    chain = []
    j, ch = _extra_definedness(jm)
    if ch:
        chain.append(("AndR", jm, None))
    for j2, fchain in _grouping_pass(ctx, j):
        chain2 = list(chain) + list(fchain)
        j3, ch = _existential_disequality(j2)
        if ch:
            chain2.append(("AndR", j2, None))
        j4, ch = _unrelatedness(j3)
        if ch:
            chain2.append(("AndR", j3, None))
        j5, ch = _drop_unsat(ctx, j4)
        if ch:
            chain2.append(("AndR", j4, None))
            j4 = j5
        if not j4.succ:
            continue
        ctx.step("Split", j4)
        node = _split_rule(ctx, j4, hist2, {})
        if node is not None:
            return _wrap(chain2, node)
        if ctx.cfg.strategy == "greedy":
            break
    return None


def _split_rule(ctx: _Ctx, j: Entailment, hist2, memo):
    key = canonical(j)
    if key in memo:
        return memo[key]
    ctx.tick()
    groups = _ante_groups(j.ante)
    if len(groups) <= 1:
        jn, nchain = _normalize_chain(ctx, j)
        res = _wrap(nchain, _prove_goal(ctx, jn, hist2))
        memo[key] = res
        return res
    table = proofcheck.split_premise_table(j)
    if table is None:
        memo[key] = None
        return None
    prem_nodes = []
    seen_ids = set()
    res = None
    ok = True
    for i1 in sorted(table, key=sorted):
        left, right = table[i1]
        resolved = None
        for cand in (left, right):
            if not cand.succ:
                continue
            n = _split_rule(ctx, cand, hist2, memo)
            if n is not None:
                resolved = n
                break
        if resolved is None:
            ok = False
            break
        if id(resolved) not in seen_ids:
            seen_ids.add(id(resolved))
            prem_nodes.append(resolved)
    if ok:
        res = _Node(j, "SplitRule", prem_nodes)
    memo[key] = res
    return res


def _norm_dup(j: Entailment) -> Entailment:
    pool = j.ante.undef - fv_spatial(j.ante.spatial)
    ds = sorted(j.succ, key=show_disjunct)
    kept = []
    for d in ds:
        if any(proofcheck._renamed_equal(d, k, pool) for k in kept):
            continue
        kept.append(d)
    return Entailment(j.ante, frozenset(kept))


def _norm_prune(j: Entailment) -> Entailment:
    used = fv_spatial(j.ante.spatial)
    for d in j.succ:
        used |= fv_disjunct(d)
    np = pure(at for at in j.ante.pure
              if all(t == NIL or t in used for t in at[1:]))
    nu = j.ante.undef & used
    return Entailment(Antecedent(nu, np, j.ante.spatial), j.succ)


def _drop_unsat(ctx: _Ctx, j: Entailment):
    """Drop succedent disjuncts that are unsatisfiable together with the
    antecedent's pure part and ↑ marks (sound strengthening)."""
    keep = []
    changed = False
    for d in sorted(j.succ, key=show_disjunct):
        ctx.tick()
        pi = pure(set(j.ante.pure) | set(d.pure))
        sp = tuple(AnnotatedAtom(a.atom, a.defined, frozenset())
                   for a in d.spatial)
        psi = Antecedent(j.ante.undef, pi, sp)
        if ctx.check_sat(psi):
            keep.append(d)
        else:
            changed = True
    if not changed:
        return j, False
    return Entailment(j.ante, frozenset(keep)), True


def _norm_implied(j: Entailment) -> Entailment:
    """Drop annotation-implied disequalities that pin otherwise-dead
    variables: b ≠ t where b is an allocated bound variable of the disjunct
    and t an ↑-marked variable occurring in no spatial part."""
    live = set(fv_spatial(j.ante.spatial))
    for d in j.succ:
        for a in d.spatial:
            live.add(a.root)
            live.update(a.defined, a.unrelated)
            live.update(a.atom.contents if isinstance(a.atom, PointsTo)
                        else a.atom.args)
    stale = j.ante.undef - live
    if not stale:
        return j
    newsucc = set()
    for d in j.succ:
        alloc = proofcheck._alloc_bound(d)
        np = pure(at for at in d.pure
                  if not (at[0] == "ne" and
                          ((at[1] in alloc and at[2] in stale) or
                           (at[2] in alloc and at[1] in stale))))
        newsucc.add(Disjunct(d.ex_cells, d.ex_unrelated, np, d.spatial))
    return Entailment(j.ante, frozenset(newsucc))


def _norm_upar(j: Entailment) -> Entailment:
    return Entailment(j.ante,
                      frozenset(proofcheck._upar_strip(d) for d in j.succ))


def _normalize_chain(ctx: _Ctx, j: Entailment):
    chain = []
    while True:
        j1 = _norm_dup(j)
        if j1 != j:
            chain.append(("OrR", j, None))
            j = j1
        j1 = _norm_implied(j)
        if j1 != j:
            chain.append(("AndR", j, None))
            j = j1
        j1, ch = _drop_unsat(ctx, j)
        if ch:
            chain.append(("AndR", j, None))
            j = j1
        j1 = _norm_prune(j)
        if j1 != j:
            chain.append(("AndL", j, None))
            j = j1
        j1 = _norm_upar(j)
        if j1 != j:
            chain.append(("UparrowR", j, None))
            j = j1
        else:
            break
    ctx.step("Normalize", j)
    return j, chain


# ---------------------------------------------------------------------------
# Proof assembly

def _assemble(root: _Node) -> proofcheck.ProofTree:
    nodes = {}
    counter = itertools.count()

    def walk(n: _Node, path):
        my = next(counter)
        comp_id = None
        if n.companion is not None:
            target = n.companion.node
            comp_id = None
            idx = None
            for k in range(len(path) - 1, -1, -1):
                if path[k][0] is target:
                    comp_id = path[k][1]
                    idx = k
                    break
            assert comp_id is not None, "bud companion is not on the path"
            assert any(obj.rule == "StarMapsto" for obj, _ in path[idx + 1:]), \
                "no shared-cell removal between companion and bud"
        prem_ids = [walk(p, path + [(n, my)]) for p in n.premises]
        nodes[my] = proofcheck.make_node(
            my, n.sequent, n.rule, tuple(prem_ids), comp_id,
            dict(n.subst) if n.subst is not None else None)
        return my

    walk(root, [])
    return proofcheck.ProofTree(0, nodes)


# ---------------------------------------------------------------------------
# Public single-step operations

def unfold(env: DefEnv, j: Entailment, x: str | None = None):
    """Both-sides clause unfolding at a common root; raises NoCommonRoot."""
    common = _common_roots(j)
    if x is None:
        if not common:
            raise NoCommonRoot(show_entailment(j))
        x = min(common)
    elif x not in common:
        raise NoCommonRoot(x)
    return proofcheck.unfold_family(env, j, x)


def factor(env: DefEnv, j: Entailment, y: str,
           V: frozenset = frozenset(), d: int | None = None):
    """Factor every admissible succedent occurrence marked y↓ (first found);
    returns the goal after the name case analysis.  Raises DepthExceeded if
    no occurrence admits a division within the wand depth bound."""
    ctx = _Ctx(env=env, cfg=Config(), d=d or max(env.k_max, 1),
               budget=10 ** 9, V=frozenset(V))
    for dd in sorted(j.succ, key=show_disjunct):
        for ai, a in enumerate(dd.spatial):
            if y in a.defined and isinstance(a.atom, PredCall):
                res = _apply_factor(ctx, j, dd, ai, y)
                if res is None:
                    continue
                j2, chain = res
                if len(chain) == 1 and j2.succ == j.succ - {dd}:
                    continue  # only the disjunct drop: no division existed
                return j2
    raise DepthExceeded(y)


def match_step(env: DefEnv, j: Entailment):
    """Equality elimination, cell alignment and shared-cell removal;
    raises NoCommonCell when no antecedent cell is shared by all disjuncts."""
    ctx = _Ctx(env=env, cfg=Config(), d=max(env.k_max, 1), budget=10 ** 9)
    res = _match(ctx, j)
    if res is None:
        raise NoCommonCell(show_entailment(j))
    return res[0]


def normalize(j: Entailment) -> Entailment:
    """Duplicate-disjunct, stale-disequality, dead-variable and vacuous-⇑
    elimination to a fixed point (the search additionally drops unsatisfiable
    disjuncts, which needs the definitions and lives in the internal chain)."""
    while True:
        j1 = _norm_upar(_norm_prune(_norm_implied(_norm_dup(j))))
        if j1 == j:
            return j
        j = j1


def history_match(H, j: Entailment):
    """Earliest H entry equal to j up to free-variable renaming; returns
    (index, renaming dict) or None."""
    c, ren = canonical_with_renaming(j)
    for i, h in enumerate(H):
        c2, ren2 = canonical_with_renaming(h)
        if c2 == c:
            inv = {cv: v for v, cv in ren}
            th = {v: inv[cv] for v, cv in ren2 if inv[cv] != v}
            return i, th
    return None


def split(env: DefEnv, j: Entailment, V: frozenset = frozenset(),
          d: int | None = None):
    """The (Split) phase as a set-of-alternatives: apply extra definedness,
    grouping, existential disequality, unrelatedness introduction and
    existential scope splitting, then enumerate the subgoal sets of all
    choice functions of the (Split) rule.  Returns a list of frozensets of
    sequents (one per alternative); single-group goals yield one singleton."""
    ctx = _Ctx(env=env, cfg=Config(), d=d or max(env.k_max, 1),
               budget=10 ** 9, V=frozenset(V))
    j1, _ = _extra_definedness(j)
    alts = []
    for j2, _chain in _grouping_pass(ctx, j1):
        j3, _ = _existential_disequality(j2)
        j4, _ = _unrelatedness(j3)
        alts.extend(_split_alternatives(j4))
    out = []
    seen = set()
    for g in alts:
        if g not in seen:
            seen.add(g)
            out.append(g)
    return out


def _split_alternatives(j: Entailment):
    groups = _ante_groups(j.ante)
    if len(groups) <= 1:
        return [frozenset([j])]
    table = proofcheck.split_premise_table(j)
    if table is None:
        return []
    keys = sorted(table, key=sorted)
    options = []
    for i1 in keys:
        left, right = table[i1]
        opts = [g for cand in (left, right) if cand.succ
                for g in _split_alternatives(cand)]
        if not opts:
            return []
        options.append(opts)
    out = []
    seen = set()
    for combo in itertools.product(*options):
        g = frozenset().union(*combo)
        if g not in seen:
            seen.add(g)
            out.append(g)
    return out


@dataclass(frozen=True)
class Closed:
    root: object  # the closed subtree (internal node representation)


@dataclass(frozen=True)
class Failed:
    pass


def main_loop(env: DefEnv, j: Entailment, V: frozenset, d: int,
              cfg: Config | None = None, trace: list | None = None):
    """The inner search loop on a single prepared goal (all outer case
    analyses already applied)."""
    cfg = cfg or Config()
    ctx = _Ctx(env=env, cfg=cfg, d=d, budget=cfg.step_budget,
               V=frozenset(V), trace=trace)
    node = _prove_goal(ctx, j, [])
    return Closed(node) if node is not None else Failed()


# ---------------------------------------------------------------------------
# Normal form check

def is_normal(j: Entailment, V0: frozenset = frozenset(),
              d: int | None = None) -> list:
    """Check the twelve normal-form conditions; returns a list of violated
    condition names (empty means normal)."""
    out = []
    V = fv_entailment(j)
    groups = _ante_groups(j.ante)
    if len(groups) != 1:
        out.append("single group")
        agrp = frozenset().union(frozenset(), *(g[1] for g in groups))
    else:
        agrp = groups[0][1]
    if (j.ante.undef & agrp) or (j.ante.undef | agrp) != V:
        out.append("variable")
    for dd in sorted(j.succ, key=show_disjunct):
        rd = roots(dd)
        if isinstance(rd, UndefinedRoots):
            out.append("disjunct root")
            continue
        da = rd | (cells_spatial(dd.spatial) - dd.bound)
        if da != agrp:
            out.append("group")
        for a in dd.spatial:
            terms = (a.atom.root, *a.atom.contents) \
                if isinstance(a.atom, PointsTo) else a.atom.args
            for y in a.defined:
                if y not in terms:
                    out.append("disjunct definedness")
        marked = cells_spatial(dd.spatial)
        if not set(dd.ex_cells) <= marked:
            out.append("disjunct existential")
        if not set(dd.ex_unrelated) <= fv_spatial(dd.spatial):
            out.append("unrelated existential")
        want = set()
        for b in dd.bound:
            for t in sorted(V | dd.bound | {NIL}):
                if t != b:
                    want.add(ne(b, t))
        if dd.pure != frozenset(want):
            out.append("disjunct equality")
    block = {ne(t, u) for t, u in
             itertools.combinations(sorted(V | {NIL}), 2)}
    if j.ante.pure != frozenset(block):
        out.append("equality")
    pool = V - fv_spatial(j.ante.spatial)
    ds = sorted(j.succ, key=show_disjunct)
    for a, b in itertools.combinations(ds, 2):
        if proofcheck._renamed_equal(a, b, pool):
            out.append("disjunct renaming")
    used = fv_spatial(j.ante.spatial)
    for dd in j.succ:
        used |= fv_disjunct(dd)
    if not (j.ante.undef | fv_pure(j.ante.pure)) <= used:
        out.append("antecedent variable")
    if d is not None:
        for atoms in (j.ante.spatial,
                      *(dd.spatial for dd in j.succ)):
            for a in atoms:
                if isinstance(a.atom, PredCall) and a.atom.sym.wands:
                    _, comps = a.atom.arg_groups()
                    m = len({g[0] for g in comps} - frozenset(V0))
                    if m > d:
                        out.append("wand")
    return sorted(set(out))
