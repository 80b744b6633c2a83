"""Cyclic-proof representation and independent validation.

A proof is a tree of rule instances over entailment sequents; leaves are
either axioms (Emp, Unsat) or buds (Subst) pointing back at an interior
companion node.  check_proof re-derives every rule instance from its
conclusion — clause unfoldings, case families, factorizations, splits — and
verifies the cyclic side condition that at least one shared-cell removal
(StarMapsto) separates every bud from its companion.

This module deliberately shares only the syntax, satisfiability and residual
("strong wand") predicate machinery with the proof search, so acceptance of
an emitted proof is a genuine cross-check.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

from . import satcheck, wands
from .parse import ParseError, parse_entailment
from .syntax import (
    AnnotatedAtom, Antecedent, DefEnv, Disjunct, Entailment, NIL, PointsTo,
    PredCall, PredSym, alpha_disjunct, alpha_show, canonical, cells, eq,
    fv_disjunct, fv_entailment, fv_pure, fv_spatial, ne, pure, roots,
    show_entailment, sub_annotated, sub_disjunct, sub_entailment, sub_pure,
    UndefinedRoots,
)

# The fixed rule vocabulary.  The search emits the subset for which a
# verifier exists below; EXPANSIONS documents, as data, which primitive
# rules each emitted (possibly composite) rule name abbreviates.
RULES = frozenset({
    "Subst", "Emp", "Unsat", "AndL", "AndElim", "OrElim", "AndR", "UpElim",
    "OrR", "ExistsR", "EqL", "EqR", "DownOutL", "UparrowR", "DownOutR",
    "DownR", "CaseL", "Factor", "PredL", "PredR", "StarMapsto", "ExAmalg1",
    "ExAmalg2", "Star", "BoundedFactor", "SplitRule",
})

EXPANSIONS = {
    # emitted name -> primitive rules the composite step expands to
    "CaseL": ("CaseL",),
    "AndR": ("AndR", "AndElim", "OrR", "ExistsR", "EqR", "DownR"),
    "EqL": ("EqL",),
    "PredL": ("PredL", "PredR", "DownOutL", "DownOutR", "OrElim"),
    "StarMapsto": ("StarMapsto",),
    "BoundedFactor": ("Factor",),
    "SplitRule": ("ExAmalg1", "ExAmalg2", "Star"),
    "OrR": ("OrR",),
    "AndL": ("AndL", "UpElim"),
    "UparrowR": ("ExistsR", "AndElim"),
    "Emp": ("Emp",),
    "Unsat": ("Unsat",),
    "Subst": ("Subst",),
}


@dataclass(frozen=True)
class ProofNode:
    id: int
    sequent: Entailment
    rule: str
    premises: tuple
    companion: int | None = None
    subst: tuple | None = None  # sorted tuple of (var, term) pairs

    @property
    def theta(self) -> dict:
        return dict(self.subst or ())


def make_node(id, sequent, rule, premises, companion=None, subst=None):
    st = tuple(sorted(subst.items())) if isinstance(subst, dict) else subst
    return ProofNode(id, sequent, rule, tuple(premises), companion, st)


@dataclass(frozen=True)
class ProofTree:
    root: int
    nodes: dict  # id -> ProofNode


@dataclass(frozen=True)
class Violation:
    node: int
    message: str


class MalformedProof(Exception):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------------------
# Serialization

def serialize(p: ProofTree) -> str:
    out = {"root": p.root, "nodes": []}
    for nid in sorted(p.nodes):
        n = p.nodes[nid]
        rec = {"id": n.id, "rule": n.rule,
               "sequent": show_entailment(n.sequent),
               "premises": list(n.premises)}
        if n.companion is not None:
            rec["companion"] = n.companion
        if n.subst is not None:
            rec["subst"] = {v: t for v, t in n.subst}
        out["nodes"].append(rec)
    return json.dumps(out, indent=2, sort_keys=False) + "\n"


def deserialize(document: str) -> ProofTree:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise MalformedProof("$", f"not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise MalformedProof("$", "top level must be an object")
    if not isinstance(doc.get("root"), int):
        raise MalformedProof("root", "missing or non-integer")
    if not isinstance(doc.get("nodes"), list):
        raise MalformedProof("nodes", "missing or not a list")
    nodes = {}
    for i, rec in enumerate(doc["nodes"]):
        path = f"nodes[{i}]"
        if not isinstance(rec, dict):
            raise MalformedProof(path, "node must be an object")
        nid = rec.get("id")
        if not isinstance(nid, int):
            raise MalformedProof(f"{path}.id", "missing or non-integer")
        rule = rec.get("rule")
        if rule not in RULES:
            raise MalformedProof(f"{path}.rule", f"unknown rule {rule!r}")
        try:
            seq = parse_entailment(rec.get("sequent", ""))
        except (ParseError, TypeError) as e:
            raise MalformedProof(f"{path}.sequent", str(e)) from None
        prem = rec.get("premises")
        if not isinstance(prem, list) or not all(isinstance(k, int) for k in prem):
            raise MalformedProof(f"{path}.premises", "must be a list of ids")
        comp = rec.get("companion")
        if comp is not None and not isinstance(comp, int):
            raise MalformedProof(f"{path}.companion", "must be an id")
        sub = rec.get("subst")
        if sub is not None and not (isinstance(sub, dict) and all(
                isinstance(k, str) and isinstance(v, str)
                for k, v in sub.items())):
            raise MalformedProof(f"{path}.subst", "must map variables to terms")
        if nid in nodes:
            raise MalformedProof(f"{path}.id", f"duplicate id {nid}")
        nodes[nid] = make_node(nid, seq, rule, tuple(prem), comp, sub)
    if doc["root"] not in nodes:
        raise MalformedProof("root", "root id not among nodes")
    return ProofTree(doc["root"], nodes)


# ---------------------------------------------------------------------------
# Shared small helpers

def _atom_addr(a: AnnotatedAtom) -> frozenset:
    base = a.defined | ({a.root} if a.root != NIL else frozenset())
    return base


def ante_groups(psi: Antecedent):
    """Partition the antecedent's atoms into groups connected by shared
    address variables; returns a list of (atom index tuple, variable set)."""
    n = len(psi.spatial)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    addr = [_atom_addr(a) for a in psi.spatial]
    for i in range(n):
        for j in range(i + 1, n):
            if addr[i] & addr[j]:
                parent[find(i)] = find(j)
    out = {}
    for i in range(n):
        out.setdefault(find(i), []).append(i)
    groups = sorted(out.values())
    return [(tuple(ix), frozenset().union(*(addr[i] for i in ix)))
            for ix in groups]


def _distributions(X, parts):
    """All ways to attach the composite mark set X to the given atoms (paper
    of record: one placement function per subgoal); a variable placed on the
    part it roots is absorbed by the root."""
    X = sorted(X)
    if not parts:
        yield ()
        return
    if not X:
        yield tuple(frozenset() for _ in parts)
        return
    if len(parts) == 1:
        # no distribution step: the composite marks stay on the single atom
        yield (frozenset(X),)
        return
    seen = set()
    for f in itertools.product(range(len(parts)), repeat=len(X)):
        assign = tuple(
            frozenset(v for v, k in zip(X, f) if k == i) - {parts[i].root}
            for i in range(len(parts)))
        if assign not in seen:
            seen.add(assign)
            yield assign


def unfold_family(env: DefEnv, j: Entailment, x: str):
    """The family of subgoals obtained by unfolding the common root x on both
    sides: per antecedent occurrence, per definition clause, per placement of
    the occurrence's composite marks; succedent occurrences are expanded
    eagerly into one disjunct per clause and placement."""
    psi = j.ante
    avoid = set(fv_entailment(j))
    for d in j.succ:
        avoid |= set(d.ex_cells) | set(d.ex_unrelated)
    new_succ = set()
    for d in j.succ:
        new_succ |= set(_expand_disjunct(env, d, x, avoid))
    new_succ = frozenset(new_succ)
    # antecedent-side fresh names must also avoid the bound names introduced
    # on the right, or the new free variables would be shadowed
    for d in new_succ:
        avoid |= d.bound
    fam = []
    for i, a in enumerate(psi.spatial):
        if a.root != x:
            continue
        if isinstance(a.atom, PointsTo):
            fam.append(Entailment(psi, new_succ))
            continue
        for fresh, cpure, cell, kids in wands.clause_instances(
                env, a.atom, avoid):
            parts = [AnnotatedAtom(cell), *(AnnotatedAtom(k) for k in kids)]
            for assign in _distributions(a.defined, parts):
                atoms = tuple(
                    AnnotatedAtom(p.atom, marks, a.unrelated)
                    for p, marks in zip(parts, assign))
                sp = psi.spatial[:i] + atoms + psi.spatial[i + 1:]
                fam.append(Entailment(
                    Antecedent(psi.undef, pure(psi.pure | cpure), sp),
                    new_succ))
    out = []
    seen = set()
    for f in fam:
        c = canonical(f)
        if c not in seen:
            seen.add(c)
            out.append(f)
    return out


def _expand_disjunct(env, d: Disjunct, x, avoid):
    idx = next((i for i, a in enumerate(d.spatial)
                if a.root == x and isinstance(a.atom, PredCall)), None)
    if idx is None:
        return [d]
    a = d.spatial[idx]
    out = []
    for fresh, cpure, cell, kids in wands.clause_instances(
            env, a.atom, set(avoid) | d.bound):
        parts = [AnnotatedAtom(cell), *(AnnotatedAtom(k) for k in kids)]
        for assign in _distributions(a.defined, parts):
            atoms = tuple(AnnotatedAtom(p.atom, marks, a.unrelated)
                          for p, marks in zip(parts, assign))
            sp = d.spatial[:idx] + atoms + d.spatial[idx + 1:]
            out.append(Disjunct(d.ex_cells + fresh, d.ex_unrelated,
                                pure(d.pure | cpure), sp))
    return out


def classification_family(j: Entailment):
    """All ways to classify the not-yet-placed free variables of the goal as
    unallocated (↑) or allocated inside one antecedent conjunct (↓)."""
    psi = j.ante
    root_vars = {a.root for a in psi.spatial if a.root != NIL}
    placed = set(psi.undef)
    for a in psi.spatial:
        placed |= a.defined
    U = sorted(fv_entailment(j) - root_vars - placed)
    slots = len(psi.spatial)
    fam = []
    for f in itertools.product(range(slots + 1), repeat=len(U)):
        undef = set(psi.undef)
        marks = [set(a.defined) for a in psi.spatial]
        for v, k in zip(U, f):
            if k == 0:
                undef.add(v)
            else:
                marks[k - 1].add(v)
        sp = tuple(AnnotatedAtom(a.atom, frozenset(m), a.unrelated)
                   for a, m in zip(psi.spatial, marks))
        fam.append(Entailment(
            Antecedent(frozenset(undef), psi.pure, sp), j.succ))
    return fam


def valuation_family(j: Entailment):
    """One premise per complete =/≠ valuation of the free variables that is
    consistent with the antecedent's pure part."""
    psi = j.ante
    fam = []
    for val in satcheck.complete_valuations(sorted(fv_entailment(j)),
                                            psi.pure):
        fam.append(Entailment(
            Antecedent(psi.undef, pure(psi.pure | val), psi.spatial), j.succ))
    return fam


# ---------------------------------------------------------------------------
# Rule verifiers.  Each returns a list of messages (empty = instance OK).

def _canon_set(js):
    return frozenset(canonical(x) for x in js)


def _chk_caseL(env, c, prems):
    got = _canon_set(p.sequent for p in prems)
    fams = [classification_family(c), valuation_family(c)]
    for fam in fams:
        if _canon_set(fam) == got:
            return []
    return ["premises match neither the variable-classification family "
            "nor the complete-valuation family"]


def _chk_predL(env, c, prems):
    rs = roots(c.ante)
    common = rs if not isinstance(rs, UndefinedRoots) else frozenset()
    for d in c.succ:
        rd = roots(d)
        common &= rd if not isinstance(rd, UndefinedRoots) else frozenset()
    got = _canon_set(p.sequent for p in prems)
    for x in sorted(common):
        if _canon_set(unfold_family(env, c, x)) == got:
            return []
    return ["premises do not cover the clause unfolding of any common root"]


def _mark_defined_ok(pi, a, w):
    return isinstance(a.atom, PointsTo) and \
        satcheck.pure_entails(pi, eq(w, a.root))


def _mark_unrelated_ok(pi, a, w):
    if not isinstance(a.atom, PointsTo):
        return False
    if not satcheck.pure_entails(pi, ne(w, a.root)):
        return False
    return all(satcheck.pure_entails(pi, ne(w, v)) or
               satcheck.pure_entails(pi, eq(v, a.root))
               for v in a.atom.contents)


def _refines(ante, prem_d: Disjunct, concl_d: Disjunct) -> bool:
    """prem_d strengthens concl_d: bound cell variables may be instantiated,
    pure atoms and ↓/⇑ marks added, and antecedent-entailed pure atoms or
    cell marks removed.  A disequality between an allocated bound variable
    and an ↑-marked (or nil) term is implied by the annotations and may also
    be removed.  Atom correspondence is positional."""
    pi = ante.pure
    if prem_d.ex_unrelated != concl_d.ex_unrelated:
        return False
    kept = set(prem_d.ex_cells)
    dom = [b for b in concl_d.ex_cells if b not in kept]
    if tuple(b for b in concl_d.ex_cells if b not in dom) != prem_d.ex_cells:
        return False
    if len(prem_d.spatial) != len(concl_d.spatial):
        return False
    values = sorted(fv_disjunct(prem_d) | set(prem_d.ex_cells) |
                    fv_pure(pi) | {NIL})
    if dom and len(values) ** len(dom) > 200000:
        return False
    for choice in itertools.product(values, repeat=len(dom)):
        th = dict(zip(dom, choice))
        if _refines_with(ante, prem_d, concl_d, th):
            return True
    return False


def _alloc_bound(d: Disjunct):
    """Bound variables allocated inside the disjunct's own heap."""
    out = set()
    for a in d.spatial:
        out.add(a.root)
        out.update(a.defined)
    return out & set(d.ex_cells)


def _implied_ne(ante, prem, at) -> bool:
    if at[0] != "ne":
        return False
    alloc = _alloc_bound(prem)
    for b, t in ((at[1], at[2]), (at[2], at[1])):
        if b in alloc and (t == NIL or t in ante.undef):
            return True
    return False


def _refines_with(ante, prem, concl, th):
    pi = ante.pure
    c_sp = [sub_annotated(a, th) for a in concl.spatial]
    for a, b in zip(c_sp, prem.spatial):
        if a.atom != b.atom:
            return False
        for w in a.defined - b.defined:
            if not _mark_defined_ok(pi, a, w):
                return False
        for w in a.unrelated - b.unrelated:
            if not _mark_unrelated_ok(pi, a, w):
                return False
    for at in sub_pure(concl.pure, th):
        if at not in prem.pure and not satcheck.pure_entails(pi, at) \
                and not _implied_ne(ante, prem, at):
            return False
    return True


def _chk_andR(env, c, prems):
    out = []
    for p in prems:
        if p.sequent.ante != c.ante:
            out.append("premise changes the antecedent")
            continue
        for d in p.sequent.succ:
            if not any(_refines(c.ante, d, cd) for cd in c.succ):
                out.append(f"premise disjunct refines no conclusion disjunct: "
                           f"{alpha_show(Entailment(c.ante, frozenset([d])))}")
    return out


def _chk_eqL(env, c, prems, node):
    th = node.theta
    if len(prems) != 1 or len(th) != 1:
        return ["EqL needs one premise and a single-binding substitution"]
    (x, t), = th.items()
    if eq(x, t) not in c.ante.pure:
        return [f"{x} = {t} is not in the antecedent"]
    expected = sub_entailment(c, th)
    if alpha_show(prems[0].sequent) != alpha_show(expected):
        return ["premise is not the substituted conclusion"]
    return []


def _chk_star_mapsto(env, c, prems):
    if len(prems) != 1:
        return ["StarMapsto needs exactly one premise"]
    p = prems[0].sequent
    psi = c.ante
    for ci, a in enumerate(psi.spatial):
        if not isinstance(a.atom, PointsTo) or a.root == NIL:
            continue
        x, u = a.root, a.atom.contents
        if a.unrelated:
            continue
        if not all(satcheck.pure_entails(psi.pure, eq(w, x))
                   for w in a.defined):
            continue
        want_ante = Antecedent(psi.undef | {x}, psi.pure,
                               psi.spatial[:ci] + psi.spatial[ci + 1:])
        if p.ante != want_ante:
            continue
        stripped = set()
        ok = True
        for d in c.succ:
            sd = _strip_cell(d, x, u)
            if sd is None:
                ok = False
                break
            stripped.add(sd)
        if ok and frozenset(stripped) == p.succ:
            return []
    return ["no shared cell removal yields the premise"]


def _strip_cell(d: Disjunct, x, u):
    for i, a in enumerate(d.spatial):
        if isinstance(a.atom, PointsTo) and a.root == x \
                and a.atom.contents == u and not a.defined and not a.unrelated:
            return Disjunct(d.ex_cells, d.ex_unrelated, d.pure,
                            d.spatial[:i] + d.spatial[i + 1:])
    return None


def _chk_bounded_factor(env, c, prems):
    if len(prems) != 1:
        return ["BoundedFactor needs exactly one premise"]
    p = prems[0].sequent
    if p.ante != c.ante:
        return ["premise changes the antecedent"]
    removed = c.succ - p.succ
    added = p.succ - c.succ
    if len(removed) != 1:
        return ["exactly one disjunct must be factored"]
    (d,) = removed
    out = []
    for nd in added:
        msg = _is_factor_child(env, c.ante.pure, d, nd)
        if msg:
            out.append(msg)
    return out


def _is_factor_child(env, pi, d: Disjunct, nd: Disjunct):
    if nd.ex_unrelated != d.ex_unrelated or nd.pure != d.pure:
        return "factor candidate changes the pure part or the ⇑ prefix"
    old = set(d.ex_cells)
    neww = [b for b in nd.ex_cells if b not in old]
    if [b for b in nd.ex_cells if b in old] != list(d.ex_cells):
        return "factor candidate loses bound variables"
    if len(nd.spatial) != len(d.spatial) + 1:
        return "factor candidate must split one atom in two"
    for ai in range(len(d.spatial)):
        if d.spatial[:ai] != nd.spatial[:ai]:
            break
        if d.spatial[ai + 1:] != nd.spatial[ai + 2:]:
            continue
        a, a1, a2 = d.spatial[ai], nd.spatial[ai], nd.spatial[ai + 1]
        msg = _factor_atoms_ok(env, pi, a, a1, a2, neww)
        if msg is None:
            return None
    return "no atom position admits the factorization"


def _factor_atoms_ok(env, pi, a, a1, a2, neww):
    if not (isinstance(a.atom, PredCall) and isinstance(a1.atom, PredCall)
            and isinstance(a2.atom, PredCall)):
        return "factored atoms must be predicate calls"
    head, comps = a.atom.arg_groups()
    h1, comps1 = a1.atom.arg_groups()
    h2, comps2 = a2.atom.arg_groups()
    if a1.atom.sym.head != a.atom.sym.head or h1 != head:
        return "left part must keep the factored call's head"
    if not comps1:
        return "left part must gain a wand component"
    c1 = list(zip(a1.atom.sym.wands, comps1))
    (qname, _), qargs = c1[-1]
    if a2.atom.sym.head != qname or tuple(h2) != tuple(qargs):
        return "right part must define the new wand component"
    y = a2.root
    if y not in a.defined:
        return "factored variable lacks a ↓ mark on the original atom"
    if not satcheck.pure_entails(pi, ne(a.root, y)):
        return "root and factored variable are not known distinct"
    if list(qargs[1:]) != list(neww):
        return "new bound variables must be the component's fresh arguments"
    chain = sorted(zip((n for n, _ in a.atom.sym.wands), comps))
    chain1 = sorted(zip((n for n, _ in a1.atom.sym.wands[:-1]), comps1[:-1]))
    chain2 = sorted(zip((n for n, _ in a2.atom.sym.wands), comps2))
    if sorted(chain1 + chain2) != chain:
        return "wand chain is not preserved by the division"
    if qname not in wands.dep(env, a.atom.sym.head):
        return "component is not a dependency of the factored predicate"
    dq = wands.dep(env, qname)
    if not {n for n, _ in chain2} <= dq:
        return "right chain escapes the component's dependencies"
    if (a1.defined | a2.defined) != a.defined - {y} \
            or (a1.defined & a2.defined):
        return "↓ marks must be split between the parts"
    if a1.unrelated != a.unrelated or a2.unrelated != a.unrelated:
        return "⇑ marks must be copied to both parts"
    return None


def _split_disjunct(d: Disjunct, y1: frozenset, y2: frozenset):
    """Split a disjunct between two address-variable groups.

    Atoms are grouped by shared address variables (bound or free); each
    component must fall entirely within y1 or y2.  A bound cell variable goes
    with the part where it is an address or a leaf; on the opposite part its
    per-atom ⇑ marks are re-bound under the part's ⇑ prefix.  Pure atoms
    follow the parts whose bound variables they mention (atoms relating bound
    variables of both parts are implied by the ↓/⇑ annotations and dropped).
    Returns (part1, part2) or None if no such split exists.
    """
    n = len(d.spatial)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    addr = [_atom_addr(a) for a in d.spatial]
    for i in range(n):
        for j in range(i + 1, n):
            if addr[i] & addr[j]:
                parent[find(i)] = find(j)
    part = [0] * n
    for comp in {find(i) for i in range(n)}:
        ix = [i for i in range(n) if find(i) == comp]
        fa = frozenset().union(*(addr[i] for i in ix)) - d.bound
        if fa and fa <= y1:
            p = 1
        elif fa and fa <= y2:
            p = 2
        else:
            return None
        for i in ix:
            part[i] = p

    home = {}
    absorbed = {1: [], 2: []}
    for b in d.ex_cells:
        addr_occ = {1: False, 2: False}
        any_occ = {1: False, 2: False}
        for i in range(n):
            a = d.spatial[i]
            p = part[i]
            if b in addr[i]:
                addr_occ[p] = True
            terms = (a.atom.root, *a.atom.contents) \
                if isinstance(a.atom, PointsTo) else a.atom.args
            if b in terms or b in a.unrelated:
                any_occ[p] = True
        if addr_occ[1] and addr_occ[2]:
            return None
        if addr_occ[1] or addr_occ[2]:
            home[b] = 1 if addr_occ[1] else 2
        else:
            home[b] = 1 if (any_occ[1] or not any_occ[2]) else 2
        # on the opposite part the variable is re-bound under the ⇑ prefix
        # (scope duplication; the ≠ block and the marks pin the witness)
        other = 2 if home[b] == 1 else 1
        if any_occ[other]:
            absorbed[other].append(b)

    out = []
    for p, ys in ((1, y1), (2, y2)):
        sp = tuple(d.spatial[i] for i in range(n) if part[i] == p)
        fvp = fv_spatial(sp)
        ex_c = tuple(b for b in d.ex_cells if home[b] == p)
        ex_u = tuple(absorbed[p]) + tuple(y for y in d.ex_unrelated
                                          if y in fvp)
        scope = set(ex_c) | set(ex_u)
        pi = set()
        for at in d.pure:
            bvs = {t for t in at[1:] if t in d.bound}
            if bvs <= scope:
                pi.add(at)
        out.append(Disjunct(ex_c, ex_u, pure(pi), sp))
    return out[0], out[1]


def split_premise_table(j: Entailment):
    """For a multi-group antecedent: the (Split) instance splitting off the
    first group.  Returns (per-subset premise pairs) as
    {I' (frozen index set): (left sequent, right sequent)} with disjuncts
    indexed in sorted display order, or None on grouping failure."""
    groups = ante_groups(j.ante)
    if len(groups) < 2:
        return None
    ix1, y1 = groups[0]
    ix2 = tuple(i for g in groups[1:] for i in g[0])
    y2 = frozenset().union(*(g[1] for g in groups[1:]))
    psi = j.ante
    g1 = tuple(psi.spatial[i] for i in sorted(ix1))
    g2 = tuple(psi.spatial[i] for i in sorted(ix2))
    ds = sorted(j.succ, key=lambda d: alpha_show(
        Entailment(Antecedent(), frozenset([d]))))
    pairs = []
    for d in ds:
        pr = _split_disjunct(d, y1, y2)
        if pr is None:
            return None
        pairs.append(pr)
    table = {}
    for bits in itertools.product((0, 1), repeat=len(ds)):
        i1 = frozenset(i for i, b in enumerate(bits) if b)
        left = Entailment(Antecedent(psi.undef | y2, psi.pure, g1),
                          frozenset(pairs[i][0] for i in sorted(i1)))
        right = Entailment(Antecedent(psi.undef | y1, psi.pure, g2),
                           frozenset(pairs[i][1]
                                     for i in range(len(ds)) if i not in i1))
        table[i1] = (left, right)
    return table


def _chk_split(env, c, prems):
    table = split_premise_table(c)
    if table is None:
        return ["antecedent does not split into disjoint groups"]
    if len(table) > 4096:
        return ["too many disjuncts to check the split exhaustively"]
    got = _canon_set(p.sequent for p in prems)
    for i1, (left, right) in table.items():
        ok = (left.succ and canonical(left) in got) or \
             (right.succ and canonical(right) in got)
        if not ok:
            return [f"no premise covers the subgoal choice for I'={sorted(i1)}"]
    return []


def _renamed_equal(d1: Disjunct, d2: Disjunct, pool: frozenset) -> bool:
    if alpha_disjunct(d1) == alpha_disjunct(d2):
        return True
    v1 = sorted(fv_disjunct(d1) & pool)
    v2 = sorted(fv_disjunct(d2) & pool)
    if len(v1) != len(v2) or len(v1) > 6:
        return False
    base2 = alpha_disjunct(d2)
    for perm in itertools.permutations(v2):
        th = dict(zip(v1, perm))
        if alpha_disjunct(sub_disjunct(d1, th)) == base2:
            return True
    return False


def _chk_orR(env, c, prems):
    if len(prems) != 1:
        return ["OrR needs exactly one premise"]
    p = prems[0].sequent
    if p.ante != c.ante or not p.succ <= c.succ:
        return ["premise must keep the antecedent and a disjunct subset"]
    pool = c.ante.undef - fv_spatial(c.ante.spatial)
    for d in c.succ - p.succ:
        if not any(_renamed_equal(d, k, pool) for k in p.succ):
            return ["a dropped disjunct has no renamed copy among the kept"]
    return []


def _chk_andL(env, c, prems):
    if len(prems) != 1:
        return ["AndL needs exactly one premise"]
    p = prems[0].sequent
    if p.succ != c.succ or p.ante.spatial != c.ante.spatial:
        return ["AndL may only prune the antecedent's pure/↑ parts"]
    if not (p.ante.pure <= c.ante.pure and p.ante.undef <= c.ante.undef):
        return ["premise must be a subset of the conclusion's pure/↑ parts"]
    used = fv_spatial(c.ante.spatial)
    for d in c.succ:
        used |= fv_disjunct(d)
    for at in c.ante.pure - p.ante.pure:
        if all(t == NIL or t in used for t in at[1:]):
            return [f"pruned atom {at} has no unused variable"]
    for v in c.ante.undef - p.ante.undef:
        if v in used:
            return [f"pruned ↑ variable {v} is still used"]
    return []


def _upar_strip(d: Disjunct) -> Disjunct:
    changed = True
    while changed:
        changed = False
        sp_fv = fv_spatial(d.spatial)
        for y in d.ex_unrelated:
            atoms = [a for a in d.pure if y in a[1:]]
            if y not in sp_fv and all(a[0] == "ne" and a[1] != a[2]
                                      for a in atoms):
                d = Disjunct(d.ex_cells,
                             tuple(z for z in d.ex_unrelated if z != y),
                             pure(a for a in d.pure if y not in a[1:]),
                             d.spatial)
                changed = True
                break
    return d


def _chk_uparrowR(env, c, prems):
    if len(prems) != 1:
        return ["UparrowR needs exactly one premise"]
    p = prems[0].sequent
    if p.ante != c.ante:
        return ["premise changes the antecedent"]
    if frozenset(_upar_strip(d) for d in c.succ) != p.succ:
        return ["premise is not the vacuous-⇑ stripped conclusion"]
    return []


def _chk_emp(env, c, prems):
    if prems:
        return ["Emp is a leaf rule"]
    if c.ante.spatial:
        return ["antecedent is not emp"]
    for d in c.succ:
        if d.spatial or d.ex_cells:
            continue
        bound = set(d.ex_unrelated)
        ok = True
        for at in d.pure:
            if bound & set(at[1:]):
                if at[0] != "ne" or at[1] == at[2]:
                    ok = False
                    break
            elif not satcheck.pure_entails(c.ante.pure, at):
                ok = False
                break
        if ok:
            return []
    return ["no emp disjunct is entailed by the antecedent"]


def _chk_unsat(env, c, prems):
    if prems:
        return ["Unsat is a leaf rule"]
    try:
        if satcheck.check_sat(env, c.ante):
            return ["antecedent is satisfiable"]
    except satcheck.IllFormedAntecedent as e:
        return [f"antecedent not checkable: {e}"]
    return []


_VERIFIERS = {
    "CaseL": _chk_caseL,
    "PredL": _chk_predL,
    "AndR": _chk_andR,
    "StarMapsto": _chk_star_mapsto,
    "BoundedFactor": _chk_bounded_factor,
    "SplitRule": _chk_split,
    "OrR": _chk_orR,
    "AndL": _chk_andL,
    "UparrowR": _chk_uparrowR,
    "Emp": _chk_emp,
    "Unsat": _chk_unsat,
}


def check_proof(env: DefEnv, p: ProofTree) -> list:
    """Validate every rule instance and the bud–companion side condition.
    Returns a list of Violations; empty means the proof is accepted."""
    out = []
    if p.root not in p.nodes:
        return [Violation(p.root, "root id missing")]

    def visit(nid, path):
        n = p.nodes[nid]
        if any(nid == k for k, _ in path):
            out.append(Violation(nid, "cycle through premise links"))
            return
        if n.rule == "Subst":
            out.extend(_check_subst(p, n, path))
        elif n.rule in _VERIFIERS or n.rule == "EqL":
            prems = []
            missing = False
            for k in n.premises:
                if k not in p.nodes:
                    out.append(Violation(nid, f"premise {k} missing"))
                    missing = True
                else:
                    prems.append(p.nodes[k])
            if not missing:
                if n.rule == "EqL":
                    msgs = _chk_eqL(env, n.sequent, prems, n)
                else:
                    msgs = _VERIFIERS[n.rule](env, n.sequent, prems)
                for msg in msgs:
                    out.append(Violation(nid, f"{n.rule}: {msg}"))
        else:
            out.append(Violation(nid, f"no verifier for rule {n.rule}"))
        for k in n.premises:
            if k in p.nodes:
                visit(k, path + [(nid, n)])

    visit(p.root, [])
    return out


def _check_subst(p, n, path):
    if n.premises:
        return [Violation(n.id, "Subst buds have no premises")]
    if n.companion is None:
        return [Violation(n.id, "Subst bud lacks a companion")]
    idx = next((i for i, (k, _) in enumerate(path) if k == n.companion), None)
    if idx is None:
        return [Violation(n.id, "companion is not an ancestor")]
    between = [node for _, node in path[idx + 1:]]
    if not any(node.rule == "StarMapsto" for node in between):
        return [Violation(n.id,
                          "missing (*↦) between bud and companion")]
    comp = p.nodes[n.companion]
    th = n.theta
    if alpha_show(sub_entailment(comp.sequent, th)) != alpha_show(n.sequent):
        return [Violation(n.id,
                          "companion under the recorded renaming does not "
                          "match the bud")]
    return []
