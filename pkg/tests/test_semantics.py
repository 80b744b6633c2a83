import itertools
import random

import pytest

from slent import semantics as M
from slent import syntax as S
from slent.parse import parse_entailment


def ante(text):
    return parse_entailment(text + " |- emp").ante


def ls_call(x, y):
    return S.PredCall(S.PredSym("ls"), (x, y))


class TestEval:
    def test_ls_single_cell(self, ls_env):
        s = {"x": 1, "y": 2}
        assert M.eval_spatial(ls_env, s, {1: (2,)},
                              (S.AnnotatedAtom(ls_call("x", "y")),))

    def test_ls_empty_heap(self, ls_env):
        s = {"x": 1, "y": 2}
        assert not M.eval_spatial(ls_env, s, {},
                                  (S.AnnotatedAtom(ls_call("x", "y")),))

    def test_ls_two_cells_and_leaf(self, ls_env):
        s = {"x": 1, "y": 2}
        h = {1: (3,), 3: (2,)}
        assert M.eval_spatial(ls_env, s, h, (S.AnnotatedAtom(ls_call("x", "y")),))
        assert s["y"] in M.leaves(h)

    def test_annotation_defined(self, ls_env):
        s = {"x": 1, "y": 2, "w": 3}
        h = {1: (3,), 3: (2,)}
        a_ok = S.spatial_atom(ls_call("x", "y"), defined={"w"})
        a_bad = S.spatial_atom(ls_call("x", "y"), defined={"y"})
        assert M.eval_spatial(ls_env, s, h, (a_ok,))
        assert not M.eval_spatial(ls_env, s, h, (a_bad,))

    def test_annotation_unrelated(self, ls_env):
        s = {"x": 1, "y": 2, "u": 9}
        h = {1: (2,)}
        assert M.eval_spatial(ls_env, s, h,
                              (S.spatial_atom(ls_call("x", "y"), unrelated={"u"}),))
        # a leaf is not unrelated
        assert not M.eval_spatial(ls_env, s, h,
                                  (S.spatial_atom(ls_call("x", "y"),
                                                  unrelated={"y"}),))

    def test_antecedent_up(self, ls_env):
        psi = ante("up{y} & ls(x,y)")
        assert M.eval_antecedent(ls_env, {"x": 1, "y": 2}, {1: (2,)}, psi)
        psi2 = ante("up{x} & ls(x,y)")
        assert not M.eval_antecedent(ls_env, {"x": 1, "y": 2}, {1: (2,)}, psi2)

    def test_disjunct_existential(self, ls_env):
        (d,) = parse_entailment("emp |- ex z . x -> (z) * ls(z,y)").succ
        s = {"x": 1, "y": 2}
        assert M.eval_disjunct(ls_env, s, {1: (3,), 3: (2,)}, d)
        assert not M.eval_disjunct(ls_env, s, {1: (2,)}, d)

    def test_disjunct_unrelated_needs_fresh(self, ls_env):
        (d,) = parse_entailment("emp |- ex q . uup{q} & q != x & ls(x,y)").succ
        assert M.eval_disjunct(ls_env, {"x": 1, "y": 2}, {1: (2,)}, d)

    def test_wand_atom(self, ls_env):
        # x -> (y) with the tail list removed: ls(y,v) -*s ls(x,w) needs w = v
        j = parse_entailment("ls(y,v) -*s ls(x,w) |- emp")
        (a,) = j.ante.spatial
        s = {"x": 1, "y": 2, "v": 3, "w": 3}
        assert M.footprints(ls_env, s, {1: (2,)}, a.atom) == {frozenset({1})}
        s_bad = {"x": 1, "y": 2, "v": 3, "w": 4}
        assert M.footprints(ls_env, s_bad, {1: (2,)}, a.atom) == set()

    def test_unknown_pred(self, ls_env):
        with pytest.raises(S.UnknownPredicate):
            M.footprints(ls_env, {"x": 1}, {}, S.PredCall(S.PredSym("q"), ("x",)))

    def test_arity(self, ls_env):
        with pytest.raises(S.ArityMismatch):
            M.footprints(ls_env, {"x": 1}, {1: (0,)},
                         S.PredCall(S.PredSym("ls"), ("x",)))


class TestBijection:
    def test_identity(self):
        s, h = {"x": 1}, {1: (2,)}
        assert M.apply_bijection(s, h, {}) == (s, h)

    def test_swap(self):
        s2, h2 = M.apply_bijection({}, {1: (2,)}, {1: 5, 5: 1})
        assert h2 == {5: (2,)}

    def test_rejects_non_bijection(self):
        with pytest.raises(M.NotABijection):
            M.apply_bijection({}, {}, {1: 2})

    def test_invariance_random(self, ls_env, skl_env):
        rng = random.Random(7)
        texts = [
            (ls_env, "ls(x,y)"), (ls_env, "x != y & ls(x,y) * ls(y,z)"),
            (skl_env, "skl2(x,y)"), (ls_env, "up{u} & ls(x,y)"),
        ]
        checked = 0
        for env, text in texts:
            psi = ante(text)
            for s, h in itertools.islice(M.models(env, psi, 3), 20):
                locs = sorted({v for v in list(s.values()) +
                               list(h) + [w for t in h.values() for w in t]
                               if v > 0} | {11, 12, 13})
                perm = locs[:]
                rng.shuffle(perm)
                beta = dict(zip(locs, perm))
                s2, h2 = M.apply_bijection(s, h, beta)
                assert M.eval_antecedent(env, s2, h2, psi)
                checked += 1
        assert checked >= 50


class TestOracleSat:
    def test_ls_sat_one_cell(self, ls_env):
        r = M.oracle_sat(ls_env, ante("x != nil & ls(x,y)"), 1)
        assert isinstance(r, M.Sat)
        assert len(r.heap) == 1

    def test_root_nil_unsat(self, ls_env):
        for k in (0, 1, 2, 3):
            assert M.oracle_sat(ls_env, ante("x = nil & ls(x,y)"), k) == \
                M.NoModelUpTo(k)

    def test_leaf_unallocated(self, ls_env):
        r = M.oracle_sat(ls_env, ante("up{y} & y != x & ls(x,y)"), 1)
        assert isinstance(r, M.Sat)

    def test_contradiction(self, ls_env):
        assert M.oracle_sat(ls_env, ante("x = y & x != y & emp"), 2) == \
            M.NoModelUpTo(2)

    def test_budget(self, ls_env):
        with pytest.raises(M.ResourceLimit):
            M.oracle_sat(ls_env, ante("ls(x,y) * ls(y,z) * ls(z,w)"), 4,
                         budget=50)


class TestOracleEntailment:
    def test_identity(self, ls_env):
        j = parse_entailment("ls(x,y) |- ls(x,y)")
        assert M.oracle_entailment(ls_env, j, 3) == M.NoCounterexampleUpTo(3)

    def test_ls_not_cell(self, ls_env):
        j = parse_entailment("ls(x,y) |- x -> (y)")
        r = M.oracle_entailment(ls_env, j, 2)
        assert isinstance(r, M.Counterexample)
        assert len(r.heap) == 2

    def test_cell_is_ls(self, ls_env):
        j = parse_entailment("x -> (y) |- ls(x,y)")
        assert M.oracle_entailment(ls_env, j, 3) == M.NoCounterexampleUpTo(3)

    def test_dll_reverse(self, dll_env):
        j = parse_entailment("dll(h,p,n,t) |- dll(h,p,n,t)")
        assert M.oracle_entailment(dll_env, j, 3) == M.NoCounterexampleUpTo(3)


class TestUnfoldingIndex:
    def _ls_models(self, ls_env, k):
        return list(M.models(ls_env, ante("ls(x,y)"), k))

    def test_monotone(self, ls_env):
        for s, h in self._ls_models(ls_env, 4):
            for m in range(5):
                if M.eval_pred_at(ls_env, s, h, ls_call("x", "y"), m):
                    assert M.eval_pred_at(ls_env, s, h, ls_call("x", "y"), m + 1)

    def test_stabilizes(self, ls_env):
        for s, h in self._ls_models(ls_env, 4):
            d = len(h)
            assert M.eval_pred_at(ls_env, s, h, ls_call("x", "y"), d) == \
                M.eval_pred_at(ls_env, s, h, ls_call("x", "y"), d + 1)

    def test_zero_false(self, ls_env):
        assert not M.eval_pred_at(ls_env, {"x": 1, "y": 2}, {1: (2,)},
                                  ls_call("x", "y"), 0)


class TestLeavesContainment:
    def test_ls_star(self, ls_env):
        psi = ante("ls(x,y) * ls(z,w)")
        n = 0
        for s, h in M.models(ls_env, psi, 3):
            bound = {s[t] for t in ("y", "w")} | {0}
            assert M.leaves(h) <= bound
            n += 1
        assert n > 0


def _brute_models(env, psi, max_cells, universe, fvs=None):
    """Reference enumeration: all stores and heaps over a fixed universe."""
    fvs = sorted(S.fv_antecedent(psi) if fvs is None else fvs)
    locs = [v for v in universe if v > 0]
    for sv in itertools.product(universe, repeat=len(fvs)):
        s = dict(zip(fvs, sv))
        for k in range(max_cells + 1):
            for dom in itertools.combinations(locs, k):
                for cts in itertools.product(
                        itertools.product(universe, repeat=env.n_cell),
                        repeat=k):
                    h = dict(zip(dom, cts))
                    if M.eval_antecedent(env, s, h, psi):
                        yield s, h


class TestEnumerationExhaustive:
    @pytest.mark.parametrize("text,cells", [
        ("ls(x,y)", 2),
        ("x != y & ls(x,y) * y -> (x)", 2),
        ("up{y} & ls(x,y)", 2),
        ("x = nil & ls(x,y)", 2),
        ("emp", 1),
    ])
    def test_sat_agrees_with_brute_force(self, ls_env, text, cells):
        psi = ante(text)
        universe = range(0, cells + len(S.fv_antecedent(psi)) + 2)
        brute = next(_brute_models(ls_env, psi, cells, universe), None)
        derived = next(M.models(ls_env, psi, cells), None)
        assert (brute is None) == (derived is None)

    @pytest.mark.parametrize("text", [
        "ls(x,y) |- ls(x,y)",
        "ls(x,y) |- x -> (y)",
        "x -> (y) |- ls(x,y)",
        "ls(x,y) * ls(y,nil) |- ls(x,nil)",
        "ls(x,nil) |- ls(x,y)",
    ])
    def test_counterexamples_agree_with_brute_force(self, ls_env, text):
        j = parse_entailment(text)
        cells = 2
        universe = range(0, cells + len(S.fv_entailment(j)) + 2)
        brute_cex = next(
            (sh for sh in _brute_models(ls_env, j.ante, cells, universe,
                                        fvs=S.fv_entailment(j))
             if not any(M.eval_disjunct(ls_env, *sh, d) for d in j.succ)),
            None)
        r = M.oracle_entailment(ls_env, j, cells)
        assert (brute_cex is None) == isinstance(r, M.NoCounterexampleUpTo)


class TestWandElimination:
    def test_ls_chain_composes(self, ls_env):
        j = parse_entailment(
            "ls(y,v) -*s ls(x,w) * ls(u,q) -*s ls(y,v) |- ls(u,q) -*s ls(x,w)")
        assert M.oracle_entailment(ls_env, j, 3, budget=10_000_000) == \
            M.NoCounterexampleUpTo(3)
