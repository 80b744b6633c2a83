import random

import pytest

from slent import syntax as S
from slent.parse import parse_entailment, parse_problem, WellFormednessError


def atom(call):
    return S.AnnotatedAtom(call)


def ls(x, y, defined=(), unrelated=()):
    return S.AnnotatedAtom(S.PredCall(S.PredSym("ls"), (x, y)),
                           frozenset(defined), frozenset(unrelated))


def cell(x, *cs):
    return S.AnnotatedAtom(S.PointsTo(x, tuple(cs)))


class TestWfCheck:
    def test_ls_ok(self, ls_env):
        assert S.wf_check(ls_env) == []

    def test_curated_envs_ok(self, dll_env, skl_env, nest_env):
        for env in (dll_env, skl_env, nest_env):
            assert S.wf_check(env) == []

    def test_decisiveness_violation(self):
        # ex z . x -> (y) * P(z): z not among contents
        with pytest.raises(WellFormednessError) as ei:
            parse_problem("ncell 1;"
                          "pred P(x,y) := ex z . x -> (y) * P(z,y);"
                          "entail emp |- emp;")
        assert any(v.condition == "decisiveness" for v in ei.value.report)

    def test_strong_connectivity_violation(self):
        # child root w is not an existential
        with pytest.raises(WellFormednessError) as ei:
            parse_problem("ncell 1;"
                          "pred P(x,y,w) := ex z . x -> (z) * P(w,y,z);"
                          "entail emp |- emp;")
        assert any(v.condition == "strong connectivity" for v in ei.value.report)

    def test_cell_width_violation(self):
        with pytest.raises(WellFormednessError) as ei:
            parse_problem("ncell 2;"
                          "pred P(x) := x -> (nil);"
                          "entail emp |- emp;")
        assert any(v.condition == "n_cell mismatch" for v in ei.value.report)


class TestRootsCells:
    def test_annotated_atom(self):
        g = (ls("x", "y", defined={"w"}),)
        assert S.roots(g) == {"x"}
        assert S.cells(g) == {"w"}
        assert S.addr(g) == {"x", "w"}

    def test_disjunct_bound_root_undefined(self):
        d = S.Disjunct(("z",), (), S.EMPTY_PURE, (ls("z", "y"),))
        assert isinstance(S.roots(d), S.UndefinedRoots)

    def test_disjunct_cells_remove_bound(self):
        d = S.Disjunct(("w",), ("y",), S.EMPTY_PURE,
                       (ls("x", "q", defined={"w"}),))
        assert S.cells(d) == set()

    def test_addr_union(self):
        g1 = (ls("x", "y", defined={"a"}),)
        g2 = (cell("z", "w"),)
        assert S.addr(g1 + g2) == S.addr(g1) | S.addr(g2)


class TestSubstitute:
    def test_simple(self):
        a = S.Antecedent(frozenset(), S.pure([S.eq("x", "y")]), (ls("x", "y"),))
        b = S.substitute(a, {"x": "z"})
        assert b == S.Antecedent(frozenset(), S.pure([S.eq("z", "y")]), (ls("z", "y"),))

    def test_identity(self):
        a = S.Antecedent(frozenset({"u"}), S.pure([S.ne("x", S.NIL)]), (ls("x", "y"),))
        assert S.substitute(a, {}) == a

    def test_capture_avoided(self):
        d = S.Disjunct(("z",), (), S.EMPTY_PURE, (ls("z", "y"),))
        r = S.substitute(d, {"y": "z"})
        assert r.ex_cells != ("z",) or "z" not in [a.atom.args[1] for a in r.spatial]
        # the bound variable was renamed; the free y became the outer z
        (b,) = r.ex_cells
        assert r.spatial[0].atom.args == (b, "z")

    def test_fv_homomorphic(self):
        rng = random.Random(0)
        names = ["x", "y", "z", "w", "v"]
        for _ in range(50):
            at = S.pure([S.eq(rng.choice(names), rng.choice(names)),
                         S.ne(rng.choice(names), S.NIL)])
            d = S.Disjunct((), (), at, (ls(rng.choice(names), rng.choice(names)),))
            th = {rng.choice(names): rng.choice(names + [S.NIL])}
            r = S.substitute(d, th)
            got = S.fv_disjunct(r)
            fv = S.fv_disjunct(d)
            want = (fv - set(th)) | {v for k, v in th.items() if k in fv and v != S.NIL}
            # trivial t=t atoms collapse under normalization, so ⊆ on the
            # pure side but exact on the spatial side
            assert got <= want
            assert S.fv_spatial(r.spatial) == \
                {S.sub_term(t, th) for t in S.fv_spatial(d.spatial)} - {S.NIL}


class TestEqualityFull:
    def test_empty_unrelated(self):
        d = S.Disjunct((), (), S.EMPTY_PURE, (ls("x", "y"),))
        assert S.is_equality_full(d)

    def test_full(self):
        d = S.Disjunct((), ("y",), S.pure([S.ne("y", "x"), S.ne("y", S.NIL)]),
                       (ls("x", "y"),))
        assert S.is_equality_full(d)

    def test_missing_nil(self):
        d = S.Disjunct((), ("y",), S.pure([S.ne("y", "x")]), (ls("x", "y"),))
        assert not S.is_equality_full(d)


class TestCanonical:
    def j(self, text):
        return parse_entailment(text)

    def test_swap_invariant(self):
        j1 = self.j("ls(x,y) |- ls(x,y)")
        j2 = self.j("ls(y,x) |- ls(y,x)")
        assert S.canonical(j1) == S.canonical(j2)

    def test_extra_disjunct_differs(self):
        j1 = self.j("ls(x,y) |- ls(x,y)")
        j2 = self.j("ls(x,y) |- ls(x,y) , x -> (y)")
        assert S.canonical(j1) != S.canonical(j2)

    def test_random_renaming_invariant(self):
        rng = random.Random(1)
        j = self.j("up{u} & x != y & ls(x,y) & dn{w} |- ex z . x -> (z) * ls(z,y)")
        base = S.canonical(j)
        free = sorted(S.fv_entailment(j))
        for _ in range(100):
            fresh = rng.sample([f"r{i}" for i in range(20)], len(free))
            th = dict(zip(free, fresh))
            assert S.canonical(S.substitute(j, th)) == base

    def test_bound_renaming_invariant(self):
        j1 = self.j("ls(x,y) |- ex z . x -> (z) * ls(z,y)")
        j2 = self.j("ls(x,y) |- ex q . x -> (q) * ls(q,y)")
        assert S.canonical(j1) == S.canonical(j2)

    def test_idempotent_encoding(self):
        j = self.j("ls(x,y) |- ls(x,y)")
        assert S.canonical(j) == S.canonical(j)
