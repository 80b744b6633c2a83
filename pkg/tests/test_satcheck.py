import itertools
import random

import pytest

from slent import satcheck as C
from slent import semantics as M
from slent import syntax as S
from slent.parse import parse_entailment


def ante(text):
    return parse_entailment(text + " |- emp").ante


class TestPure:
    def test_contradiction(self):
        assert not C.pure_sat(S.pure([S.eq("x", "y"), S.ne("y", "x")]))

    def test_simple_sat(self):
        assert C.pure_sat(S.pure([S.ne("x", S.NIL)]))

    def test_transitivity(self):
        pi = S.pure([S.eq("x", "y"), S.eq("y", "z")])
        assert C.pure_entails(pi, S.eq("x", "z"))
        assert not C.pure_entails(pi, S.ne("x", "z"))

    def test_entails_ne(self):
        pi = S.pure([S.eq("x", "y"), S.ne("y", "z")])
        assert C.pure_entails(pi, S.ne("x", "z"))

    def test_empty(self):
        assert C.pure_sat(S.pure())
        assert C.pure_entails(S.pure(), S.eq("x", "x"))


class TestBasePairs:
    def test_ls(self, ls_env):
        got = C.base_pairs(ls_env, "ls")
        want = {
            C.BasePair(frozenset({"x"}), S.pure([S.ne("x", S.NIL)])),
            C.BasePair(frozenset({"x", "y"}),
                       S.pure([S.ne("x", S.NIL), S.ne("y", S.NIL),
                               S.ne("x", "y")])),
        }
        assert got == want

    def test_single_cell_pred(self):
        from slent.parse import parse_problem
        env = parse_problem("ncell 1;"
                            "pred one(x,y) := x -> (y);"
                            "entail emp |- emp;").env
        assert C.base_pairs(env, "one") == \
            {C.BasePair(frozenset({"x"}), S.pure([S.ne("x", S.NIL)]))}

    def test_monotone_fixpoint(self, skl_env):
        fenv, nm = C.flat_env(skl_env, [S.PredSym("skl2")])
        table = {name: set() for name in fenv.preds}
        rounds = []
        for _ in range(10):
            prev = {k: frozenset(v) for k, v in table.items()}
            for name, pred in fenv.preds.items():
                for cl in pred.clauses:
                    for bp in C._clause_pairs(fenv, cl, pred, table):
                        table[name].add(bp)
            rounds.append({k: frozenset(v) for k, v in table.items()})
            assert all(prev[k] <= rounds[-1][k] for k in table)
            if rounds[-1] == prev:
                break
        assert rounds[-1] == C.base_pairs_table(fenv)


class TestHat:
    def test_n_zero_is_identity(self, ls_env):
        fenv, nm = C.flat_env(ls_env, [S.PredSym("ls")])
        henv = C.hat_extend(fenv, {("ls", 0)})
        assert henv.pred("ls").clauses == ls_env.pred("ls").clauses

    def test_ls_hat_clause_count(self, ls_env):
        fenv, _ = C.flat_env(ls_env, [S.PredSym("ls")])
        henv = C.hat_extend(fenv, {("ls", 1)})
        hat = henv.pred(C.hat_name("ls", 1))
        assert hat.arity == 3
        # base clause: the tracked variable must sit at the root;
        # recursive clause: at the root or inside the tail
        assert len(hat.clauses) == 3

    def _hat_matches_semantics(self, env, name, n, max_cells):
        fenv, _ = C.flat_env(env, [S.PredSym(name)])
        henv = C.hat_extend(fenv, {(name, n)})
        pred = env.pred(name)
        args = [f"a{i}" for i in range(pred.arity)]
        ys = [f"d{i}" for i in range(n)]
        plain = S.spatial_atom(S.PredCall(S.PredSym(name), tuple(args)),
                               defined=ys)
        hat = S.spatial_atom(
            S.PredCall(S.PredSym(C.hat_name(name, n)), tuple(args + ys)))
        psi = S.Antecedent(frozenset(), S.pure(), (plain,))
        for s, h in M.models(henv, psi, max_cells, extra_vars=ys):
            lhs = M.eval_spatial(henv, s, h, (plain,))
            rhs = M.eval_spatial(henv, s, h, (hat,))
            assert lhs == rhs, (s, h)
        # and on models of the hatted form (catches missing hat clauses)
        psi2 = S.Antecedent(frozenset(), S.pure(), (hat,))
        for s, h in M.models(henv, psi2, max_cells):
            assert M.eval_spatial(henv, s, h, (plain,)), (s, h)

    @pytest.mark.parametrize("name,n", [("ls", 1), ("ls", 2)])
    def test_ls_hat_semantics(self, ls_env, name, n):
        self._hat_matches_semantics(ls_env, name, n, 3)

    def test_skl_hat_semantics(self, skl_env):
        self._hat_matches_semantics(skl_env, "skl2", 1, 3)

    def test_dll_hat_semantics(self, dll_env):
        self._hat_matches_semantics(dll_env, "dll", 1, 3)


class TestCheckSat:
    def test_leaf_avoids_undef(self, ls_env):
        psi = ante("up{y} & x != nil & y != nil & x != y & ls(x,y)")
        assert C.check_sat(ls_env, psi)

    def test_root_nil(self, ls_env):
        assert not C.check_sat(ls_env, ante("x = nil & ls(x,y)"))

    def test_cyclic_one_cell(self, ls_env):
        psi = ante("x = y & ls(x,y) & dn{y}")
        assert C.check_sat(ls_env, psi)
        assert isinstance(M.oracle_sat(ls_env, psi, 1), M.Sat)

    def test_undef_root(self, ls_env):
        assert not C.check_sat(ls_env, ante("up{x} & ls(x,y)"))

    def test_pure_only(self, ls_env):
        assert C.check_sat(ls_env, ante("x != y & emp"))
        assert not C.check_sat(ls_env, ante("x = y & x != y & emp"))

    def test_overlapping_cells(self, ls_env):
        assert not C.check_sat(ls_env, ante("x -> (y) * x -> (y)"))
        assert C.check_sat(ls_env, ante("x -> (y) * y -> (x)"))

    def test_points_to_with_dn(self, ls_env):
        assert C.check_sat(ls_env, ante("x -> (x) & dn{x}"))
        assert not C.check_sat(ls_env, ante("x -> (y) & dn{y} & x != y"))


CURATED = [
    ("up{y} & x != nil & y != nil & x != y & ls(x,y)", True),
    ("x = nil & ls(x,y)", False),
    ("x = y & ls(x,y) & dn{y}", True),
    ("up{x} & ls(x,y)", False),
    ("ls(x,y) * ls(y,x)", True),
    ("x != y & ls(x,y) * ls(y,x)", True),
    ("ls(x,y) & dn{z} & z = x", True),
    ("ls(x,y) & dn{z} * z -> (x)", False),
    ("up{z} & ls(x,y) & dn{z}", False),
    ("x -> (y) * ls(y,nil)", True),
    ("x -> (x)", True),
    ("x = y & x -> (y) * ls(y,z)", False),
    ("ls(x,y) * ls(y,z) * ls(z,x)", True),
    ("up{x,y} & x -> (y)", False),
    ("ls(x,nil) & dn{y} & y != x", True),
    ("y = nil & ls(x,y) & dn{y}", False),
    ("emp", True),
    ("x != x & emp", False),
    ("up{y} & ls(x,y) & dn{y}", False),
    ("ls(x,y) & dn{x}", True),
    ("z = nil & ls(x,y) & dn{z}", False),
]


class TestOracleAgreement:
    @pytest.mark.parametrize("text,expect", CURATED)
    def test_curated(self, ls_env, text, expect):
        psi = ante(text)
        got = C.check_sat(ls_env, psi)
        assert got == expect
        bound = 2 * max(1, len(psi.spatial)) + 2
        oracle = M.oracle_sat(ls_env, psi, bound)
        assert isinstance(oracle, M.Sat) == expect

    def test_random_agreement(self, ls_env, dll_env):
        rng = random.Random(42)
        checked = 0
        for _ in range(120):
            env = rng.choice([ls_env, dll_env])
            psi = _random_antecedent(rng, env)
            got = C.check_sat(env, psi)
            bound = 2 * max(1, len(psi.spatial)) + 2
            oracle = M.oracle_sat(env, psi, bound, budget=3_000_000)
            assert got == isinstance(oracle, M.Sat), psi
            checked += 1
        assert checked == 120


def _random_antecedent(rng, env):
    names = ["x", "y", "z", "w"]
    terms = names + [S.NIL]

    def term():
        return rng.choice(terms)

    atoms = []
    for _ in range(rng.randrange(0, 3)):
        if rng.random() < 0.5:
            atoms.append(S.spatial_atom(
                S.PointsTo(rng.choice(names),
                           tuple(term() for _ in range(env.n_cell))),
                defined=rng.sample(names, rng.randrange(0, 2))))
        else:
            name = rng.choice(list(env.preds))
            pred = env.pred(name)
            args = tuple(rng.choice(names) if i == 0 else term()
                         for i in range(pred.arity))
            atoms.append(S.spatial_atom(
                S.PredCall(S.PredSym(name), args),
                defined=rng.sample(names, rng.randrange(0, 2))))
    pi = S.pure([(rng.choice(["eq", "ne"]), term(), term())
                 for _ in range(rng.randrange(0, 3))])
    undef = frozenset(rng.sample(names, rng.randrange(0, 2)))
    return S.Antecedent(undef, pi, tuple(atoms))
