import dataclasses
import inspect
import itertools

import pytest

from slent import proofcheck as P
from slent import prover
from slent import semantics as M
from slent.parse import parse_entailment


@pytest.fixture(scope="module")
def ls_proofs(ls_env):
    out = {}
    for text in ["ls(x,y) |- ls(x,y)",
                 "x != y & ls(x,z) * z -> (y) |- ls(x,y)"]:
        r = prover.decide(ls_env, parse_entailment(text))
        assert isinstance(r, prover.Valid)
        out[text] = r.proof
    return out


def _retree(tree, node):
    nodes = dict(tree.nodes)
    nodes[node.id] = node
    return P.ProofTree(tree.root, nodes)


class TestRoundTrip:
    def test_identity(self, ls_proofs):
        for p in ls_proofs.values():
            q = P.deserialize(P.serialize(p))
            assert q.root == p.root
            assert set(q.nodes) == set(p.nodes)
            for nid, n in p.nodes.items():
                m = q.nodes[nid]
                assert m.rule == n.rule
                assert m.premises == n.premises
                assert m.companion == n.companion
                assert m.theta == n.theta
                # sequent strings re-parse to structurally equal entailments
                assert m.sequent == n.sequent
            assert P.serialize(q) == P.serialize(p)


class TestMalformed:
    def test_bad_json(self):
        with pytest.raises(P.MalformedProof):
            P.deserialize("{not json")

    def test_non_object(self):
        with pytest.raises(P.MalformedProof):
            P.deserialize("[1, 2]")

    def test_missing_root(self):
        with pytest.raises(P.MalformedProof) as e:
            P.deserialize('{"nodes": []}')
        assert "root" in str(e.value)

    def test_missing_nodes(self):
        with pytest.raises(P.MalformedProof) as e:
            P.deserialize('{"root": 0}')
        assert "nodes" in str(e.value)

    def test_unknown_rule(self, ls_proofs):
        doc = P.serialize(next(iter(ls_proofs.values())))
        bad = doc.replace('"rule": "StarMapsto"', '"rule": "Bogus"', 1)
        with pytest.raises(P.MalformedProof) as e:
            P.deserialize(bad)
        assert "Bogus" in str(e.value)

    def test_bad_sequent_string(self, ls_proofs):
        p = next(iter(ls_proofs.values()))
        doc = P.serialize(p)
        seq = P.serialize(p).split('"sequent": "')[1].split('"')[0]
        bad = doc.replace(f'"sequent": "{seq}"', '"sequent": "((("', 1)
        with pytest.raises(P.MalformedProof):
            P.deserialize(bad)


class TestAcceptsEmitted:
    def test_ok(self, ls_env, ls_proofs):
        for p in ls_proofs.values():
            assert P.check_proof(ls_env, p) == []


class TestTamperRejection:
    def test_changed_rule(self, ls_env, ls_proofs):
        p = next(iter(ls_proofs.values()))
        nid, n = next((k, n) for k, n in sorted(p.nodes.items())
                      if n.rule == "StarMapsto")
        bad = _retree(p, dataclasses.replace(n, rule="Emp"))
        assert P.check_proof(ls_env, bad)

    def test_changed_sequent(self, ls_env, ls_proofs):
        p = next(iter(ls_proofs.values()))
        rogue = parse_entailment("ls(x,y) |- x -> (y)")
        nid, n = next((k, n) for k, n in sorted(p.nodes.items()) if n.premises)
        bad = _retree(p, dataclasses.replace(n, sequent=rogue))
        assert P.check_proof(ls_env, bad)

    def test_dropped_premise(self, ls_env, ls_proofs):
        p = next(iter(ls_proofs.values()))
        nid, n = next((k, n) for k, n in sorted(p.nodes.items())
                      if len(n.premises) > 1)
        bad = _retree(p, dataclasses.replace(n, premises=n.premises[:1]))
        assert P.check_proof(ls_env, bad)

    def test_companion_without_cell_removal(self, ls_env, ls_proofs):
        # point a bud at its immediate parent: no shared-cell removal between
        p = next(iter(ls_proofs.values()))
        parent_of = {k: nid for nid, n in p.nodes.items() for k in n.premises}
        nid, n = next((k, n) for k, n in sorted(p.nodes.items())
                      if n.rule == "Subst")
        bad = _retree(p, dataclasses.replace(n, companion=parent_of[nid]))
        viols = P.check_proof(ls_env, bad)
        assert any("between bud and companion" in v.message for v in viols)

    def test_missing_premise_node(self, ls_env, ls_proofs):
        p = next(iter(ls_proofs.values()))
        nid, n = next((k, n) for k, n in sorted(p.nodes.items())
                      if n.premises)
        bad = _retree(p, dataclasses.replace(
            n, premises=n.premises[:-1] + (10 ** 6,)))
        assert P.check_proof(ls_env, bad)


class TestIndependence:
    def test_no_prover_import(self):
        src = inspect.getsource(P)
        assert "prover" not in src


class TestSplitPremiseTable:
    def test_single_group_none(self, ls_env):
        j = parse_entailment("ls(x,y) |- ls(x,y)")
        assert P.split_premise_table(j) is None

    def test_powerset_keys(self, ls_env):
        j = parse_entailment(
            "ls(x,y) * ls(u,v) |- "
            "ls(x,y) * ls(u,v) , x -> (y) * ls(u,v)")
        table = P.split_premise_table(j)
        assert table is not None
        assert set(table) == {frozenset(c)
                              for r in range(3)
                              for c in itertools.combinations(range(2), r)}
        for i1, (left, right) in table.items():
            assert len(left.succ) == len(i1)
            assert len(right.succ) == 2 - len(i1)
            assert len(left.ante.spatial) == 1
            assert len(right.ante.spatial) == 1
            # each side sees the other group's variables as unallocated
            assert left.ante.undef >= {"u", "v"}
            assert right.ante.undef >= {"x", "y"}


class TestRuleSoundnessSpotChecks:
    def test_sampled_rules_m_sound(self, ls_env, ls_proofs):
        """If every premise of a sampled node has no countermodel with at
        most 3 cells, neither does its conclusion."""
        seen = 0
        for p in ls_proofs.values():
            picked = {}
            for nid in sorted(p.nodes):
                n = p.nodes[nid]
                if n.rule in ("StarMapsto", "AndR", "EqL", "OrR") and \
                        picked.get(n.rule, 0) < 3:
                    picked[n.rule] = picked.get(n.rule, 0) + 1
                    try:
                        prem_ok = all(isinstance(
                            M.oracle_entailment(ls_env,
                                                p.nodes[k].sequent, 3,
                                                budget=2_000_000),
                            M.NoCounterexampleUpTo) for k in n.premises)
                        if prem_ok:
                            concl = M.oracle_entailment(ls_env, n.sequent, 3,
                                                        budget=2_000_000)
                            assert isinstance(concl, M.NoCounterexampleUpTo)
                        seen += 1
                    except M.ResourceLimit:
                        continue
        assert seen >= 6


class TestClassificationFamily:
    def test_covers_and_marks(self, ls_env):
        j = parse_entailment("ls(x,y) |- ls(x,y)")
        fam = P.classification_family(j)
        assert len(fam) >= 1
        for case in fam:
            assert case.succ == j.succ or case.succ
