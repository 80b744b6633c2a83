import pytest
from hypothesis import given, settings, strategies as st

from slent import syntax as S
from slent.parse import (
    ParseError, Problem, parse_entailment, parse_problem, print_problem,
    print_syntax,
)

LS_PROBLEM = """
# singly linked list segments
ncell 1;
pred ls(x,y) := x -> (y) | ex z . x -> (z) * ls(z,y);
entail ls(x,y) |- ls(x,y);
"""


def test_parse_ls_problem():
    p = parse_problem(LS_PROBLEM)
    assert p.env.n_cell == 1
    assert set(p.env.preds) == {"ls"}
    assert len(p.env.preds["ls"].clauses) == 2
    assert len(p.query.succ) == 1


def test_parse_dll_problem():
    p = parse_problem("""
ncell 2;
pred dll(h,p,n,t) := h = t & h -> (p,n) | ex z . h -> (p,z) * dll(z,h,n,t);
entail dll(h,p,n,t) |- dll(h,p,n,t);
""")
    dll = p.env.preds["dll"]
    assert dll.arity == 4
    assert len(dll.clauses) == 2
    assert dll.clauses[0].pure == S.pure([S.eq("h", "t")])


def test_empty_succedent_rejected():
    with pytest.raises(ParseError):
        parse_problem("ncell 1;"
                      "pred ls(x,y) := x -> (y) | ex z . x -> (z) * ls(z,y);"
                      "entail ls(x,y) |- ;")


def test_error_position_is_stable():
    with pytest.raises(ParseError) as ei:
        parse_problem("ncell 1;\nentail ls(x,y |- ls(x,y);")
    assert ei.value.line == 2


def test_unknown_predicate_in_query():
    with pytest.raises(ParseError):
        parse_problem("ncell 1; entail foo(x) |- foo(x);")


def test_points_to_width_checked():
    with pytest.raises(ParseError):
        parse_problem("ncell 2; entail x -> (y) |- x -> (y);")


def test_round_trip_ls():
    p = parse_problem(LS_PROBLEM)
    assert parse_problem(print_problem(p)) == p


def test_wand_print_and_parse():
    j = parse_entailment("ls(y,v) -*s ls(x,w) |- ls(x,w)")
    (a,) = j.ante.spatial
    assert a.atom.sym == S.PredSym("ls", (("ls", 2),))
    assert a.atom.args == ("x", "w", "y", "v")
    assert print_syntax(a.atom) == "ls(y,v) -*s ls(x,w)"
    assert parse_entailment(print_syntax(j)) == j


def test_annotated_atom_print():
    a = S.AnnotatedAtom(S.PredCall(S.PredSym("ls"), ("x", "y")), frozenset({"w"}))
    assert print_syntax(a) == "ls(x,y) & dn{w}"


def test_extended_sequent_round_trip():
    text = ("up{u} & x != nil & ls(x,y) & dn{w} * x' -> (y) |- "
            "ex z,q . uup{q} & q != nil & x -> (z) * ls(z,y) & uup{q}")
    j = parse_entailment(text)
    assert parse_entailment(print_syntax(j)) == j


names = st.sampled_from(["x", "y", "z", "w", "u", "v'"])
terms = st.one_of(names, st.just(S.NIL))


def calls(n_cell):
    pred = st.tuples(names, names).map(
        lambda a: S.AnnotatedAtom(S.PredCall(S.PredSym("p"), a)))
    pts = st.tuples(names, st.tuples(*([terms] * n_cell))).map(
        lambda a: S.AnnotatedAtom(S.PointsTo(a[0], a[1])))
    return st.one_of(pred, pts)


pure_atoms = st.one_of(
    st.tuples(terms, terms).map(lambda a: S.eq(*a)),
    st.tuples(terms, terms).map(lambda a: S.ne(*a)),
)


@st.composite
def entailments(draw):
    n_cell = 1
    def annotate(a):
        d = frozenset(draw(st.sets(names, max_size=2)))
        u = frozenset(draw(st.sets(names, max_size=1)))
        return S.AnnotatedAtom(a.atom, d, u)
    ante_sp = tuple(annotate(a) for a in draw(st.lists(calls(n_cell), max_size=3)))
    ante = S.Antecedent(frozenset(draw(st.sets(names, max_size=2))),
                        S.pure(draw(st.sets(pure_atoms, max_size=3))),
                        ante_sp)
    ds = []
    for _ in range(draw(st.integers(0, 2))):
        sp = tuple(annotate(a) for a in draw(st.lists(calls(n_cell), max_size=2)))
        bound = draw(st.sets(st.sampled_from(["b", "c"]), max_size=2))
        cells = tuple(sorted(bound))[:1]
        unrel = tuple(sorted(bound))[1:]
        ds.append(S.Disjunct(cells, unrel,
                             S.pure(draw(st.sets(pure_atoms, max_size=2))), sp))
    return S.Entailment(ante, frozenset(ds))


@settings(max_examples=150, deadline=None)
@given(entailments())
def test_sequent_print_parse_round_trip(j):
    assert parse_entailment(print_syntax(j)) == j
