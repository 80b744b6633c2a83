import pytest

from slent.parse import parse_problem

LS_DEFS = """
ncell 1;
pred ls(x,y) := x -> (y) | ex z . x -> (z) * ls(z,y);
"""

DLL_DEFS = """
ncell 2;
pred dll(h,p,n,t) := h = t & h -> (p,n)
                   | ex z . h -> (p,z) * dll(z,h,n,t);
"""

SKL_DEFS = """
ncell 2;
pred skl1(x,y) := x -> (y,nil) | ex z . x -> (z,nil) * skl1(z,y);
pred skl2(x,y) := ex z . x -> (y,z) * skl1(z,y)
                | ex z,w . x -> (w,z) * skl1(z,w) * skl2(w,y);
"""

NEST_DEFS = """
ncell 2;
pred ls(x,y) := x -> (y,nil) | ex z . x -> (z,nil) * ls(z,y);
pred listnest(x) := ex z . x -> (z,nil) * ls(z,nil)
                  | ex z,w . x -> (z,w) * ls(z,nil) * listnest(w);
"""


def _env(defs: str):
    return parse_problem(defs + "entail emp |- emp;").env


@pytest.fixture(scope="session")
def ls_env():
    return _env(LS_DEFS)


@pytest.fixture(scope="session")
def dll_env():
    return _env(DLL_DEFS)


@pytest.fixture(scope="session")
def skl_env():
    return _env(SKL_DEFS)


@pytest.fixture(scope="session")
def nest_env():
    return _env(NEST_DEFS)
