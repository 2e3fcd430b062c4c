import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from integrate import integrate_p1, integrate_regular_riccati
from model import fixture, make_problem
from reduce import reduce
from synth import check_solvability, select_p1_terminal

entries = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


@pytest.fixture(scope="session")
def e1():
    return fixture("E1", steps=1000)


@pytest.fixture(scope="session")
def e2():
    return fixture("E2", steps=1000)


@pytest.fixture(scope="session")
def regular_scalar():
    return fixture("regular-scalar", steps=1000)


@pytest.fixture(scope="session")
def singular_p1():
    """两状态问题，P1(t) = diag(1/(t-2), 0) 在整个时域上奇异"""
    return make_problem(A=np.zeros((2, 2)), B=[[1.0, 1.0], [0.0, 0.0]], Q=np.zeros((2, 2)),
                        R=np.diag([1.0, 0.0]), H=np.diag([1.0, 0.0]), x0=[1.0, 1.0], steps=1000)


def layers(p):
    """第一层 P、降阶系统、第二层解"""
    P = integrate_regular_riccati(p)
    reduced = reduce(p, P)
    l2 = check_solvability(reduced, integrate_p1(reduced, select_p1_terminal(reduced)))
    return P, reduced, l2


@pytest.fixture(scope="session")
def e1_layers(e1):
    return layers(e1)


@pytest.fixture(scope="session")
def e2_layers(e2):
    return layers(e2)


@pytest.fixture(scope="session")
def singular_layers(singular_p1):
    return layers(singular_p1)


@st.composite
def random_problem(draw, steps=100):
    """n, m ≤ 4 的随机问题；R 正定，Q、H 半正定"""
    n = draw(st.integers(1, 4))
    m = draw(st.integers(1, 4))
    square = lambda k: draw(arrays(float, (k, k), elements=entries))
    q, r, h = square(n), square(m), square(n)
    return make_problem(A=square(n), B=draw(arrays(float, (n, m), elements=entries)),
                        Q=q @ q.T, R=r @ r.T + np.eye(m), H=h @ h.T,
                        x0=draw(arrays(float, (n,), elements=entries)), steps=steps)
