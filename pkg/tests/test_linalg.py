import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from linalg import NoSolution, check_symmetric_psd, pinv, projector_decomposition, range_included, \
    solve_linear_matrix_eq
from utils import InputError

entries = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)
spectrum = st.one_of(st.just(0.0), st.floats(0.1, 2.0))


@st.composite
def well_conditioned(draw, square=False):
    """U diag(s) Vᵀ，非零奇异值落在 [0.1, 2]"""
    rows = draw(st.integers(1, 4))
    cols = rows if square else draw(st.integers(1, 4))
    u, _ = np.linalg.qr(draw(arrays(float, (rows, rows), elements=entries)))
    v, _ = np.linalg.qr(draw(arrays(float, (cols, cols), elements=entries)))
    s = np.array(draw(st.lists(spectrum, min_size=min(rows, cols), max_size=min(rows, cols))))
    middle = np.zeros((rows, cols))
    middle[:len(s), :len(s)] = np.diag(s)
    return u @ middle @ v.T, int(np.count_nonzero(s))


def test_pinv_diagonal():
    r = pinv(np.diag([1.0, 0.0]))
    assert_allclose(r.pinv, np.diag([1.0, 0.0]))
    assert r.rank == 1


def test_pinv_zero_and_row():
    assert pinv(np.zeros((2, 2))).rank == 0
    assert_allclose(pinv(np.zeros((2, 2))).pinv, np.zeros((2, 2)))
    r = pinv([[1.0, 1.0]])
    assert_allclose(r.pinv, [[0.5], [0.5]])
    assert r.rank == 1


def test_pinv_rejects_non_finite():
    with pytest.raises(InputError):
        pinv([[np.nan, 1.0]])


@settings(max_examples=100, deadline=None)
@given(well_conditioned())
def test_penrose_identities(case):
    m, rank = case
    r = pinv(m)
    x = r.pinv
    assert r.rank == rank
    assert np.linalg.norm(m @ x @ m - m) <= 1e-10
    assert np.linalg.norm(x @ m @ x - x) <= 1e-10
    assert np.linalg.norm((m @ x).T - m @ x) <= 1e-10
    assert np.linalg.norm((x @ m).T - x @ m) <= 1e-10


def test_range_included_examples():
    assert not range_included([[0.5], [0.5]], np.diag([1.0, 0.0]))
    assert range_included(np.zeros((2, 3)), np.diag([1.0, 0.0]))
    assert range_included(np.random.default_rng(0).normal(size=(3, 2)), np.eye(3))
    with pytest.raises(InputError):
        range_included(np.ones((2, 1)), np.eye(3))


def test_solve_linear_matrix_eq_examples():
    assert_allclose(solve_linear_matrix_eq(np.diag([1.0, 0.0]), np.eye(2), np.diag([1.0, 0.0])),
                    np.diag([1.0, 0.0]))
    result = solve_linear_matrix_eq(np.diag([1.0, 0.0]), np.eye(2), np.diag([0.0, 1.0]))
    assert isinstance(result, NoSolution)
    assert not result
    assert_allclose(solve_linear_matrix_eq([[1.0]], [[1.0]], [[-1.0]]), [[-1.0]])


def test_solve_linear_matrix_eq_row_space_failure():
    # M 秩亏而 N 的行不在 Mᵀ 的值域内
    assert isinstance(solve_linear_matrix_eq(np.eye(2), np.diag([1.0, 0.0]), np.eye(2)), NoSolution)


def test_solve_linear_matrix_eq_free_term():
    l = np.array([[1.0, 1.0]])
    n = np.array([[2.0]])
    y = np.array([[3.0], [-1.0]])
    x = solve_linear_matrix_eq(l, np.eye(1), n, y=y)
    assert_allclose(l @ x, n, atol=1e-12)
    # Y 只改变 L 的核方向上的分量
    assert_allclose(x - np.array([[1.0], [1.0]]), (np.eye(2) - pinv(l).pinv @ l) @ y, atol=1e-12)


@st.composite
def left_equation(draw):
    l, _ = draw(well_conditioned())
    k = draw(st.integers(1, 3))
    if draw(st.booleans()):
        # 右端项落在 L 的值域内
        n = l @ draw(arrays(float, (l.shape[1], k), elements=entries))
    else:
        n = draw(arrays(float, (l.shape[0], k), elements=entries))
    return l, n


@settings(max_examples=100, deadline=None)
@given(left_equation())
def test_no_solution_iff_range_fails(case):
    l, n = case
    result = solve_linear_matrix_eq(l, np.eye(n.shape[1]), n)
    assert isinstance(result, NoSolution) == (not range_included(n, l))
    if not isinstance(result, NoSolution):
        assert np.linalg.norm(l @ result - n) <= 1e-8 * (1.0 + np.linalg.norm(n))


def test_projector_decomposition_e1():
    dec = projector_decomposition(np.diag([1.0, 0.0]))
    assert dec.m0 == 1
    assert_allclose(dec.upsilon_T0, [[0.0, 1.0]])
    assert_allclose(dec.g0, [[0.0], [1.0]])
    assert_allclose(np.abs(dec.t0_mat), np.eye(2))


def test_projector_decomposition_extremes():
    full = projector_decomposition(np.eye(2))
    assert full.m0 == 2
    assert full.upsilon_T0.shape == (0, 2)
    assert full.g0.shape == (2, 0)
    empty = projector_decomposition(np.zeros((2, 2)))
    assert empty.m0 == 0
    assert_allclose(empty.upsilon_T0, np.eye(2))
    assert_allclose(empty.g0, np.eye(2))


def test_projector_decomposition_rejects_indefinite():
    with pytest.raises(InputError):
        projector_decomposition(np.diag([1.0, -1.0]))
    with pytest.raises(InputError):
        projector_decomposition([[1.0, 1.0], [0.0, 1.0]])


@settings(max_examples=100, deadline=None)
@given(well_conditioned(square=True))
def test_projector_reconstruction(case):
    m, rank = case
    upsilon = m @ m.T
    dec = projector_decomposition(upsilon)
    size = upsilon.shape[0]
    projector = np.eye(size) - pinv(upsilon).pinv @ upsilon
    assert dec.m0 == rank
    assert np.linalg.norm(dec.t0_mat @ dec.t0_mat.T - np.eye(size)) <= 1e-10
    stacked = dec.t0_mat @ projector
    assert np.linalg.norm(stacked[:dec.m0]) <= 1e-10
    assert np.linalg.norm(stacked[dec.m0:] - dec.upsilon_T0) <= 1e-10
    assert np.linalg.norm(dec.g0 @ dec.upsilon_T0 - projector) <= 1e-10


def test_check_symmetric_psd():
    assert check_symmetric_psd(np.eye(2), "R") == []
    assert check_symmetric_psd(np.diag([1.0, -1.0]), "R") == ["R not PSD"]
    assert check_symmetric_psd(np.array([[0.0, 1.0], [0.0, 0.0]]), "Q") == ["Q not symmetric"]
