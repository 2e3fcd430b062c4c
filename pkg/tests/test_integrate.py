from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from integrate import (MatrixGridFunction, combined_riccati_residual, integrate_p1, integrate_regular_riccati,
                       quadrature, riccati_residual, transition_family)
from model import make_problem, with_overrides
from tests.conftest import entries, random_problem
from utils import DivergenceError, InputError


def test_e1_riccati_closed_form(e1):
    P = integrate_regular_riccati(e1)
    t = P.P.times
    assert np.max(np.abs(P.P.values[:, 0, 0] - 1.0 / (2.0 - t))) <= 1e-8
    assert P.residual_norm <= 1e-4


def test_e2_riccati_value(e2):
    P = integrate_regular_riccati(e2)
    t = P.P.times
    # P(t) = (3 + e^{2(t-1)}) / (3 - e^{2(t-1)})
    closed = (3.0 + np.exp(2.0 * (t - 1.0))) / (3.0 - np.exp(2.0 * (t - 1.0)))
    assert np.max(np.abs(P.P.values[:, 0, 0] - closed)) <= 1e-7
    assert P.P[0][0, 0] == pytest.approx(1.0944859497, abs=1e-9)
    assert riccati_residual(e2, P.P) <= 1e-4


def test_zero_data_gives_zero_riccati():
    p = make_problem(A=[[0.3]], B=[[1.0]], Q=[[0.0]], R=[[1.0]], H=[[0.0]], x0=[1.0], steps=100)
    assert_allclose(integrate_regular_riccati(p).P.values, 0.0)


def test_riccati_divergence_names_node():
    # Ṗ = P²，P(1) = -2 在 t = 0.5 处爆破
    p = make_problem(A=[[0.0]], B=[[1.0]], Q=[[0.0]], R=[[1.0]], H=[[-2.0]], x0=[1.0], steps=1000)
    with pytest.raises(DivergenceError) as info:
        integrate_regular_riccati(p)
    assert 0 <= info.value.node < 1000
    assert info.value.t <= 0.5


@settings(max_examples=100, deadline=None)
@given(random_problem())
def test_riccati_stays_symmetric(p):
    values = integrate_regular_riccati(p).P.values
    assert np.max(np.abs(values - np.transpose(values, (0, 2, 1)))) <= 1e-10


def test_e1_layer_two_closed_form(e1_layers):
    _, _, l2 = e1_layers
    t = l2.P1.times
    assert l2.P1[-1][0, 0] == pytest.approx(-1.0)
    assert np.max(np.abs(l2.P1.values[:, 0, 0] - 1.0 / (t - 2.0))) <= 1e-8


def test_combined_riccati_residual_e1(e1, e1_layers):
    P, _, l2 = e1_layers
    assert combined_riccati_residual(e1, P.P, l2.P1) <= 1e-6


def test_p1_zero_is_equilibrium(e2_layers):
    _, reduced, _ = e2_layers
    assert_allclose(integrate_p1(reduced, np.zeros((1, 1))).P.values, 0.0)


def test_p1_terminal_checks(e1_layers):
    _, reduced, _ = e1_layers
    with pytest.raises(InputError):
        integrate_p1(reduced, np.zeros((2, 2)))


def test_p1_rejects_asymmetric_terminal(singular_layers):
    _, reduced, _ = singular_layers
    with pytest.raises(InputError):
        integrate_p1(reduced, [[0.0, 1.0], [0.0, 0.0]])


def test_transition_identity_when_a0_vanishes(singular_layers):
    _, reduced, _ = singular_layers
    # A0 = diag(-P, 0)：第二个坐标上转移矩阵恒为 1
    P2 = transition_family(reduced, reduced.times[0])
    assert_allclose(P2.values[:, 1, 1], 1.0, atol=1e-12)
    assert_allclose(P2.values[:, 0, 0], (2.0 - reduced.times) / 2.0, atol=1e-9)


def test_transition_requires_node(e1_layers):
    _, reduced, _ = e1_layers
    with pytest.raises(InputError):
        transition_family(reduced, 0.00037)


def synthetic_reduced(times, a0_values):
    # 转移矩阵只依赖 A0
    return SimpleNamespace(a0=MatrixGridFunction(times, a0_values))


@st.composite
def drifting_a0(draw, steps=50):
    n = draw(st.integers(1, 3))
    m0 = draw(arrays(float, (n, n), elements=entries))
    m1 = draw(arrays(float, (n, n), elements=entries))
    times = np.linspace(0.0, 1.0, steps + 1)
    nodes = st.integers(0, steps)
    return times, m0 + times[:, None, None] * m1, (draw(nodes), draw(nodes), draw(nodes))


@settings(max_examples=100, deadline=None)
@given(drifting_a0())
def test_transition_composes(case):
    times, a0, (a, b, c) = case
    reduced = synthetic_reduced(times, a0)
    from_a, from_b = transition_family(reduced, times[a]), transition_family(reduced, times[b])
    assert_allclose(from_a[b] @ from_b[c], from_a[c], rtol=1e-8, atol=1e-8)
    assert_allclose(from_a[a], np.eye(a0.shape[1]), atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(-2.0, 2.0, allow_nan=False), st.integers(0, 1000))
def test_scalar_transition_closed_form(a, ref):
    times = np.linspace(0.0, 1.0, 1001)
    reduced = synthetic_reduced(times, np.full((1001, 1, 1), a))
    P2 = transition_family(reduced, times[ref])
    # P2(t_ref, s) = e^{a(s - t_ref)}
    assert np.max(np.abs(P2.values[:, 0, 0] - np.exp(a * (times - times[ref])))) <= 1e-8


def test_quadrature():
    times = np.linspace(0.0, 1.0, 1001)
    const = MatrixGridFunction(times, np.full((1001, 1, 1), 2.5))
    assert_allclose(quadrature(const), [[2.5]])
    square = MatrixGridFunction(times, (times ** 2)[:, None, None])
    assert abs(quadrature(square)[0, 0] - 1.0 / 3.0) <= 1e-10
    odd = np.linspace(0.0, 1.0, 6)
    linear = MatrixGridFunction(odd, odd[:, None, None])
    assert quadrature(linear)[0, 0] == pytest.approx(0.5)
    with pytest.raises(InputError):
        quadrature(MatrixGridFunction(times[:2], np.zeros((2, 1, 1))))


def test_grid_function_interpolation():
    times = np.linspace(0.0, 1.0, 11)
    f = MatrixGridFunction(times, np.sin(times)[:, None, None])
    assert f.at(times[3])[0, 0] == np.sin(times[3])
    assert abs(f.at(0.35)[0, 0] - np.sin(0.35)) <= 1e-5
    empty = MatrixGridFunction(times, np.zeros((11, 0, 2)))
    assert empty.at(0.35).shape == (0, 2)
    with pytest.raises(InputError):
        MatrixGridFunction(times, np.zeros((10, 1, 1)))


def test_sampled_data_matches_constant(e1):
    from model import MatrixFunction
    sampled = with_overrides(e1, R=MatrixFunction.sampled([0.0, 1.0], [np.diag([1.0, 0.0])] * 2))
    assert_allclose(integrate_regular_riccati(sampled).P.values, integrate_regular_riccati(e1).P.values)
