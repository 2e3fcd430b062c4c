import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from model import (MatrixFunction, TimeGrid, dump_problem, evaluate, fixture, load_problem, make_problem,
                   problem_from_dict, problem_to_dict, require_valid, scaled, validate, with_overrides)
from utils import InputError


def test_time_grid():
    grid = TimeGrid(0.0, 1.0, 1000)
    assert grid.h == pytest.approx(0.001)
    assert len(grid.nodes) == 1001
    assert grid.nodes[-1] == 1.0
    with pytest.raises(InputError):
        TimeGrid(1.0, 0.0, 10)
    with pytest.raises(InputError):
        TimeGrid(0.0, 1.0, 0)


def test_evaluate_constant_and_sampled():
    const = MatrixFunction.constant(np.diag([1.0, 0.0]))
    assert_allclose(evaluate(const, 0.3), np.diag([1.0, 0.0]))
    sampled = MatrixFunction.sampled([0.0, 1.0], [[[0.0]], [[2.0]]])
    assert_allclose(evaluate(sampled, 0.5), [[1.0]])
    assert_allclose(sampled(1.0), [[2.0]])
    with pytest.raises(InputError):
        evaluate(sampled, 1.5)
    with pytest.raises(InputError):
        evaluate(const, 2.0, TimeGrid(0.0, 1.0, 10))


def test_sampled_rejects_bad_times():
    with pytest.raises(InputError):
        MatrixFunction.sampled([0.0, 0.0], [[[1.0]], [[2.0]]])
    with pytest.raises(InputError):
        MatrixFunction.sampled([0.0, 1.0], [[[1.0]]])
    with pytest.raises(InputError):
        MatrixFunction.sampled([0.0, 0.1, 1.0], [[[1.0]], [[2.0]], [[3.0]]])
    uniform = MatrixFunction.sampled([0.0, 0.25, 0.5, 0.75, 1.0], [[[float(k)]] for k in range(5)])
    assert_allclose(uniform(0.375), [[1.5]])


def test_fixtures():
    e1 = fixture("E1", steps=1000)
    assert (e1.n, e1.m) == (1, 2)
    assert_allclose(e1.B(0.0), [[1.0, 1.0]])
    assert_allclose(e1.R(0.0), np.diag([1.0, 0.0]))
    assert_allclose(e1.H, [[1.0]])
    assert e1.grid.h == pytest.approx(0.001)
    e2 = fixture("E2")
    assert_allclose(e2.Q(0.5), [[1.0]])
    assert_allclose(e2.H, [[2.0]])
    with pytest.raises(InputError):
        fixture("E3")


def test_validate(e1):
    assert validate(e1).ok
    bad_r = with_overrides(e1, R=[[1.0, 0.0], [0.0, -1.0]])
    assert "R not PSD" in validate(bad_r).violations
    bad_b = with_overrides(e1, B=[[1.0, 1.0, 1.0]])
    assert any("dimension" in v for v in validate(bad_b).violations)
    with pytest.raises(InputError):
        require_valid(bad_r)


def test_validate_sample_span(e1):
    short = with_overrides(e1, A=MatrixFunction.sampled([0.0, 0.5], [[[0.0]], [[0.0]]]))
    assert any("span" in v for v in validate(short).violations)


def test_scaled(e1):
    p = scaled(e1, 3.0)
    assert_allclose(p.R(0.0), 3.0 * e1.R(0.0))
    assert_allclose(p.H, 3.0 * e1.H)
    assert_allclose(p.A(0.0), e1.A(0.0))
    with pytest.raises(InputError):
        scaled(e1, 0.0)


def test_problem_file_round_trip(tmp_path):
    p = make_problem(A=MatrixFunction.sampled([0.0, 1.0], [[[0.0]], [[1.0]]]), B=[[1.0, 1.0]], Q=[[1.0]],
                     R=np.diag([1.0, 0.0]), H=[[2.0]], x0=[0.5], steps=20)
    path = tmp_path / "p.json"
    dump_problem(p, str(path))
    loaded = load_problem(str(path))
    assert problem_to_dict(loaded) == problem_to_dict(p)
    assert load_problem(str(path), steps=40).grid.steps == 40


def test_problem_file_errors(tmp_path):
    data = problem_to_dict(fixture("E1", steps=10))
    with pytest.raises(InputError):
        problem_from_dict({k: v for k, v in data.items() if k != "Q"})
    with pytest.raises(InputError):
        problem_from_dict(dict(data, n=2))
    with pytest.raises(InputError):
        problem_from_dict(dict(data, n="one"))
    with pytest.raises(InputError):
        problem_from_dict(dict(data, m=None))
    with pytest.raises(InputError):
        problem_from_dict(dict(data, A={"formula": "sin(t)"}))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(InputError):
        load_problem(str(broken))
    with pytest.raises(InputError):
        load_problem(str(tmp_path / "missing.json"))
    array_file = tmp_path / "array.json"
    array_file.write_text(json.dumps([1, 2]), encoding="utf-8")
    with pytest.raises(InputError):
        load_problem(str(array_file))
