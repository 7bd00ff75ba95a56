import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_instance
from surrogate_dual.model import (
    AggregationMatrix,
    ModelError,
    Polynomial,
    aggregate,
    dump_model,
    evaluate,
    model_to_dict,
    parse_model,
)


def poly(*terms):
    return Polynomial.from_terms(terms)


def test_example1_shape(ex1):
    assert (ex1.n, ex1.m, ex1.p) == (2, 2, 0)
    assert ex1.boxes == ((0.0, 1.0), (0.0, 1.0))


def _doc(**overrides):
    doc = {
        "n": 1,
        "objective": [1],
        "boxes": [[0, 1]],
        "nonlinear": [{"terms": [{"exps": {"0": 2}, "coef": 1}]}],
    }
    doc.update(overrides)
    return doc


def test_unbounded_box_rejected():
    with pytest.raises(ModelError, match="unbounded variable") as err:
        parse_model(json.dumps(_doc(boxes=[[0, None]])))
    assert err.value.path == "boxes[0]"
    with pytest.raises(ModelError, match="unbounded variable"):
        parse_model('{"n": 1, "objective": [1], "boxes": [[0, Infinity]], "nonlinear": [{"terms": []}]}')


def test_empty_nonlinear_rejected():
    with pytest.raises(ModelError, match="no nonlinear constraints"):
        parse_model(json.dumps(_doc(nonlinear=[])))


@pytest.mark.parametrize(
    "overrides, path",
    [
        ({"objective": [1, 2]}, "objective"),
        ({"boxes": [[0, 1], [0, 1]]}, "boxes"),
        ({"integer": [3]}, "integer[0]"),
        ({"nonlinear": [{"terms": [{"exps": {"5": 1}, "coef": 1}]}]}, "nonlinear[0].terms[0].exps"),
        ({"linear": [{"coeffs": {"0": "abc"}, "rhs": 1}]}, "linear[0].coeffs[0]"),
        ({"objective": {"terms": []}}, "objective"),
    ],
)
def test_schema_errors_carry_paths(overrides, path):
    with pytest.raises(ModelError) as err:
        parse_model(json.dumps(_doc(**overrides)))
    assert err.value.path == path


def test_aggregate_examples(ex1):
    assert aggregate(ex1, [1, 0]) == poly(({0: 1, 1: 1}, 2), ({0: 2}, 1), ({1: 2}, -1), ({0: 1}, -1))
    assert aggregate(ex1, [0, 0]).is_zero()
    half = aggregate(ex1, [0.5, 0.5])
    expected = {((0, 1), (1, 1)): 0.5, ((0, 2),): 0.35, ((1, 2),): -0.6, ((0, 1),): -0.75, ((1, 1),): 0.75}
    assert set(half.terms) == set(expected)
    for mono, coef in expected.items():
        assert half.terms[mono] == pytest.approx(coef, abs=1e-15)


def test_aggregate_errors(ex1):
    with pytest.raises(ValueError):
        aggregate(ex1, [-0.1, 1])
    with pytest.raises(ValueError):
        aggregate(ex1, [1, 0, 0])


def test_evaluate_examples(ex1, ex3):
    # direct substitution: 2*.52*.37 + .52^2 - .37^2 - .52
    assert evaluate(ex1.nonlinear[0], [0.52, 0.37]) == pytest.approx(-0.0017, abs=1e-12)
    assert evaluate(Polynomial(), [0.3, 0.7]) == 0.0
    assert evaluate(ex3.nonlinear[0], [1, 0, 2, 0]) == -1.0


def test_zero_coefficients_dropped():
    p = poly(({0: 1}, 1.0), ({0: 1}, -1.0), ({1: 2}, 0.0))
    assert p.is_zero() and len(p) == 0


def test_polynomial_gradient_matches_finite_difference(ex1):
    g = ex1.nonlinear[1]
    x = np.array([0.3, 0.6])
    h = 1e-6
    fd = [(g.evaluate(x + h * e) - g.evaluate(x - h * e)) / (2 * h) for e in np.eye(2)]
    assert np.allclose(g.gradient(x), fd, atol=1e-8)


def test_evaluate_many_matches_scalar(ex1):
    pts = np.random.default_rng(0).uniform(0, 1, (50, 2))
    g = ex1.nonlinear[0]
    assert np.allclose(g.evaluate_many(pts), [g.evaluate(p) for p in pts], atol=1e-14)


lam_vectors = st.lists(st.floats(0, 5, allow_nan=False), min_size=2, max_size=2)


@settings(max_examples=60, deadline=None)
@given(lam=lam_vectors, mu=lam_vectors, a=st.floats(0, 3), b=st.floats(0, 3))
def test_aggregate_is_linear(ex1, lam, mu, a, b):
    combo = aggregate(ex1, [a * l + b * m for l, m in zip(lam, mu)])
    parts = aggregate(ex1, lam) * a + aggregate(ex1, mu) * b
    for mono in set(combo.terms) | set(parts.terms):
        assert combo.coefficient(mono) == pytest.approx(parts.coefficient(mono), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    lam=st.lists(st.floats(0, 2), min_size=4, max_size=4),
    x=st.lists(st.floats(-10, 10), min_size=4, max_size=4),
)
def test_evaluate_of_aggregate(ex3, lam, x):
    lhs = evaluate(aggregate(ex3, lam), x)
    rhs = sum(l * evaluate(g, x) for l, g in zip(lam, ex3.nonlinear))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("name", ["example1", "example2", "example3", "tree_demo"])
def test_round_trip(data_dir, name):
    model = parse_model((data_dir / f"{name}.json").read_text())
    again = parse_model(dump_model(model))
    assert again == model
    assert model_to_dict(again) == model_to_dict(model)


def test_round_trip_random_with_rows():
    doc = model_to_dict(random_instance(7, m=3, integer=True))
    doc["linear"] = [{"coeffs": {"0": 0.1, "1": -2.5}, "rhs": 1.75}]
    doc["refined"] = [{"coeffs": {"1": 1}, "rhs": 0.9}]
    doc["primal_cutoff"] = 0.123456789012345
    model = parse_model(json.dumps(doc))
    assert parse_model(dump_model(model)) == model
    assert model.primal_cutoff == 0.123456789012345


def test_aggregation_matrix():
    lam = AggregationMatrix.from_array([[2.0, 2.0], [0.3, 0.1]])
    norm = lam.normalized()
    assert norm.is_normalized()
    assert np.allclose(norm.as_array(), [[0.5, 0.5], [0.3, 0.1]])
    assert lam.padded(3).K == 3 and np.all(lam.padded(3).as_array()[2] == 0)
    with pytest.raises(ValueError):
        AggregationMatrix.from_array([[-1.0, 0.0]])


def test_model_is_immutable(ex1):
    with pytest.raises(Exception):
        ex1.n = 3
    with pytest.raises(TypeError):
        ex1.nonlinear[0].terms[()] = 1.0
