import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_instances
from relax_checks import worst_cut_violation
from surrogate_dual.lp import EQ, LE, LinearProgram, solve_lp
from surrogate_dual.model import Polynomial
from surrogate_dual.relax import Atom, build_reformulation, cuts_to_arrays, emit_cuts


def poly(*terms):
    return Polynomial.from_terms(terms)


def test_bilinear_base_case():
    reform = build_reformulation([poly(({0: 1, 1: 1}, 1.0))], [[0, 1], [0, 1]])
    assert reform.atoms == [Atom("bilinear", 2, (0, 1))]
    assert np.allclose(reform.boxes[2], [0, 1])


def test_cube_box():
    reform = build_reformulation([poly(({0: 3}, 1.0))], [[-1, 2]])
    assert len(reform.atoms) == 1 and reform.atoms[0].power == 3
    assert reform.boxes[1] == pytest.approx([-1, 8], rel=1e-11)


def test_example1_shares_auxiliaries(ex1):
    reform = build_reformulation(ex1.nonlinear, ex1.boxes)
    kinds = sorted((a.kind, a.args) for a in reform.atoms)
    assert kinds == [("bilinear", (0, 1)), ("square", (0,)), ("square", (1,))]


def test_degree_bound_on_auxiliaries():
    # x0^2 x1^3 x2 has degree 6: at most 5 auxiliaries
    mono = poly(({0: 2, 1: 3, 2: 1}, 1.0))
    reform = build_reformulation([mono], [[-1, 2], [0, 1], [-3, -1]])
    assert reform.n_aux <= 5
    z = reform.extend_point([1.5, 0.5, -2.0])
    row, const = reform.linearize(mono)
    assert row @ z + const == pytest.approx(mono.evaluate([1.5, 0.5, -2.0]))


def test_mccormick_unit_box():
    reform = build_reformulation([poly(({0: 1, 1: 1}, 1.0))], [[0, 1], [0, 1]])
    A, b, eq = cuts_to_arrays(emit_cuts(reform, [[0, 1], [0, 1]]), 3)
    assert not eq.any()
    # rows as (x, y, w) <= b : -w <= 0, x + y - w <= 1, w - x <= 0, w - y <= 0
    expected = {(0, 0, -1, 0), (1, 1, -1, 1), (-1, 0, 1, 0), (0, -1, 1, 0)}
    got = {tuple(np.round(np.append(a, r), 12)) for a, r in zip(A, b)}
    assert got == expected


def test_point_box_gives_equality():
    reform = build_reformulation([poly(({0: 2}, 1.0))], [[0, 0]])
    cuts = emit_cuts(reform, [[0, 0]])
    assert len(cuts) == 1 and cuts[0].equality and cuts[0].rhs == 0.0


def test_cube_on_unit_interval():
    reform = build_reformulation([poly(({0: 3}, 1.0))], [[0, 1]])
    cuts = emit_cuts(reform, [[0, 1]])
    over = [c for c in cuts if c.coef[list(c.index).index(1)] > 0]
    assert len(over) == 1  # secant w <= x
    coef = dict(zip(over[0].index, over[0].coef))
    assert coef[1] == 1.0 and coef[0] == pytest.approx(-1.0) and over[0].rhs == pytest.approx(0.0)
    assert worst_cut_violation(reform, reform.boxes) <= 1e-9


boxes_1d = st.tuples(st.floats(-5, 5), st.floats(0, 6)).map(lambda t: (t[0], t[0] + t[1]))


@settings(max_examples=60, deadline=None)
@given(box=boxes_1d, k=st.sampled_from([2, 3, 4, 5, 7]), seed=st.integers(0, 100))
def test_power_envelopes_valid(box, k, seed):
    reform = build_reformulation([poly(({0: k}, 1.0))], [box])
    assert worst_cut_violation(reform, reform.extended_boxes([box]), samples=300, seed=seed) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(bx=boxes_1d, by=boxes_1d, seed=st.integers(0, 100))
def test_mixed_monomials_valid(bx, by, seed):
    p = poly(({0: 2, 1: 1}, 1.0), ({0: 1, 1: 3}, -2.0), ({1: 2}, 0.5))
    reform = build_reformulation([p], [bx, by])
    assert worst_cut_violation(reform, reform.extended_boxes([bx, by]), samples=200, seed=seed) <= 1e-9


def _relaxation_min(reform, poly_obj, boxes):
    # minimize the linearized objective over the envelope cuts
    row, const = reform.linearize(poly_obj)
    ext = reform.extended_boxes(boxes)
    A, b, eq = cuts_to_arrays(emit_cuts(reform, ext), reform.n_ext)
    lp = LinearProgram(row, A, [EQ if e else LE for e in eq], b, ext[:, 0], ext[:, 1])
    return solve_lp(lp).objective + const


@pytest.mark.parametrize("model_idx", range(4))
def test_shrinking_box_never_weakens(model_idx):
    model = random_instances(4)[model_idx]
    g = model.nonlinear[0]
    reform = build_reformulation([g], model.boxes)
    rng = np.random.default_rng(model_idx)
    boxes = np.array(model.boxes, dtype=float)
    value = _relaxation_min(reform, g, boxes)
    for _ in range(6):
        j = rng.integers(0, 2)
        cut = rng.uniform(boxes[j, 0], boxes[j, 1])
        if rng.integers(0, 2):
            boxes[j, 0] = cut
        else:
            boxes[j, 1] = cut
        new = _relaxation_min(reform, g, boxes)
        assert new >= value - 1e-9
        assert new <= g.evaluate(boxes.mean(axis=1)) + 1e-9  # still a relaxation
        value = new
