import math

import numpy as np
import pytest

from allab import expr as ex
from allab.anosov import (
    FlowModel,
    ModelError,
    chart_to_ambient,
    estimate_splitting,
    reeb_field_numeric,
    suspension_model,
    weak_foliations_on_torus,
)
from allab.contact import al_check
from allab.expr import evaluate, parse_expr
from allab.foliation import parallel_compact_leaves, winding
from allab.geom import (
    XYZ,
    check_periodicity,
    exterior_derivative,
    one_form,
    restrict,
)

CAT = ((2, 1), (1, 1))
NU = math.log((3.0 + math.sqrt(5.0)) / 2.0)
SLOPE_U = (math.sqrt(5.0) - 1.0) / 2.0
SLOPE_S = -(1.0 + math.sqrt(5.0)) / 2.0


@pytest.fixture(scope="module")
def cat():
    return suspension_model(CAT)


def test_suspension_geometry(cat):
    assert cat.gluing.nu == pytest.approx(NU, rel=1e-14)
    assert cat.gluing.mapping_torus
    P = cat.gluing.P_mat
    assert np.linalg.det(P) == pytest.approx(1.0, abs=1e-12)
    conj = np.linalg.solve(P, cat.gluing.D_mat @ P)
    assert np.allclose(conj, np.array(CAT, dtype=float), atol=1e-12)


def test_suspension_rejects_bad_matrices():
    with pytest.raises(ModelError, match="hyperbolic"):
        suspension_model(((1, 1), (0, 1)))
    with pytest.raises(ModelError, match="unimodular"):
        suspension_model(((2, 0), (0, 1)))
    with pytest.raises(ModelError, match="integer"):
        suspension_model(((1.5, 1), (1, 1)))
    with pytest.raises(ModelError, match="negative-trace"):
        suspension_model(((-2, -1), (-1, -1)))


def test_defining_pair_is_periodic(cat):
    for alpha in (cat.alpha_plus, cat.alpha_minus, cat.alpha_u, cat.alpha_s):
        rep = check_periodicity(alpha, cat.gluing, n=6)
        assert rep.passed, rep


def test_model_validates(cat):
    assert cat.validate()


def test_validate_catches_wrong_rate(cat):
    broken = FlowModel(
        name="broken",
        gluing=cat.gluing,
        X=cat.X,
        alpha_u=cat.alpha_u,
        alpha_s=cat.alpha_s,
        r_u=ex.const(2.0),
        r_s=ex.const(-1.0),
    )
    with pytest.raises(ModelError, match="identity fails"):
        broken.validate()


def test_standard_pair_is_anosov_liouville(cat):
    rep = al_check(cat.standard_pair(), n=10)
    assert rep.verdict == "anosov_liouville"
    assert rep.f_plus.min == pytest.approx(2.0, rel=1e-12)
    assert rep.f_minus.min == pytest.approx(2.0, rel=1e-12)
    assert rep.f_zero.max == pytest.approx(0.0, abs=1e-12)


def test_fiber_restrictions_are_closed(cat):
    sigma = cat.fiber(0.0)
    for alpha in (cat.alpha_u, cat.alpha_s):
        da = exterior_derivative(restrict(alpha, sigma))
        assert evaluate(da.coeff((0, 1)), {"u": 0.3, "v": 0.7}) == pytest.approx(
            0.0, abs=1e-12
        )


def test_weak_foliation_slopes(cat):
    F_ws, F_wu = weak_foliations_on_torus(cat, cat.fiber(0.0))
    p = {"u": 0.2, "v": 0.6}
    slope_ws = evaluate(F_ws.V2, p) / evaluate(F_ws.V1, p)
    slope_wu = evaluate(F_wu.V2, p) / evaluate(F_wu.V1, p)
    assert slope_ws == pytest.approx(SLOPE_S, abs=1e-9)
    assert slope_wu == pytest.approx(SLOPE_U, abs=1e-9)


def test_weak_foliations_have_no_winding_and_no_shared_leaves(cat):
    F_ws, F_wu = weak_foliations_on_torus(cat, cat.fiber(0.0))
    assert winding(F_ws) == (0, 0)
    assert winding(F_wu) == (0, 0)
    verdict = parallel_compact_leaves(F_ws, F_wu)
    assert verdict.verdict == "not_parallel"


def test_splitting_estimate_unstable(cat):
    est = estimate_splitting(cat)
    assert est.converged and est.iterations <= 30
    assert est.slope == pytest.approx(SLOPE_U, abs=1e-6)
    assert est.expansion_factor == pytest.approx(math.exp(NU), abs=1e-9)
    amb = chart_to_ambient(cat, est.direction)
    # the unstable direction is annihilated by the contracting form
    pairing = sum(
        evaluate(cat.alpha_s.coeff((i,)), dict(zip(XYZ, (0.1, 0.2, 0.0)))) * amb[i]
        for i in range(3)
    )
    assert abs(pairing) < 1e-6


def test_splitting_estimate_stable(cat):
    est = estimate_splitting(cat, reverse=True)
    assert est.slope == pytest.approx(SLOPE_S, abs=1e-6)
    assert est.expansion_factor == pytest.approx(math.exp(NU), abs=1e-9)


def test_splitting_estimate_time_scaling(cat):
    est = estimate_splitting(cat, T=2.5)
    assert est.slope == pytest.approx(SLOPE_U, abs=1e-6)
    assert est.expansion_factor == pytest.approx(math.exp(2.5), rel=1e-9)
    with pytest.raises(ModelError, match="positive"):
        estimate_splitting(cat, T=-1.0)


def test_reeb_field_of_standard_plus(cat):
    R = reeb_field_numeric(cat.alpha_plus)
    pts = np.array(
        [[0.0, 0.0, 0.0], [0.3, -0.2, 0.4], [-0.1, 0.5, -0.3]]
    )
    vals = R(pts)
    for (x, y, z), r in zip(pts, vals):
        assert r[0] == pytest.approx(0.5 * math.exp(-z), abs=1e-9)
        assert r[1] == pytest.approx(0.5 * math.exp(z), abs=1e-9)
        assert abs(r[2]) < 1e-9  # tangent to the fibers


def test_reeb_field_standard_contact_form():
    # alpha = dz + x dy on R^3: Reeb field is exactly d/dz
    alpha = one_form(XYZ, ex.ZERO, parse_expr("x"), ex.ONE)
    R = reeb_field_numeric(alpha)
    vals = R(np.array([[0.2, 0.4, 0.1]]))
    assert np.allclose(vals[0], [0.0, 0.0, 1.0], atol=1e-9)
