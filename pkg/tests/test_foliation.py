import math
import random

import numpy as np
import pytest

from allab import expr as ex
from allab import library
from allab.expr import Const, parse_expr, substitute
from allab.foliation import (
    CompactLeaf,
    Foliation2,
    FoliationError,
    ReturnMap,
    SlopeSearch,
    Transversal,
    TransversalError,
    compact_leaves,
    cone_separation,
    constant_slope,
    integrate_leaf,
    parallel_compact_leaves,
    reeb_annuli,
    return_map,
    rotation_number,
    winding,
)
from allab.geom import UV, one_form

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def test_foliation_rejects_vanishing_field():
    with pytest.raises(FoliationError, match="vanishes"):
        Foliation2(parse_expr("sin(2*pi*u)"), parse_expr("sin(2*pi*v)"))


def test_foliation_rejects_nonperiodic_field():
    with pytest.raises(FoliationError, match="periodic"):
        Foliation2(parse_expr("u + 1"), ex.ONE)


# ---------------------------------------------------------------------------
# winding

def test_winding_constant():
    assert winding(constant_slope(0.0)) == (0, 0)


def test_winding_degree_one():
    F = Foliation2(parse_expr("cos(2*pi*u)"), parse_expr("sin(2*pi*u)"))
    assert winding(F) == (1, 0)


def test_winding_two_reeb_band():
    assert winding(library.two_reeb_band()) == (-1, 0)


def test_winding_scaling_invariance():
    rng = random.Random(61)
    F = Foliation2(parse_expr("cos(2*pi*u)"), parse_expr("sin(2*pi*u)"))
    base = winding(F)
    for _ in range(10):
        a = rng.uniform(0.2, 2.0)
        k = rng.randint(1, 3)
        scale = parse_expr(f"{1.0 + a} + {a}*sin(2*pi*{k}*u)*cos(2*pi*v)")
        G = Foliation2(ex.mul(scale, F.V1), ex.mul(scale, F.V2))
        assert winding(G) == base


def test_winding_trivial_under_torus_maps():
    V1, V2 = parse_expr("2 + sin(2*pi*u)"), parse_expr("cos(2*pi*v)")
    assert winding(Foliation2(V1, V2)) == (0, 0)
    mats = [
        ((1, 1), (0, 1)),
        ((1, 0), (1, 1)),
        ((2, 1), (1, 1)),
        ((0, -1), (1, 0)),
        ((1, 2), (0, 1)),
    ]
    u, v = ex.var("u"), ex.var("v")
    for (a, b), (c, d) in mats:
        sub = {
            "u": ex.zadd(ex.zmul(Const(float(a)), u), ex.zmul(Const(float(b)), v)),
            "v": ex.zadd(ex.zmul(Const(float(c)), u), ex.zmul(Const(float(d)), v)),
        }
        G = Foliation2(substitute(V1, sub), substitute(V2, sub))
        assert winding(G) == (0, 0)


def test_winding_of_closed_form_foliations():
    for c_text in ("2*sin(2*pi*u)", "1 - cos(2*pi*u)", "0.5*sin(4*pi*u)"):
        a = one_form(UV, ex.neg(parse_expr(c_text)), ex.ONE)
        F = Foliation2.from_form(a)
        assert F.closed_form
        assert winding(F) == (0, 0)


# ---------------------------------------------------------------------------
# leaf integration

def test_leaf_constant_field():
    F = Foliation2(ex.ONE, Const(2.0))
    pts = integrate_leaf(F, (0.0, 0.0), math.sqrt(5.0))
    assert np.allclose(pts[-1], (1.0, 2.0), atol=1e-6)


def test_leaf_vertical_circle_closes():
    F = Foliation2(Const(0.0), ex.ONE)
    pts = integrate_leaf(F, (0.3, 0.0), 1.0)
    assert np.allclose(pts[-1] % 1.0, (0.3, 0.0), atol=1e-6)


def test_irrational_leaf_never_closes():
    F = constant_slope(-GOLDEN)
    pts = integrate_leaf(F, (0.3, 0.2), 50.0, max_step=2e-3)
    tail = pts[250:]
    frac = (tail - pts[0] + 0.5) % 1.0 - 0.5
    dists = np.hypot(frac[:, 0], frac[:, 1])
    assert dists.min() > 1e-3


# ---------------------------------------------------------------------------
# return maps and rotation numbers

def test_return_map_rigid_rotation():
    rho = 0.25
    R = return_map(constant_slope(rho), Transversal("u", 0.0))
    assert np.allclose(R.lift_values, R.ts + rho, atol=1e-6)
    assert R.degree_check()


def test_return_map_golden_slope():
    s = -GOLDEN
    R = return_map(constant_slope(s), Transversal("u", 0.0))
    assert np.allclose(R.lift_values, R.ts + s, atol=1e-6)
    rho, err = rotation_number(R, 10000)
    assert rho == pytest.approx(s, abs=err + 1e-6)


def test_return_map_reeb_direction_errors():
    with pytest.raises(TransversalError):
        return_map(library.two_reeb_band(), Transversal("u", 0.0))


def test_rotation_number_rigid():
    ts = np.arange(1024) / 1024.0
    R = ReturnMap.from_lift_samples(ts, ts + 0.25)
    rho, err = rotation_number(R, 10000)
    assert err == pytest.approx(1e-4)
    assert rho == pytest.approx(0.25, abs=1e-4)


def test_rotation_number_identity_is_exact_zero():
    ts = np.arange(1024) / 1024.0
    R = ReturnMap.from_lift_samples(ts, ts.copy())
    rho, _ = rotation_number(R, 500)
    assert rho == 0.0


def test_rotation_number_hyperbolic_fixed_point():
    ts = np.arange(2048) / 2048.0
    R = ReturnMap.from_lift_samples(ts, ts + 0.1 * np.sin(2 * np.pi * ts))
    rho, _ = rotation_number(R, 10000)
    assert rho == pytest.approx(0.0, abs=1e-4)


def test_rotation_number_conjugation_invariance():
    ts = np.arange(2048) / 2048.0
    lift = ts + 0.25
    iterations = 2000
    base = 0.25
    conjugators = [
        lambda t: t + 0.10 * np.sin(2 * np.pi * t),
        lambda t: t + 0.05 * np.sin(4 * np.pi * t),
        lambda t: t - 0.08 * np.sin(2 * np.pi * t),
    ]
    fine = np.linspace(-1.0, 2.0, 3 * 8192 + 1)
    for h in conjugators:
        hv = h(fine)
        f_of_h = h(ts) + base
        conj = np.interp(f_of_h, hv, fine)  # h^-1 (f (h(t)))
        R = ReturnMap.from_lift_samples(ts, conj)
        rho, _ = rotation_number(R, iterations)
        assert rho == pytest.approx(base, abs=2.0 / iterations)


# ---------------------------------------------------------------------------
# compact leaves

def test_no_compact_leaves_for_irrational_slope():
    assert compact_leaves(constant_slope(-GOLDEN)) == []


def test_two_reeb_band_leaves():
    leaves = compact_leaves(library.two_reeb_band())
    assert len(leaves) == 2
    got = sorted((round(l.point[0], 6), l.cls) for l in leaves)
    assert got == [(0.0, (0, 1)), (0.5, (0, -1))]


def test_rational_slope_family():
    leaves = compact_leaves(constant_slope(2.0))
    assert len(leaves) == 1
    assert leaves[0].family
    assert leaves[0].cls == (1, 2)


def test_leaf_class_matches_displacement():
    F = Foliation2(parse_expr("sin(2*pi*u)"), parse_expr("cos(2*pi*u)"))
    for leaf in compact_leaves(F):
        pts = integrate_leaf(F, leaf.point, 1.0 + 1e-3)
        disp = pts - np.array(leaf.point)
        target = np.array(leaf.cls, dtype=float)
        gap = np.min(np.hypot(*(disp - target).T))
        assert gap < 1e-5


# ---------------------------------------------------------------------------
# Reeb annuli

def test_two_reeb_band_annuli():
    annuli = reeb_annuli(library.two_reeb_band())
    assert len(annuli) == 2
    bands = sorted(tuple(round(b, 6) for b in a.band) for a in annuli)
    assert bands == [(0.0, 0.5), (0.5, 1.0)]


def test_constant_foliation_has_no_annuli():
    assert reeb_annuli(constant_slope(0.3)) == []


def test_same_orientation_leaves_make_no_annuli():
    # suspension of a circle map with two half-stable fixed points: both
    # compact leaves carry class (0, 1), so no band is a Reeb band
    F = Foliation2(parse_expr("1 - cos(4*pi*u)"), ex.ONE)
    leaves = compact_leaves(F)
    assert sorted(l.cls for l in leaves) == [(0, 1), (0, 1)]
    assert reeb_annuli(F, leaves) == []


def test_eight_band_model():
    F, G = library.eight_band_pair()
    assert winding(F) == (0, 0)
    leaves = compact_leaves(F)
    ups = [l for l in leaves if l.cls == (0, 1)]
    downs = [l for l in leaves if l.cls == (0, -1)]
    assert (len(ups), len(downs)) == (4, 8)
    assert len(reeb_annuli(F, leaves)) == 8
    verdict = parallel_compact_leaves(F, G)
    assert verdict.parallel


# ---------------------------------------------------------------------------
# parallel leaves and cone separation

def test_parallel_leaves_distinct_axes():
    F = constant_slope(0.0)
    G = Foliation2(Const(0.0), ex.ONE)
    v = parallel_compact_leaves(F, G)
    assert v.verdict == "not_parallel"


def test_parallel_leaves_up_to_sign():
    F = Foliation2(parse_expr("sin(2*pi*u)"), parse_expr("cos(2*pi*u)"))
    G = Foliation2(Const(0.0), ex.ONE)
    v = parallel_compact_leaves(F, G)
    assert v.verdict == "parallel"
    assert len(v.witnesses) == 2


def test_parallel_leaves_vacuous_for_irrational_pair():
    v = parallel_compact_leaves(constant_slope(0.618), constant_slope(-1.618))
    assert v.verdict == "not_parallel"
    assert v.witnesses == ()


def test_cone_separation_golden_pair():
    pair = cone_separation(
        constant_slope((math.sqrt(5) - 1) / 2), constant_slope(-GOLDEN)
    )
    assert pair == ((1, 0), (0, 1))


def _near_tangency_pair():
    # the two fields sweep almost every direction, leaving only narrow gaps
    # around slopes +-3/13; no denominator <= 10 candidate fits in a gap
    g1 = math.atan(3.0 / 13.0)
    gap = 0.0065
    w1 = math.pi / 2.0 - g1 - gap
    w2 = g1 - gap
    thF = f"pi/2 + {w1}*sin(2*pi*u)"
    thG = f"pi + {w2}*sin(2*pi*u)"
    F = Foliation2(parse_expr(f"cos({thF})"), parse_expr(f"sin({thF})"))
    G = Foliation2(parse_expr(f"cos({thG})"), parse_expr(f"sin({thG})"))
    return F, G


def test_cone_separation_needs_fine_slopes():
    F, G = _near_tangency_pair()
    assert cone_separation(F, G, SlopeSearch(max_denominator=10)) is None
    found = cone_separation(F, G, SlopeSearch(max_denominator=50))
    assert found == ((13, -3), (13, 3))


def test_cone_separation_fails_with_parallel_leaves():
    F, G = library.franks_williams_pair()
    for bound in (10, 50):
        assert cone_separation(F, G, SlopeSearch(max_denominator=bound)) is None
