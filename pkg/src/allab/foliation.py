"""Oriented foliations on the 2-torus given by nowhere-vanishing direction
fields (V1(u,v), V2(u,v)).

The analysis toolbox: loop winding of the direction map, leaf integration in
the universal cover, first-return maps on axis circles with rotation numbers,
compact-leaf detection, Reeb annuli, and the parallel-leaf / cone-separation
tests used by the pre-Lagrangian pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import PchipInterpolator

from . import expr as ex
from .expr import Expr, ZERO, compile_field, compile_scalar, diff
from .geom import DifferentialForm, UV, exterior_derivative


class FoliationError(Exception):
    pass


class WindingError(FoliationError):
    """The turning integral did not land close enough to an integer."""


class TransversalError(FoliationError):
    """The direction field is tangent to the chosen circle somewhere; this is
    exactly the Reeb-carrying situation, so no return map exists."""


@dataclass(frozen=True)
class Foliation2:
    V1: Expr
    V2: Expr
    closed_form: bool = False  # set when built from a closed defining 1-form
    name: str = ""

    def __post_init__(self):
        a = np.arange(256) / 256.0
        U, V = np.meshgrid(a, a, indexing="ij")
        v1 = self.field1()(U, V) + np.zeros_like(U)
        v2 = self.field2()(U, V) + np.zeros_like(U)
        norm = np.hypot(v1, v2)
        if norm.min() <= 1e-9:
            i = np.unravel_index(int(np.argmin(norm)), norm.shape)
            raise FoliationError(
                f"direction field vanishes near (u, v) = ({U[i]:.4f}, {V[i]:.4f})"
            )
        worst = 0.0
        t = np.linspace(0.0, 1.0, 33)
        for fn in (self.field1(), self.field2()):
            worst = max(worst, float(np.max(np.abs(fn(t, t + 1.0) - fn(t, t)))))
            worst = max(worst, float(np.max(np.abs(fn(t + 1.0, t) - fn(t, t)))))
        if worst > 1e-9:
            raise FoliationError(f"field is not 1-periodic (residual {worst:.2e})")

    def field1(self):
        return compile_field(self.V1, UV)

    def field2(self):
        return compile_field(self.V2, UV)

    @staticmethod
    def from_form(a: DifferentialForm, name: str = "") -> "Foliation2":
        """Kernel foliation of a 1-form on the torus, oriented by rotating
        the coefficient vector a quarter turn."""
        if a.coords != UV or a.degree != 1:
            raise FoliationError("defining form must be a 1-form on (u, v)")
        da = exterior_derivative(a).coeff((0, 1))
        closed = True
        if da != ZERO:
            g = np.arange(64) / 64.0
            U, V = np.meshgrid(g, g, indexing="ij")
            closed = float(np.max(np.abs(compile_field(da, UV)(U, V)))) < 1e-9
        return Foliation2(
            ex.zneg(a.coeff((1,))), a.coeff((0,)), closed_form=closed, name=name
        )


def constant_slope(rho: float, name: str = "") -> Foliation2:
    return Foliation2(ex.ONE, ex.const(float(rho)), name=name)


# ---------------------------------------------------------------------------
# winding

def _turning_integrand(F: Foliation2, along: str):
    num = ex.zsub(
        ex.zmul(F.V1, diff(F.V2, along)), ex.zmul(F.V2, diff(F.V1, along))
    )
    den = ex.add(ex.mul(F.V1, F.V1), ex.mul(F.V2, F.V2))
    return compile_scalar(ex.div(num, den), UV)


def winding(F: Foliation2, gap: float = 0.3) -> tuple[int, int]:
    """Degrees of V/|V| along the loops v = 0 and u = 0, from the turning
    form (V1 dV2 - V2 dV1)/|V|^2."""
    out = []
    fu = _turning_integrand(F, "u")
    fv = _turning_integrand(F, "v")
    for fn in (lambda t: fu(t, 0.0), lambda t: fv(0.0, t)):
        total, _ = integrate.quad(fn, 0.0, 1.0, limit=200)
        deg = total / (2.0 * math.pi)
        k = round(deg)
        if abs(deg - k) > gap:
            raise WindingError(
                f"turning integral {deg:.4f} is not within {gap} of an integer"
            )
        out.append(int(k))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# leaf integration

def integrate_leaf(
    F: Foliation2,
    start: tuple[float, float],
    length: float,
    max_step: float = 1e-3,
) -> np.ndarray:
    """Arc-length RK4 trajectory of V/|V| in the universal cover; returns the
    polyline as an (n+1, 2) array starting at ``start``."""
    if length <= 0:
        raise FoliationError("leaf length must be positive")
    f1 = compile_scalar(F.V1, UV)
    f2 = compile_scalar(F.V2, UV)

    def rhs(u, v):
        a, b = f1(u, v), f2(u, v)
        n = math.hypot(a, b)
        return a / n, b / n

    n = max(1, math.ceil(length / max_step))
    h = length / n
    pts = np.empty((n + 1, 2))
    u, v = float(start[0]), float(start[1])
    pts[0] = (u, v)
    for i in range(n):
        k1 = rhs(u, v)
        k2 = rhs(u + 0.5 * h * k1[0], v + 0.5 * h * k1[1])
        k3 = rhs(u + 0.5 * h * k2[0], v + 0.5 * h * k2[1])
        k4 = rhs(u + h * k3[0], v + h * k3[1])
        u += h * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
        v += h * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
        pts[i + 1] = (u, v)
    return pts


# ---------------------------------------------------------------------------
# return maps

@dataclass(frozen=True)
class Transversal:
    axis: str  # "u" (circle u = value, parameterized by v) or "v"
    value: float = 0.0

    def __post_init__(self):
        if self.axis not in ("u", "v"):
            raise FoliationError("transversal axis must be 'u' or 'v'")


@dataclass(frozen=True)
class ReturnMap:
    transversal: Transversal
    direction: int  # sign of the crossing component
    ts: np.ndarray
    lift_values: np.ndarray
    _interp: PchipInterpolator = field(repr=False, compare=False)

    @staticmethod
    def from_lift_samples(
        ts: np.ndarray, lifts: np.ndarray, transversal: Transversal = Transversal("u")
    ) -> "ReturnMap":
        ts = np.asarray(ts, dtype=float)
        lifts = np.asarray(lifts, dtype=float)
        if np.any(np.diff(lifts) <= 0):
            raise FoliationError("return-map lift samples are not strictly monotone")
        t_ext = np.concatenate([ts, [ts[0] + 1.0]])
        y_ext = np.concatenate([lifts, [lifts[0] + 1.0]])
        return ReturnMap(transversal, 1, ts, lifts, PchipInterpolator(t_ext, y_ext))

    def lift(self, t):
        t = np.asarray(t, dtype=float)
        k = np.floor(t - self.ts[0])
        out = self._interp(t - k) + k
        return float(out) if out.ndim == 0 else out

    def iterate_lift(self, t: float, n: int) -> float:
        for _ in range(n):
            t = self.lift(t)
        return t

    def degree_check(self, tol: float = 1e-6) -> bool:
        return abs(self.lift(self.ts[0] + 1.0) - self.lift(self.ts[0]) - 1.0) < tol


def _crossing_sign(F: Foliation2, axis: str, n: int = 192, tol: float = 1e-6):
    """Sign of the transverse component over the whole torus, or None if it
    vanishes somewhere (no global return map in that direction)."""
    a = np.arange(n) / n
    U, V = np.meshgrid(a, a, indexing="ij")
    fn = F.field1() if axis == "u" else F.field2()
    comp = fn(U, V) + np.zeros_like(U)
    if np.min(np.abs(comp)) <= tol or np.min(comp) * np.max(comp) < 0:
        return None
    return 1 if comp.flat[0] > 0 else -1


def return_map(
    F: Foliation2,
    transversal: Transversal,
    n_points: int = 1024,
    n_steps: int = 2048,
) -> ReturnMap:
    """First-return map of the foliation on an axis circle, tabulated by
    integrating the leaves across one fundamental strip."""
    sign = _crossing_sign(F, transversal.axis)
    if sign is None:
        raise TransversalError(
            f"field is tangent to circles {transversal.axis} = const somewhere; "
            "the foliation carries Reeb bands in this direction"
        )
    f1, f2 = F.field1(), F.field2()
    if transversal.axis == "u":
        def slope(x, y):  # dy/dx along the leaf, x = u
            return f2(x, y) / f1(x, y)
    else:
        def slope(x, y):  # x = v
            return f1(y, x) / f2(y, x)
    x0 = float(transversal.value)
    h = sign / float(n_steps)
    ts = np.arange(n_points) / n_points
    y = ts.copy()
    x = x0
    for _ in range(n_steps):
        k1 = slope(x, y)
        k2 = slope(x + 0.5 * h, y + 0.5 * h * k1)
        k3 = slope(x + 0.5 * h, y + 0.5 * h * k2)
        k4 = slope(x + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        x += h
    if np.any(np.diff(y) <= 0):
        raise FoliationError("tabulated return map lost monotonicity")
    t_ext = np.concatenate([ts, [1.0]])
    y_ext = np.concatenate([y, [y[0] + 1.0]])
    return ReturnMap(transversal, sign, ts, y, PchipInterpolator(t_ext, y_ext))


def rotation_number(R: ReturnMap, iterations: int = 10000) -> tuple[float, float]:
    """Birkhoff average of the lift displacement; the error bound 1/n is the
    standard one for monotone circle maps."""
    t0 = float(R.ts[0])
    t = R.iterate_lift(t0, iterations)
    return (t - t0) / iterations, 1.0 / iterations


# ---------------------------------------------------------------------------
# compact leaves

@dataclass(frozen=True)
class CompactLeaf:
    point: tuple[float, float]
    cls: tuple[int, int]  # primitive homology class, oriented along the leaf
    period_length: float
    family: bool = False  # every leaf compact (linear rational foliation)

    def orientation(self) -> int:
        p, q = self.cls
        return 1 if (q > 0 or (q == 0 and p > 0)) else -1


def _primitive(p: int, q: int) -> tuple[int, int]:
    g = math.gcd(abs(p), abs(q))
    return (p // g, q // g) if g else (p, q)


def _axis_leaves(F: Foliation2, axis: str, n_scan: int = 2048) -> list[CompactLeaf]:
    """Leaves parallel to an axis: circles where the transverse component
    vanishes identically."""
    fn_t = F.field1() if axis == "u" else F.field2()
    fn_a = F.field2() if axis == "u" else F.field1()
    vs = np.arange(17) / 17.0
    xs = np.arange(n_scan) / n_scan

    def worst(x):
        if axis == "u":
            return float(np.max(np.abs(fn_t(np.full_like(vs, x), vs))))
        return float(np.max(np.abs(fn_t(vs, np.full_like(vs, x)))))

    prof = np.array([worst(x) for x in xs])
    if prof.max() < 1e-8:
        # transverse component vanishes identically: every leaf is an
        # axis-parallel circle
        s = 1 if (fn_a(0.0, 0.5) if axis == "u" else fn_a(0.5, 0.0)) > 0 else -1
        cls = (0, s) if axis == "u" else (s, 0)
        return [CompactLeaf((0.0, 0.0), cls, 1.0, family=True)]
    left = np.roll(prof, 1)
    right = np.roll(prof, -1)
    candidates = np.flatnonzero((prof <= left) & (prof <= right) & (prof < 0.05))
    leaves = []
    found: list[float] = []
    def signed(x):
        return float(fn_t(x, 0.37)) if axis == "u" else float(fn_t(0.37, x))

    for i in candidates:
        lo = (i - 1) / n_scan
        hi = (i + 1) / n_scan
        if signed(lo) * signed(hi) < 0:
            x = float(optimize.brentq(signed, lo, hi, xtol=1e-14))
        else:
            res = optimize.minimize_scalar(
                worst, bounds=(lo, hi), method="bounded",
                options={"xatol": 1e-12},
            )
            x = float(res.x)
        if worst(x) > 1e-7:
            continue
        x_mod = x % 1.0
        if any(_circle_dist(x_mod, y) < 1e-6 for y in found):
            continue
        found.append(x_mod)
        s = 1 if (fn_a(x_mod, 0.5) if axis == "u" else fn_a(0.5, x_mod)) > 0 else -1
        cls = (0, s) if axis == "u" else (s, 0)
        point = (x_mod, 0.0) if axis == "u" else (0.0, x_mod)
        leaves.append(CompactLeaf(point, cls, 1.0))
    return leaves


def _return_map_leaves(
    F: Foliation2, axis: str, max_period: int = 8
) -> list[CompactLeaf]:
    try:
        R = return_map(F, Transversal(axis, 0.0))
    except TransversalError:
        return []
    leaves = []
    seen_orbit_points: list[tuple[int, float]] = []
    ts = np.linspace(0.0, 1.0, 1025)
    lifts = {1: R.lift(ts)}
    for q in range(2, max_period + 1):
        lifts[q] = R.lift(lifts[q - 1])
    for q in range(1, max_period + 1):
        gq = lifts[q] - ts
        for p in range(math.floor(gq.min()), math.ceil(gq.max()) + 1):
            h = gq - p
            if np.max(np.abs(h)) < 1e-9:
                # whole family of closed leaves
                cls = _cls_from_crossings(axis, R.direction, q, p)
                if not any(l.family and l.cls == cls for l in leaves):
                    leaves.append(CompactLeaf((0.0, 0.0), cls, float(q), family=True))
                break
            roots = []
            sgn = np.sign(h)
            for i in np.flatnonzero(sgn[:-1] * sgn[1:] < 0):
                r = optimize.brentq(
                    lambda t: R.iterate_lift(float(t), q) - t - p, ts[i], ts[i + 1],
                    xtol=1e-12,
                )
                roots.append(float(r))
            for r in roots:
                if any(
                    q % qq == 0 and _on_orbit(R, rr, qq, r)
                    for qq, rr in seen_orbit_points
                ):
                    continue
                seen_orbit_points.append((q, r))
                cls = _cls_from_crossings(axis, R.direction, q, p)
                point = (0.0, r % 1.0) if axis == "u" else (r % 1.0, 0.0)
                leaves.append(CompactLeaf(point, cls, float(q)))
    return leaves


def _circle_dist(a: float, b: float) -> float:
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def _on_orbit(R: ReturnMap, root: float, period: int, t: float) -> bool:
    x = root
    for _ in range(period):
        if _circle_dist(x, t) < 1e-6:
            return True
        x = R.lift(x)
    return False


def _cls_from_crossings(axis: str, sign: int, q: int, p: int) -> tuple[int, int]:
    if axis == "u":
        return _primitive(sign * q, sign * p)
    return _primitive(sign * p, sign * q)


def compact_leaves(F: Foliation2, max_period: int = 8) -> list[CompactLeaf]:
    """All compact leaves, from two detectors: axis-parallel circles where the
    transverse component vanishes, and periodic points of the return maps."""
    leaves = list(_axis_leaves(F, "u")) + list(_axis_leaves(F, "v"))
    if _crossing_sign(F, "u") is not None:
        # no vertical tangencies: every compact leaf crosses a u-transversal
        leaves += _return_map_leaves(F, "u", max_period)
    elif _crossing_sign(F, "v") is not None:
        leaves += _return_map_leaves(F, "v", max_period)
    uniq: list[CompactLeaf] = []
    for leaf in leaves:
        if leaf.family and any(m.family and m.cls == leaf.cls for m in uniq):
            continue
        uniq.append(leaf)
    return uniq


# ---------------------------------------------------------------------------
# Reeb annuli

@dataclass(frozen=True)
class ReebAnnulus:
    lower: CompactLeaf
    upper: CompactLeaf
    axis: str
    band: tuple[float, float]


def reeb_annuli(F: Foliation2, leaves: list[CompactLeaf] | None = None) -> list[ReebAnnulus]:
    """Adjacent pairs of oppositely oriented parallel compact leaves whose
    band interior carries no other compact leaf."""
    leaves = compact_leaves(F) if leaves is None else leaves
    if any(l.family for l in leaves):
        return []
    out = []
    for axis in ("u", "v"):
        want = (0, 1) if axis == "u" else (1, 0)
        axis_leaves = [
            l for l in leaves if (abs(l.cls[0]), abs(l.cls[1])) == (abs(want[0]), abs(want[1]))
        ]
        if len(axis_leaves) < 2:
            continue
        coord = 0 if axis == "u" else 1
        axis_leaves.sort(key=lambda l: l.point[coord])
        others = [l for l in leaves if l not in axis_leaves]
        m = len(axis_leaves)
        for i in range(m):
            a, b = axis_leaves[i], axis_leaves[(i + 1) % m]
            lo = a.point[coord]
            hi = b.point[coord] if i + 1 < m else b.point[coord] + 1.0
            if a.orientation() == b.orientation():
                continue
            inside = any(
                lo + 1e-9 < (l.point[coord] + (1.0 if l.point[coord] < lo else 0.0)) < hi - 1e-9
                for l in others
            )
            if inside:
                continue
            out.append(ReebAnnulus(a, b, axis, (lo, hi)))
    return out


# ---------------------------------------------------------------------------
# pairs of foliations

def _check_transverse_pair(F: Foliation2, G: Foliation2, n: int = 128, tol: float = 1e-9):
    # offset grid: isolated tangency circles (shared compact leaves) should
    # not fail the check, a tangency on a band should
    a = (np.arange(n) + 0.382) / n
    U, V = np.meshgrid(a, a, indexing="ij")
    det = F.field1()(U, V) * G.field2()(U, V) - F.field2()(U, V) * G.field1()(U, V)
    det = det + np.zeros_like(U)
    worst = float(np.min(np.abs(det)))
    if worst <= tol:
        raise FoliationError(
            f"foliations are tangent somewhere (min |det| = {worst:.2e})"
        )


@dataclass(frozen=True)
class ParallelLeavesVerdict:
    parallel: bool
    witnesses: tuple[tuple[CompactLeaf, CompactLeaf], ...]
    strict_orientation_differs: bool  # True when only sign-flipped matches exist

    @property
    def verdict(self) -> str:
        return "parallel" if self.parallel else "not_parallel"


def parallel_compact_leaves(F: Foliation2, G: Foliation2) -> ParallelLeavesVerdict:
    """Do F and G carry compact leaves in the same class, up to sign?"""
    _check_transverse_pair(F, G)
    lf, lg = compact_leaves(F), compact_leaves(G)
    witnesses = []
    exact = False
    for a in lf:
        for b in lg:
            if a.cls == b.cls:
                witnesses.append((a, b))
                exact = True
            elif a.cls == (-b.cls[0], -b.cls[1]):
                witnesses.append((a, b))
    return ParallelLeavesVerdict(
        bool(witnesses), tuple(witnesses), bool(witnesses) and not exact
    )


@dataclass(frozen=True)
class SlopeSearch:
    max_denominator: int = 10
    grid_n: int = 1024
    tol: float = 4e-3


def _candidate_directions(max_denominator: int) -> list[tuple[int, int]]:
    """(du, dv) direction vectors for slopes p/q with |p|, q <= bound,
    axes first; ordered by denominator so simple answers win."""
    dirs = [(1, 0), (0, 1)]
    seen = {Fraction(0, 1)}
    for q in range(1, max_denominator + 1):
        for p in range(-max_denominator, max_denominator + 1):
            s = Fraction(p, q)
            if s in seen or s.denominator != q:
                continue
            seen.add(s)
            dirs.append((s.denominator, s.numerator))
    return dirs


def cone_separation(
    F: Foliation2, G: Foliation2, search: SlopeSearch = SlopeSearch()
) -> tuple[tuple[int, int], tuple[int, int]] | None:
    """Search for two constant directions each transverse to both fields at
    every grid point; None when no candidate pair works at this bound.

    A candidate direction at angle a is transverse to a field direction at
    angle t iff |sin(a - t)| > tol, so the grid check reduces to an angular
    distance query against the sorted set of sampled field angles.
    """
    _check_transverse_pair(F, G)
    fine = np.arange(4 * search.grid_n) / (4 * search.grid_n)
    coarse = np.arange(max(search.grid_n // 4, 16)) / max(search.grid_n // 4, 16)
    angles = []
    for H in (F, G):
        for xs, ys in ((fine, coarse), (coarse, fine)):
            U, V = np.meshgrid(xs, ys, indexing="ij")
            v1 = H.field1()(U, V) + np.zeros_like(U)
            v2 = H.field2()(U, V) + np.zeros_like(U)
            angles.append(np.arctan2(v2, v1).ravel() % math.pi)
    thetas = np.sort(np.concatenate(angles))
    gap_margin = math.asin(min(1.0, search.tol))

    def clear(alpha: float) -> bool:
        alpha %= math.pi
        i = int(np.searchsorted(thetas, alpha))
        below = thetas[i - 1] if i > 0 else thetas[-1] - math.pi
        above = thetas[i] if i < len(thetas) else thetas[0] + math.pi
        return min(alpha - below, above - alpha) > gap_margin

    good = []
    for d in _candidate_directions(search.max_denominator):
        if clear(math.atan2(d[1], d[0])):
            good.append(d)
            if len(good) == 2:
                return good[0], good[1]
    return None
