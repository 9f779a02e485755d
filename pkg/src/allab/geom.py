"""Glued 3-charts, differential forms with symbolic coefficients, exact
exterior calculus, and restriction of forms to embedded tori.

Forms live over an ordered coordinate tuple such as ``("x","y","z")``, the
extended ``("s","x","y","z")`` used for Liouville checks, or ``("u","v")``
for forms restricted to a torus.  Coefficients are indexed by strictly
increasing multi-indices over the basis covectors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import expr as ex
from .expr import Expr, ZERO, compile_field, diff, substitute, zadd, zmul, zneg, zsub

XYZ = ("x", "y", "z")
SXYZ = ("s", "x", "y", "z")
UV = ("u", "v")


class GeomError(Exception):
    pass


class DegreeError(GeomError):
    pass


def _wedge_index(i: Sequence[int], j: Sequence[int]):
    """Merge two strictly increasing multi-indices; returns (sign, merged)
    or None when an index repeats."""
    merged = list(i) + list(j)
    if len(set(merged)) != len(merged):
        return None
    sign = 1
    # counting inversions of the concatenation gives the sorting sign
    for a in range(len(merged)):
        for b in range(a + 1, len(merged)):
            if merged[a] > merged[b]:
                sign = -sign
    return sign, tuple(sorted(merged))


@dataclass(frozen=True)
class DifferentialForm:
    coords: tuple[str, ...]
    degree: int
    coeffs: Mapping[tuple[int, ...], Expr] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.coords)
        if not 0 <= self.degree <= n:
            raise DegreeError(f"degree {self.degree} out of range for dim {n}")
        cleaned = {}
        for idx, c in self.coeffs.items():
            idx = tuple(idx)
            if len(idx) != self.degree or list(idx) != sorted(set(idx)):
                raise GeomError(f"bad multi-index {idx} for degree {self.degree}")
            if c != ZERO:
                cleaned[idx] = c
        object.__setattr__(self, "coeffs", cleaned)

    def coeff(self, idx: tuple[int, ...]) -> Expr:
        return self.coeffs.get(tuple(idx), ZERO)

    def __add__(self, other: "DifferentialForm") -> "DifferentialForm":
        self._check_compatible(other)
        out = dict(self.coeffs)
        for idx, c in other.coeffs.items():
            out[idx] = zadd(out.get(idx, ZERO), c)
        return DifferentialForm(self.coords, self.degree, out)

    def __sub__(self, other: "DifferentialForm") -> "DifferentialForm":
        self._check_compatible(other)
        out = dict(self.coeffs)
        for idx, c in other.coeffs.items():
            out[idx] = zsub(out.get(idx, ZERO), c)
        return DifferentialForm(self.coords, self.degree, out)

    def __neg__(self) -> "DifferentialForm":
        return DifferentialForm(
            self.coords, self.degree, {i: zneg(c) for i, c in self.coeffs.items()}
        )

    def scale(self, factor: Expr | float) -> "DifferentialForm":
        if not isinstance(factor, (ex.Const, ex.Var, ex.BinOp, ex.Func)):
            factor = ex.const(factor)
        return DifferentialForm(
            self.coords, self.degree, {i: zmul(factor, c) for i, c in self.coeffs.items()}
        )

    def is_zero(self) -> bool:
        return not self.coeffs

    def _check_compatible(self, other: "DifferentialForm"):
        if self.coords != other.coords or self.degree != other.degree:
            raise GeomError("form mismatch: differing coords or degree")

    def evaluate(self, point: Mapping[str, float]) -> dict[tuple[int, ...], float]:
        return {i: ex.evaluate(c, point) for i, c in self.coeffs.items()}

    def compiled(self) -> dict[tuple[int, ...], callable]:
        return {i: compile_field(c, self.coords) for i, c in self.coeffs.items()}


def form(coords: tuple[str, ...], degree: int,
         terms: Mapping[tuple[int, ...], Expr]) -> DifferentialForm:
    return DifferentialForm(coords, degree, dict(terms))


def one_form(coords: tuple[str, ...], *coeffs: Expr) -> DifferentialForm:
    if len(coeffs) != len(coords):
        raise GeomError("need one coefficient per covector")
    return DifferentialForm(coords, 1, {(i,): c for i, c in enumerate(coeffs)})


def volume_form(coords: tuple[str, ...] = XYZ) -> DifferentialForm:
    n = len(coords)
    return DifferentialForm(coords, n, {tuple(range(n)): ex.ONE})


def exterior_derivative(omega: DifferentialForm) -> DifferentialForm:
    if omega.degree >= len(omega.coords):
        raise DegreeError("cannot raise degree beyond the dimension")
    out: dict[tuple[int, ...], Expr] = {}
    for idx, c in omega.coeffs.items():
        for j, name in enumerate(omega.coords):
            dc = diff(c, name)
            if dc == ZERO:
                continue
            res = _wedge_index((j,), idx)
            if res is None:
                continue
            sign, merged = res
            term = dc if sign > 0 else zneg(dc)
            out[merged] = zadd(out.get(merged, ZERO), term)
    return DifferentialForm(omega.coords, omega.degree + 1, out)


def wedge(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    if a.coords != b.coords:
        raise GeomError("wedge of forms over different coordinates")
    if a.degree + b.degree > len(a.coords):
        raise DegreeError("wedge degree exceeds the dimension")
    out: dict[tuple[int, ...], Expr] = {}
    for ia, ca in a.coeffs.items():
        for ib, cb in b.coeffs.items():
            res = _wedge_index(ia, ib)
            if res is None:
                continue
            sign, merged = res
            term = zmul(ca, cb)
            if sign < 0:
                term = zneg(term)
            out[merged] = zadd(out.get(merged, ZERO), term)
    return DifferentialForm(a.coords, a.degree + b.degree, out)


@dataclass(frozen=True)
class VectorField3:
    coeffs: tuple[Expr, Expr, Expr]
    coords: tuple[str, str, str] = XYZ

    def evaluate(self, point: Mapping[str, float]) -> np.ndarray:
        return np.array([ex.evaluate(c, point) for c in self.coeffs])


def interior_product(X: VectorField3, omega: DifferentialForm) -> DifferentialForm:
    if omega.coords != X.coords:
        raise GeomError("vector field and form live over different coordinates")
    if omega.degree == 0:
        raise DegreeError("interior product of a 0-form")
    out: dict[tuple[int, ...], Expr] = {}
    for idx, c in omega.coeffs.items():
        for pos, i in enumerate(idx):
            rest = idx[:pos] + idx[pos + 1:]
            term = zmul(X.coeffs[i], c)
            if pos % 2 == 1:
                term = zneg(term)
            out[rest] = zadd(out.get(rest, ZERO), term)
    return DifferentialForm(omega.coords, omega.degree - 1, out)


def lie_derivative(X: VectorField3, alpha: DifferentialForm) -> DifferentialForm:
    """Cartan formula: L_X = i_X d + d i_X."""
    part1 = interior_product(X, exterior_derivative(alpha))
    if alpha.degree == 0:
        return part1
    part2 = exterior_derivative(interior_product(X, alpha))
    return part1 + part2


# ---------------------------------------------------------------------------
# gluing data

@dataclass(frozen=True)
class Gluing3:
    """Fundamental domain data: lattice basis P on the (x, y) chart
    directions and a deck transformation (x, y, z) ~ (D(x, y), z - nu)."""

    P: tuple[tuple[float, float], tuple[float, float]]
    D: tuple[tuple[float, float], tuple[float, float]]
    nu: float
    mapping_torus: bool = True

    @property
    def P_mat(self) -> np.ndarray:
        return np.array(self.P, dtype=float)

    @property
    def D_mat(self) -> np.ndarray:
        return np.array(self.D, dtype=float)

    def validate(self):
        P, D = self.P_mat, self.D_mat
        if abs(np.linalg.det(P) - 1.0) > 1e-12:
            raise GeomError(f"lattice basis determinant {np.linalg.det(P)} != 1")
        conj = np.linalg.solve(P, D @ P)
        if np.max(np.abs(conj - np.round(conj))) > 1e-9:
            raise GeomError("deck map does not preserve the lattice")
        if self.nu <= 0:
            raise GeomError("deck shift nu must be positive")

    def lattice_vectors(self) -> list[np.ndarray]:
        P = self.P_mat
        return [P[:, 0].copy(), P[:, 1].copy()]

    def sample_points(self, n: int, z_lo: float | None = None) -> np.ndarray:
        """Row-major grid of chart points covering one fundamental domain."""
        a = np.arange(n) / n
        A, B, C = np.meshgrid(a, a, a, indexing="ij")
        P = self.P_mat
        xs = P[0, 0] * A + P[0, 1] * B
        ys = P[1, 0] * A + P[1, 1] * B
        lo = -0.5 * self.nu if z_lo is None else z_lo
        zs = lo + C * self.nu
        return np.stack(
            [xs.ravel(), ys.ravel(), zs.ravel()], axis=1
        )


def torus3(P=((1.0, 0.0), (0.0, 1.0)), nu: float = 1.0) -> Gluing3:
    return Gluing3(P=P, D=((1.0, 0.0), (0.0, 1.0)), nu=nu, mapping_torus=False)


@dataclass(frozen=True)
class TorusEmbedding:
    """Affine 2-torus in the chart: base + u*e1 + v*e2, (u, v) in [0,1)^2."""

    base: tuple[float, float, float]
    e1: tuple[float, float, float]
    e2: tuple[float, float, float]
    gluing: Gluing3 | None = None

    @property
    def frame(self) -> np.ndarray:
        return np.array([self.e1, self.e2], dtype=float).T  # 3x2

    def validate(self):
        if np.linalg.matrix_rank(self.frame, tol=1e-12) < 2:
            raise GeomError("embedding directions are linearly dependent")

    def chart_point(self, u: float, v: float) -> np.ndarray:
        return np.array(self.base) + u * np.array(self.e1) + v * np.array(self.e2)

    def check_transverse(self, X: VectorField3, n: int = 16, tol: float = 1e-9):
        normal = np.cross(self.e1, self.e2)
        normal = normal / np.linalg.norm(normal)
        worst = np.inf
        for u in np.arange(n) / n:
            for v in np.arange(n) / n:
                p = self.chart_point(u, v)
                Xp = X.evaluate(dict(zip(XYZ, p)))
                worst = min(worst, abs(float(normal @ Xp)))
        if worst <= tol:
            raise GeomError(f"flow not transverse to the torus (margin {worst:.2e})")
        return worst


def fiber_embedding(gluing: Gluing3, z: float = 0.0) -> TorusEmbedding:
    """The torus fiber {z = const}; its directions are the lattice basis."""
    t1, t2 = gluing.lattice_vectors()
    return TorusEmbedding(
        base=(0.0, 0.0, float(z)),
        e1=(float(t1[0]), float(t1[1]), 0.0),
        e2=(float(t2[0]), float(t2[1]), 0.0),
        gluing=gluing,
    )


def restrict(omega: DifferentialForm, sigma: TorusEmbedding) -> DifferentialForm:
    """Pullback under the affine embedding; output lives in (u, v)."""
    if omega.coords != XYZ:
        raise GeomError("restrict expects a form over (x, y, z)")
    if omega.degree > 2:
        raise DegreeError("cannot restrict a form of degree > 2 to a surface")
    base = np.array(sigma.base, dtype=float)
    E = sigma.frame  # 3x2, columns d/du and d/dv
    mapping = {
        name: ex.zadd(
            ex.zadd(ex.const(base[k]), ex.zmul(ex.const(E[k, 0]), ex.var("u"))),
            ex.zmul(ex.const(E[k, 1]), ex.var("v")),
        )
        for k, name in enumerate(XYZ)
    }
    # pullback of the covector dx_k
    cov = [
        one_form(UV, ex.const(E[k, 0]), ex.const(E[k, 1]))
        for k in range(3)
    ]
    if omega.degree == 0:
        return DifferentialForm(UV, 0, {(): substitute(omega.coeff(()), mapping)})
    out = DifferentialForm(UV, omega.degree, {})
    for idx, c in omega.coeffs.items():
        pulled_c = substitute(c, mapping)
        basis = None
        for k in idx:
            basis = cov[k] if basis is None else wedge(basis, cov[k])
        out = out + basis.scale(pulled_c)
    return out


# ---------------------------------------------------------------------------
# periodicity checking

@dataclass(frozen=True)
class PeriodicityReport:
    max_residual: float
    worst_point: tuple[float, float, float]
    worst_transform: str
    passed: bool


def _pullback_residual(omega, pts, offset, jac, subs, fns):
    """max |psi* omega - omega| coefficient-wise over the sample points."""
    n = len(omega.coords)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    tx = subs[0][0] * x + subs[0][1] * y + offset[0]
    ty = subs[1][0] * x + subs[1][1] * y + offset[1]
    tz = z + offset[2]
    worst = 0.0
    worst_i = 0
    zeros = np.zeros_like(x)
    for idx in itertools.combinations(range(n), omega.degree):
        here = fns[idx](x, y, z) if idx in fns else zeros
        pulled = np.zeros_like(zeros)
        for jdx, fn in fns.items():
            minor = jac[np.ix_(jdx, idx)]
            det = float(np.linalg.det(minor)) if len(idx) else 1.0
            if abs(det) < 1e-15:
                continue
            pulled = pulled + det * fn(tx, ty, tz)
        res = np.abs(pulled - here)
        k = int(np.argmax(res))
        if res[k] > worst:
            worst = float(res[k])
            worst_i = k
    return worst, tuple(float(c) for c in pts[worst_i])


def check_periodicity(
    omega: DifferentialForm, gluing: Gluing3, n: int = 12, tol: float = 1e-9
) -> PeriodicityReport:
    """Grid check of invariance under the lattice translations and, for a
    mapping torus, the deck transformation."""
    if n <= 0:
        raise GeomError("empty sampling grid")
    pts = gluing.sample_points(n, z_lo=0.0)
    fns = {idx: compile_field(c, XYZ) for idx, c in omega.coeffs.items()}
    ident = np.eye(3)
    transforms = []
    for i, t in enumerate(gluing.lattice_vectors()):
        transforms.append(
            (f"lattice_{i}", (t[0], t[1], 0.0), ident, ((1.0, 0.0), (0.0, 1.0)))
        )
    if gluing.mapping_torus:
        D = gluing.D_mat
        jac = np.eye(3)
        jac[:2, :2] = D
        transforms.append(("deck", (0.0, 0.0, -gluing.nu), jac, tuple(map(tuple, D))))
    else:
        transforms.append(
            ("z_period", (0.0, 0.0, gluing.nu), ident, ((1.0, 0.0), (0.0, 1.0)))
        )
    worst = 0.0
    worst_pt = (0.0, 0.0, 0.0)
    worst_name = ""
    for name, offset, jac, subs in transforms:
        res, pt = _pullback_residual(omega, pts, offset, jac, subs, fns)
        if res >= worst:
            worst, worst_pt, worst_name = res, pt, name
    return PeriodicityReport(worst, worst_pt, worst_name, worst < tol)
