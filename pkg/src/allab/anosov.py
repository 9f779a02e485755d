"""Suspension flow models over hyperbolic toral automorphisms: the mapping
torus geometry, the defining and standard 1-form pairs, the weak foliations
they induce on torus fibers, and a finite-time power-iteration estimator of
the hyperbolic splitting.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .expr import Expr, ZERO, compile_field, parse_expr
from .geom import (
    DifferentialForm,
    Gluing3,
    TorusEmbedding,
    VectorField3,
    XYZ,
    exterior_derivative,
    fiber_embedding,
    lie_derivative,
    one_form,
    restrict,
)
from .contact import FormPair, al_check
from .foliation import Foliation2, _check_transverse_pair


class ModelError(Exception):
    pass


@dataclass(frozen=True)
class FlowModel:
    name: str
    gluing: Gluing3
    X: VectorField3
    alpha_u: DifferentialForm
    alpha_s: DifferentialForm
    r_u: Expr
    r_s: Expr
    fiber_levels: tuple[float, ...] = (0.0,)

    @property
    def alpha_plus(self) -> DifferentialForm:
        return self.alpha_u - self.alpha_s

    @property
    def alpha_minus(self) -> DifferentialForm:
        return self.alpha_u + self.alpha_s

    def standard_pair(self, C: float = 1.0) -> FormPair:
        plus, minus = self.alpha_plus, self.alpha_minus
        if C != 1.0:
            plus = plus.scale(ex.const(C))
            minus = minus.scale(ex.const(1.0 / C))
        return FormPair(plus, minus, self.gluing)

    def fiber(self, z: float = 0.0) -> TorusEmbedding:
        return fiber_embedding(self.gluing, z)

    def validate(self, n_points: int = 100, seed: int = 7, tol: float = 1e-9):
        """Defining-pair identities: L_X a = r a for both forms, expansion
        rates of the right signs, and the standard pair passing the AL test."""
        rng = random.Random(seed)
        checks = [
            (self.alpha_u, self.r_u),
            (self.alpha_s, self.r_s),
        ]
        for alpha, r in checks:
            resid = lie_derivative(self.X, alpha) - alpha.scale(r)
            for _ in range(n_points):
                p = {
                    "x": rng.uniform(-1, 1),
                    "y": rng.uniform(-1, 1),
                    "z": rng.uniform(-0.5 * self.gluing.nu, 0.5 * self.gluing.nu),
                }
                worst = max(
                    (abs(v) for v in resid.evaluate(p).values()), default=0.0
                )
                if worst > tol:
                    raise ModelError(
                        f"defining-pair identity fails at {p} (residual {worst:.2e})"
                    )
        pts = self.gluing.sample_points(12)
        for r, positive in ((self.r_u, True), (self.r_s, False)):
            vals = compile_field(r, XYZ)(pts[:, 0], pts[:, 1], pts[:, 2])
            vals = vals + np.zeros(len(pts))
            ok = vals.min() > 0 if positive else vals.max() < 0
            if not ok:
                raise ModelError("expansion rates have the wrong sign")
        report = al_check(self.standard_pair(), n=12)
        if report.verdict != "anosov_liouville":
            raise ModelError(f"standard pair fails the AL test: {report.verdict}")
        return True


def _eigen_data(A: np.ndarray):
    tr = A[0, 0] + A[1, 1]
    disc = tr * tr - 4.0
    lam_u = (tr + math.sqrt(disc)) / 2.0
    lam_s = (tr - math.sqrt(disc)) / 2.0

    def unit_eigvec(lam):
        # (A - lam) v = 0; pick the better-conditioned row
        r1 = (A[0, 0] - lam, A[0, 1])
        r2 = (A[1, 0], A[1, 1] - lam)
        r = r1 if math.hypot(*r1) > math.hypot(*r2) else r2
        v = np.array([-r[1], r[0]])
        v = v / np.linalg.norm(v)
        if v[0] < 0 or (v[0] == 0 and v[1] < 0):
            v = -v
        return v

    return lam_u, lam_s, unit_eigvec(lam_u), unit_eigvec(lam_s)


def suspension_model(A) -> FlowModel:
    """Mapping-torus flow of a hyperbolic unimodular integer matrix, with
    the explicit exponentially scaled defining pair.

    Chart: (x, y) are expanding/contracting coordinates, the deck map is
    (x, y, z) -> (e^nu x, e^-nu y, z - nu), and the spatial lattice is
    P(Z^2) where P conjugates the diagonal deck action back to A.
    """
    A = np.array(A, dtype=float)
    if A.shape != (2, 2) or np.max(np.abs(A - np.round(A))) > 1e-12:
        raise ModelError("matrix must be an integer 2x2 matrix")
    if abs(np.linalg.det(A) - 1.0) > 1e-12:
        raise ModelError("matrix must be unimodular (det 1)")
    tr = A[0, 0] + A[1, 1]
    if abs(tr) <= 2:
        raise ModelError(f"matrix is not hyperbolic (trace {tr:g})")
    if tr < 0:
        raise ModelError(
            "negative-trace suspensions reverse orientation and are not built in"
        )
    lam_u, lam_s, v_u, v_s = _eigen_data(A)
    nu = math.log(lam_u)
    W = np.column_stack([v_u, v_s])
    detW = float(np.linalg.det(W))
    t1 = math.sqrt(abs(detW))
    t2 = detW / t1
    # P A = D P with D = diag(e^nu, e^-nu), det P = 1
    P = np.diag([t1, t2]) @ np.linalg.inv(W)
    D = np.diag([lam_u, lam_s])
    gluing = Gluing3(
        P=tuple(map(tuple, P)), D=tuple(map(tuple, D)), nu=nu, mapping_torus=True
    )
    gluing.validate()
    alpha_u = one_form(XYZ, parse_expr("exp(z)"), ZERO, ZERO)
    alpha_s = one_form(XYZ, ZERO, ex.neg(parse_expr("exp(-z)")), ZERO)
    return FlowModel(
        name="suspension",
        gluing=gluing,
        X=VectorField3((ZERO, ZERO, ex.ONE)),
        alpha_u=alpha_u,
        alpha_s=alpha_s,
        r_u=ex.ONE,
        r_s=ex.const(-1.0),
    )


def weak_foliations_on_torus(
    m: FlowModel, sigma: TorusEmbedding
) -> tuple[Foliation2, Foliation2]:
    """Foliations cut on the torus by the weak-stable (ker alpha_u) and
    weak-unstable (ker alpha_s) plane fields, in (u, v) chart coordinates."""
    sigma.check_transverse(m.X)
    F_ws = Foliation2.from_form(restrict(m.alpha_u, sigma), name="weak-stable")
    F_wu = Foliation2.from_form(restrict(m.alpha_s, sigma), name="weak-unstable")
    try:
        _check_transverse_pair(F_ws, F_wu)
    except Exception as e:
        raise ModelError(f"induced foliations are not transverse: {e}") from e
    return F_ws, F_wu


# ---------------------------------------------------------------------------
# finite-time splitting estimation

@dataclass(frozen=True)
class SplittingEstimate:
    base_point: tuple[float, float, float]
    T: float
    direction: tuple[float, float]  # unit vector in fiber chart coordinates
    expansion_factors: tuple[float, ...]
    iterations: int
    converged: bool

    @property
    def slope(self) -> float:
        return self.direction[1] / self.direction[0]

    @property
    def expansion_factor(self) -> float:
        return self.expansion_factors[-1]


def estimate_splitting(
    m: FlowModel,
    p: tuple[float, float, float] = (0.0, 0.0, 0.0),
    T: float | None = None,
    *,
    reverse: bool = False,
    tol: float = 1e-12,
    max_iterations: int = 100,
) -> SplittingEstimate:
    """Power iteration of the projectivized time-T fiber derivative, in the
    lattice (chart) coordinates of the fiber; forward time converges to the
    unstable direction, reversed time to the stable one."""
    T = m.gluing.nu if T is None else float(T)
    if T <= 0:
        raise ModelError("time horizon must be positive")
    P = m.gluing.P_mat
    M = np.linalg.inv(P) @ np.diag([math.exp(T), math.exp(-T)]) @ P
    if reverse:
        M = np.linalg.inv(M)
    d = np.array([1.0, 1.0]) / math.sqrt(2.0)
    factors = []
    converged = False
    k = 0
    for k in range(1, max_iterations + 1):
        w = M @ d
        factors.append(float(np.linalg.norm(w)))
        w = w / np.linalg.norm(w)
        if w @ d < 0:
            w = -w
        if np.linalg.norm(w - d) < tol:
            d = w
            converged = True
            break
        d = w
    if not converged:
        raise ModelError(
            f"splitting estimate did not converge; last directions "
            f"{tuple(d)} -> {tuple(w)}"
        )
    return SplittingEstimate(
        tuple(float(c) for c in p),
        T,
        (float(d[0]), float(d[1])),
        tuple(factors),
        k,
        converged,
    )


def chart_to_ambient(m: FlowModel, direction) -> np.ndarray:
    """Fiber chart direction (du, dv) as an ambient (dx, dy, dz) vector."""
    P = m.gluing.P_mat
    w = P @ np.asarray(direction, dtype=float)
    return np.array([w[0], w[1], 0.0])


# ---------------------------------------------------------------------------
# Reeb fields

def reeb_field_numeric(alpha: DifferentialForm):
    """Pointwise Reeb field of a contact form: the solution of
    i_R d(alpha) = 0, alpha(R) = 1, via least squares at each point."""
    da = exterior_derivative(alpha)
    a_fns = [compile_field(alpha.coeff((i,)), XYZ) for i in range(3)]
    da_fns = {
        idx: compile_field(da.coeff(idx), XYZ) for idx in ((0, 1), (0, 2), (1, 2))
    }

    def at(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty((len(points), 3))
        for i, (x, y, z) in enumerate(points):
            c01 = float(da_fns[(0, 1)](x, y, z))
            c02 = float(da_fns[(0, 2)](x, y, z))
            c12 = float(da_fns[(1, 2)](x, y, z))
            # rows of i_R da in the basis dx, dy, dz, then the alpha row
            mat = np.array(
                [
                    [0.0, c01, c02],
                    [-c01, 0.0, c12],
                    [-c02, -c12, 0.0],
                    [
                        float(a_fns[0](x, y, z)),
                        float(a_fns[1](x, y, z)),
                        float(a_fns[2](x, y, z)),
                    ],
                ]
            )
            rhs = np.array([0.0, 0.0, 0.0, 1.0])
            sol, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
            out[i] = sol
        return out

    return at
