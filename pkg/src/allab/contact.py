"""Deciding Anosov-Liouville-ness of 1-form pairs, perturbing pairs along a
transverse torus, extending positive scalings off the torus, and convex
combinations of standard pairs.

The two verdict routes are kept independent on purpose: ``al_check`` uses the
pointwise characterization through the contact volumes f_+, f_-, f_0, while
``liouville_direct_check`` builds e^s a_+ + e^-s a_- on the s-cylinder and
tests d(lambda)^2 directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as ex
from .expr import Expr, ZERO, ONE, compile_field, diff, substitute
from .geom import (
    DifferentialForm,
    Gluing3,
    SXYZ,
    TorusEmbedding,
    UV,
    XYZ,
    exterior_derivative,
    one_form,
    restrict,
    volume_form,
    wedge,
)


class ContactError(Exception):
    pass


class PerturbationError(ContactError):
    pass


@dataclass(frozen=True)
class FormPair:
    plus: DifferentialForm
    minus: DifferentialForm
    gluing: Gluing3 | None = None

    def __post_init__(self):
        if self.plus.coords != XYZ or self.minus.coords != XYZ:
            raise ContactError("pair forms must live over (x, y, z)")
        if self.plus.degree != 1 or self.minus.degree != 1:
            raise ContactError("pair forms must be 1-forms")

    def grid(self, n: int) -> np.ndarray:
        if self.gluing is not None:
            return self.gluing.sample_points(n)
        a = np.arange(n) / n
        A, B, C = np.meshgrid(a, a, a, indexing="ij")
        return np.stack([A.ravel(), B.ravel(), C.ravel()], axis=1)


@dataclass(frozen=True)
class QuantityStats:
    min: float
    max: float
    argmin: tuple[float, float, float]

    def to_dict(self):
        return {"min": self.min, "max": self.max, "argmin": list(self.argmin)}


@dataclass(frozen=True)
class ALReport:
    grid_n: int
    f_plus: QuantityStats
    f_minus: QuantityStats
    f_zero: QuantityStats
    discriminant: QuantityStats  # 4 f_+ f_- - f_0^2
    verdict: str  # anosov_liouville | liouville_only | fail

    def to_dict(self):
        return {
            "grid_n": self.grid_n,
            "f_plus": self.f_plus.to_dict(),
            "f_minus": self.f_minus.to_dict(),
            "f_zero": self.f_zero.to_dict(),
            "discriminant": self.discriminant.to_dict(),
            "verdict": self.verdict,
        }


def _stats(values: np.ndarray, pts: np.ndarray) -> QuantityStats:
    i = int(np.argmin(values))
    return QuantityStats(
        float(values[i]), float(np.max(values)), tuple(float(c) for c in pts[i])
    )


def _coeff_values(form3: DifferentialForm, pts: np.ndarray) -> np.ndarray:
    idx = (0, 1, 2)
    c = form3.coeff(idx)
    if c == ZERO:
        return np.zeros(len(pts))
    fn = compile_field(c, XYZ)
    return np.broadcast_to(
        fn(pts[:, 0], pts[:, 1], pts[:, 2]), (len(pts),)
    ).astype(float)


def al_check(
    pair: FormPair,
    vol: DifferentialForm | None = None,
    *,
    n: int = 48,
    points: np.ndarray | None = None,
    tol: float = 1e-9,
) -> ALReport:
    """Pointwise Anosov-Liouville test through the contact volumes.

    Writes a_+ ^ da_+ = f_+ dvol, a_- ^ da_- = -f_- dvol and
    d(a_- ^ a_+) = f_0 dvol, then aggregates extrema over the grid.
    """
    vol = vol if vol is not None else volume_form()
    pts = points if points is not None else pair.grid(n)
    vol_vals = _coeff_values(vol, pts)
    bad = np.abs(vol_vals) < 1e-300
    if np.any(bad):
        raise ContactError("volume form vanishes at a grid point")
    wp = wedge(pair.plus, exterior_derivative(pair.plus))
    wm = wedge(pair.minus, exterior_derivative(pair.minus))
    w0 = exterior_derivative(wedge(pair.minus, pair.plus))
    f_plus = _coeff_values(wp, pts) / vol_vals
    f_minus = -_coeff_values(wm, pts) / vol_vals
    f_zero = _coeff_values(w0, pts) / vol_vals
    disc = 4.0 * f_plus * f_minus - f_zero**2
    if f_plus.min() > tol and f_minus.min() > tol and disc.min() > tol:
        verdict = "anosov_liouville"
    elif (
        f_plus.min() > tol
        and f_minus.min() > tol
        and np.min(f_zero + 2.0 * np.sqrt(f_plus * f_minus)) > tol
    ):
        verdict = "liouville_only"
    else:
        verdict = "fail"
    return ALReport(
        grid_n=n if points is None else len(pts),
        f_plus=_stats(f_plus, pts),
        f_minus=_stats(f_minus, pts),
        f_zero=_stats(f_zero, pts),
        discriminant=_stats(disc, pts),
        verdict=verdict,
    )


# ---------------------------------------------------------------------------
# direct Liouville check on the s-cylinder

@dataclass(frozen=True)
class LiouvilleReport:
    min_value: float
    argmin: tuple[float, float, float, float]  # (s, x, y, z)
    passed: bool

    def to_dict(self):
        return {
            "min_value": self.min_value,
            "argmin": list(self.argmin),
            "passed": self.passed,
        }


def _lift(form3: DifferentialForm) -> DifferentialForm:
    shifted = {
        tuple(i + 1 for i in idx): c for idx, c in form3.coeffs.items()
    }
    return DifferentialForm(SXYZ, form3.degree, shifted)


def liouville_direct_check(
    pair: FormPair,
    s_samples: Sequence[float] = tuple(np.linspace(-3, 3, 13)),
    *,
    n: int = 16,
    points: np.ndarray | None = None,
    vol: DifferentialForm | None = None,
) -> LiouvilleReport:
    """Builds lambda = e^s a_+ + e^-s a_- and checks d(lambda)^2 > 0 against
    ds ^ dvol on the sampled cylinder."""
    vol = vol if vol is not None else volume_form()
    pts = points if points is not None else pair.grid(n)
    es = ex.func("exp", ex.var("s"))
    ems = ex.func("exp", ex.zneg(ex.var("s")))
    lam = _lift(pair.plus).scale(es) + _lift(pair.minus).scale(ems)
    dlam = exterior_derivative(lam)
    top = wedge(dlam, dlam)
    c = top.coeff((0, 1, 2, 3))
    fn = compile_field(c, SXYZ) if c != ZERO else None
    vol_vals = _coeff_values(vol, pts)
    best = math.inf
    arg = (0.0, 0.0, 0.0, 0.0)
    for s in s_samples:
        if fn is None:
            vals = np.zeros(len(pts))
        else:
            sa = np.full(len(pts), float(s))
            vals = np.broadcast_to(
                fn(sa, pts[:, 0], pts[:, 1], pts[:, 2]), (len(pts),)
            ).astype(float)
        vals = vals / vol_vals
        i = int(np.argmin(vals))
        if vals[i] < best:
            best = float(vals[i])
            arg = (float(s), *(float(q) for q in pts[i]))
    return LiouvilleReport(best, arg, best > 0.0)


# ---------------------------------------------------------------------------
# perturbation supported in a collar around a transverse torus

@dataclass(frozen=True)
class CollarProfile:
    halfwidth: float = 0.15
    c1_threshold: float = 1e-2


@dataclass(frozen=True)
class PerturbResult:
    pair: FormPair
    changed: bool
    c1_norm: float
    restriction_residual: float
    al_report: ALReport | None
    warnings: tuple[str, ...] = ()


def _curl_residual(beta: DifferentialForm, n: int = 64) -> float:
    d = exterior_derivative(beta)
    c = d.coeff((0, 1))
    if c == ZERO:
        return 0.0
    fn = compile_field(c, UV)
    a = np.arange(n) / n
    U, V = np.meshgrid(a, a, indexing="ij")
    return float(np.max(np.abs(fn(U, V))))


def _c1_norm(beta: DifferentialForm, n: int = 64) -> float:
    a = np.arange(n) / n
    U, V = np.meshgrid(a, a, indexing="ij")
    worst = 0.0
    for c in beta.coeffs.values():
        for e in (c, diff(c, "u"), diff(c, "v")):
            if e == ZERO:
                continue
            fn = compile_field(e, UV)
            worst = max(worst, float(np.max(np.abs(fn(U, V)))))
    return worst


def quintic_bump(t: Expr) -> Expr:
    """C^2 polynomial bump: (1 - t^2)^3 clamped to [-1, 1], 1 at t = 0."""
    return ex.pow_(ex.func("pos", ex.sub(ONE, ex.mul(t, t))), ex.const(3.0))


def perturb_pair(
    pair: FormPair,
    beta_target: DifferentialForm,
    sigma: TorusEmbedding,
    collar: CollarProfile = CollarProfile(),
    *,
    n_check: int = 24,
    closed_tol: float = 1e-9,
) -> PerturbResult:
    """Adds the same collar-supported 1-form to both members of the pair so
    that the restricted sum becomes exactly ``beta_target`` on the torus."""
    if beta_target.coords != UV or beta_target.degree != 1:
        raise ContactError("perturbation target must be a 1-form on the torus")
    res = _curl_residual(beta_target)
    if res >= closed_tol:
        raise PerturbationError(
            f"perturbation target is not closed (curl residual {res:.2e})"
        )
    restricted = restrict(pair.plus + pair.minus, sigma)
    half = ex.const(0.5)
    coeffs = {}
    for idx in ((0,), (1,)):
        cb, cr = beta_target.coeff(idx), restricted.coeff(idx)
        if cb == cr:
            continue
        coeffs[idx] = ex.zmul(half, ex.zsub(cb, cr))
    sigma_form = DifferentialForm(UV, 1, coeffs)
    if sigma_form.is_zero():
        return PerturbResult(pair, False, 0.0, 0.0, None)

    warnings = []
    c1 = _c1_norm(sigma_form)
    if c1 > collar.c1_threshold:
        warnings.append(
            f"perturbation C1 norm {c1:.3e} exceeds the smallness "
            f"threshold {collar.c1_threshold:.1e}"
        )

    e1, e2 = np.array(sigma.e1), np.array(sigma.e2)
    if abs(e1[2]) > 1e-14 or abs(e2[2]) > 1e-14:
        raise ContactError("collar extension implemented for z-level tori only")
    E = np.array([[e1[0], e2[0]], [e1[1], e2[1]]])
    Einv = np.linalg.inv(E)
    bx, by, bz = sigma.base
    u_of = ex.zadd(
        ex.zmul(ex.const(Einv[0, 0]), ex.sub(ex.var("x"), ex.const(bx))),
        ex.zmul(ex.const(Einv[0, 1]), ex.sub(ex.var("y"), ex.const(by))),
    )
    v_of = ex.zadd(
        ex.zmul(ex.const(Einv[1, 0]), ex.sub(ex.var("x"), ex.const(bx))),
        ex.zmul(ex.const(Einv[1, 1]), ex.sub(ex.var("y"), ex.const(by))),
    )
    su = substitute(sigma_form.coeff((0,)), {"u": u_of, "v": v_of})
    sv = substitute(sigma_form.coeff((1,)), {"u": u_of, "v": v_of})
    A = ex.zadd(ex.zmul(ex.const(Einv[0, 0]), su), ex.zmul(ex.const(Einv[1, 0]), sv))
    B = ex.zadd(ex.zmul(ex.const(Einv[0, 1]), su), ex.zmul(ex.const(Einv[1, 1]), sv))
    t = ex.div(ex.sub(ex.var("z"), ex.const(bz)), ex.const(collar.halfwidth))
    bump = quintic_bump(t)
    ambient = one_form(XYZ, ex.zmul(bump, A), ex.zmul(bump, B), ZERO)

    new_pair = FormPair(pair.plus + ambient, pair.minus + ambient, pair.gluing)
    # the restricted sum must hit the target exactly
    check = restrict(new_pair.plus + new_pair.minus, sigma) - beta_target
    resid = 0.0
    a = np.arange(32) / 32
    U, V = np.meshgrid(a, a, indexing="ij")
    for c in check.coeffs.values():
        fn = compile_field(c, UV)
        resid = max(resid, float(np.max(np.abs(fn(U, V)))))
    if resid > 1e-12:
        raise PerturbationError(
            f"restricted sum misses the target (residual {resid:.2e})"
        )
    report = al_check(new_pair, n=n_check)
    if report.verdict != "anosov_liouville":
        raise PerturbationError(
            "AL check failed after perturbation "
            f"(verdict {report.verdict}, min discriminant "
            f"{report.discriminant.min:.3e})"
        )
    return PerturbResult(new_pair, True, c1, resid, report, tuple(warnings))


# ---------------------------------------------------------------------------
# scaling extension off the torus (collar coordinates (u, v, z), X = d/dz)

def _smoothstep_integral(tau: Expr) -> Expr:
    """Antiderivative of the quintic smoothstep, clamped: 0 for tau <= 0,
    tau - 1/2 for tau >= 1, C^2 throughout."""
    c = ex.zsub(ex.func("pos", tau), ex.func("pos", ex.sub(tau, ONE)))
    c4 = ex.pow_(c, ex.const(4.0))
    poly = ex.mul(
        c4,
        ex.add(ex.sub(ex.mul(c, c), ex.mul(ex.const(3.0), c)), ex.const(2.5)),
    )
    return ex.zadd(poly, ex.func("pos", ex.sub(tau, ONE)))


@dataclass(frozen=True)
class ScalingExtension:
    """Positive scalar mu on the collar with mu = f on the torus, constant
    plateaus beyond +-delta, and d/dz log(mu) + r > 0 everywhere."""

    f: Expr
    r: Expr
    delta: float
    eps: float
    c_lo: float
    c_hi: float
    mu: Expr  # in variables (u, v, z)
    dz_log_mu: Expr

    def mu_fn(self):
        return compile_field(self.mu, ("u", "v", "z"))

    def margin_fn(self):
        total = ex.zadd(self.dz_log_mu, self.r)
        return compile_field(total, ("u", "v", "z"))

    def positivity_margin(self, n_uv: int = 24, n_z: int = 64) -> float:
        a = np.arange(n_uv) / n_uv
        zs = np.linspace(-2 * self.delta, 2 * self.delta, n_z)
        U, V, Z = np.meshgrid(a, a, zs, indexing="ij")
        return float(np.min(self.margin_fn()(U, V, Z)))


def extend_scaling(
    f: Expr,
    r: Expr,
    delta: float,
    eps: float,
    c: float,
    C: float,
    *,
    grid_n: int = 48,
) -> ScalingExtension:
    """Extends a positive scaling f on the torus to the collar so that the
    logarithmic derivative along the flow stays above -r.

    Inner band: mu(p, z) = f(p) exp((1 - r(p)) z).  Outside, log-linear
    bridges reach the plateau constants C (above) and c (below); the slope
    kinks are replaced by quintic blends of width (delta - eps)/4 placed
    inside the bridges, so the inner formula and the plateaus are exact.
    """
    if not 0 < eps < delta:
        raise ContactError("collar radii must satisfy 0 < eps < delta")
    if c <= 0 or C <= 0:
        raise ContactError("plateau constants must be positive")
    a = np.arange(grid_n) / grid_n
    U, V = np.meshgrid(a, a, indexing="ij")
    f_vals = compile_field(f, UV)(U, V) + np.zeros_like(U)
    r_vals = compile_field(r, UV)(U, V) + np.zeros_like(U)
    if f_vals.min() <= 0:
        raise ContactError("scaling f must be positive on the torus")
    if r_vals.min() <= 0:
        raise ContactError("expansion rate r must be positive for the plateaus")
    lam_hi = f_vals * np.exp((1.0 - r_vals) * eps)
    lam_lo = f_vals * np.exp(-(1.0 - r_vals) * eps)
    if C <= lam_hi.max():
        raise ContactError(
            f"upper plateau C = {C} must exceed max mu(., eps) = {lam_hi.max():.6g}"
        )
    if c >= lam_lo.min():
        raise ContactError(
            f"lower plateau c = {c} must be below min mu(., -eps) = {lam_lo.min():.6g}"
        )

    w = (delta - eps) / 4.0
    s_in = ex.sub(ONE, r)
    log_f = ex.func("log", f)
    # the quintic blends shorten the usable bridge: their linear asymptotes
    # meet at the effective radii eps + w/2 and delta - w/2, so the slopes
    # below make the plateaus land exactly on log C and log c
    eps_eff = eps + 0.5 * w
    denom = ex.const(delta - eps - w)
    s_hi = ex.div(
        ex.sub(
            ex.const(math.log(C)), ex.add(log_f, ex.mul(s_in, ex.const(eps_eff)))
        ),
        denom,
    )
    s_lo = ex.div(
        ex.sub(
            ex.sub(log_f, ex.mul(s_in, ex.const(eps_eff))), ex.const(math.log(c))
        ),
        denom,
    )
    s_hi_vals = compile_field(s_hi, UV)(U, V) + np.zeros_like(U)
    s_lo_vals = compile_field(s_lo, UV)(U, V) + np.zeros_like(U)
    if s_hi_vals.min() <= 0 or s_lo_vals.min() <= 0:
        raise ContactError(
            "plateau constants too close to the inner band for this collar "
            f"(bridge slopes {s_lo_vals.min():.4g}, {s_hi_vals.min():.4g})"
        )
    # slope-change junctions in increasing z: blend intervals sit inside the
    # bridges so the plateaus and the inner band stay exact
    junctions = [
        (-delta, s_lo),                     # 0 -> s_lo
        (-eps - w, ex.sub(s_in, s_lo)),     # s_lo -> 1 - r
        (eps, ex.sub(s_hi, s_in)),          # 1 - r -> s_hi
        (delta - w, ex.zneg(s_hi)),         # s_hi -> 0
    ]
    z = ex.var("z")
    S = ZERO
    for b, ds in junctions:
        tau_z = ex.div(ex.sub(z, ex.const(b)), ex.const(w))
        tau_0 = ex.div(ex.sub(ex.const(0.0), ex.const(b)), ex.const(w))
        ramp = ex.zsub(_smoothstep_integral(tau_z), _smoothstep_integral(tau_0))
        S = ex.zadd(S, ex.zmul(ds, ex.zmul(ex.const(w), ramp)))
    mu = ex.zmul(f, ex.func("exp", S))
    extension = ScalingExtension(
        f=f,
        r=r,
        delta=delta,
        eps=eps,
        c_lo=c,
        c_hi=C,
        mu=mu,
        dz_log_mu=diff(S, "z"),
    )
    margin = extension.positivity_margin()
    if margin <= 0:
        raise ContactError(f"positivity margin {margin:.3e} not positive")
    return extension


# ---------------------------------------------------------------------------
# convex combinations of standard pairs

def convex_combination(
    p: FormPair, q: FormPair, t: float, *, n: int = 24
) -> tuple[FormPair, ALReport]:
    if not 0.0 <= t <= 1.0:
        raise ContactError("t must lie in [0, 1]")
    if t == 0.0:
        return p, al_check(p, n=n)
    if t == 1.0:
        return q, al_check(q, n=n)
    s, u = ex.const(1.0 - t), ex.const(t)
    combo = FormPair(
        p.plus.scale(s) + q.plus.scale(u),
        p.minus.scale(s) + q.minus.scale(u),
        p.gluing,
    )
    return combo, al_check(combo, n=n)
