"""Deciding and constructing closed restricted combinations on a transverse
torus: the loop-winding obstruction, a grid solver for positive scalings
making f a - g b closed, and the end-to-end certificate pipeline that
rebuilds a form pair whose restricted sum is exactly closed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from . import expr as ex
from .expr import Const, Expr, compile_field
from .anosov import FlowModel, weak_foliations_on_torus
from .contact import (
    ALReport,
    FormPair,
    PerturbationError,
    _curl_residual,
    al_check,
    extend_scaling,
    perturb_pair,
)
from .foliation import (
    Foliation2,
    SlopeSearch,
    _check_transverse_pair,
    cone_separation,
    parallel_compact_leaves,
    winding,
)
from .geom import (
    DifferentialForm,
    TorusEmbedding,
    UV,
    XYZ,
    restrict,
)


class PreLagError(Exception):
    pass


# ---------------------------------------------------------------------------
# loop-winding obstruction

@dataclass(frozen=True)
class ObstructionResult:
    verdict: str  # obstructed | passes_obstruction
    winding_ws: tuple[int, int]
    winding_wu: tuple[int, int]

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "winding_ws": list(self.winding_ws),
            "winding_wu": list(self.winding_wu),
        }


def obstruction_test(F_ws: Foliation2, F_wu: Foliation2) -> ObstructionResult:
    """A closed restricted combination forces both direction fields to have
    trivial loop winding; the two transverse fields always agree on it."""
    _check_transverse_pair(F_ws, F_wu)
    w_ws = winding(F_ws)
    w_wu = winding(F_wu)
    if w_ws != w_wu:
        raise PreLagError(
            f"transverse foliations report different windings {w_ws} vs {w_wu}"
        )
    verdict = "passes_obstruction" if w_ws == (0, 0) else "obstructed"
    return ObstructionResult(verdict, w_ws, w_wu)


# ---------------------------------------------------------------------------
# grid solver for the closedness objective

def _wavenumbers(n: int) -> np.ndarray:
    k = np.fft.fftfreq(n, 1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0  # drop the unsigned Nyquist mode from derivatives
    return 2.0 * np.pi * k


def _du(F: np.ndarray, k: np.ndarray) -> np.ndarray:
    return np.real(np.fft.ifft(1j * k[:, None] * np.fft.fft(F, axis=0), axis=0))


def _dv(F: np.ndarray, k: np.ndarray) -> np.ndarray:
    return np.real(np.fft.ifft(1j * k[None, :] * np.fft.fft(F, axis=1), axis=1))


def _sample_form(a: DifferentialForm, n: int):
    if a.coords != UV or a.degree != 1:
        raise PreLagError("solver inputs must be 1-forms on (u, v)")
    t = np.arange(n) / n
    U, V = np.meshgrid(t, t, indexing="ij")
    zeros = np.zeros_like(U)
    return (
        compile_field(a.coeff((0,)), UV)(U, V) + zeros,
        compile_field(a.coeff((1,)), UV)(U, V) + zeros,
    )


def closedness_objective(a: DifferentialForm, b: DifferentialForm, n: int = 64):
    """Mean-square curl of e^phi a - e^gamma b on the n x n grid, with its
    adjoint gradient; derivatives are trigonometric."""
    a1, a2 = _sample_form(a, n)
    b1, b2 = _sample_form(b, n)
    k = _wavenumbers(n)

    def objective(phi: np.ndarray, gamma: np.ndarray):
        ef, eg = np.exp(phi), np.exp(gamma)
        w1 = ef * a1 - eg * b1
        w2 = ef * a2 - eg * b2
        rho = _du(w2, k) - _dv(w1, k)
        J = float(np.mean(rho * rho))
        # adjoint: the spectral derivative is antisymmetric
        w = 2.0 * rho / rho.size
        dw1 = _dv(w, k)
        dw2 = -_du(w, k)
        g_phi = ef * (a1 * dw1 + a2 * dw2)
        g_gamma = -eg * (b1 * dw1 + b2 * dw2)
        return J, g_phi, g_gamma

    return objective


def _trig_expr(values: np.ndarray, drop_tol: float = 1e-12) -> Expr:
    """Trigonometric interpolant of grid samples as a symbolic expression;
    modes below drop_tol (relative to the sup of the data) are dropped."""
    n = values.shape[0]
    c = np.fft.fft2(values) / (n * n)
    freqs = np.fft.fftfreq(n, 1.0 / n).astype(int)
    scale = max(1.0, float(np.max(np.abs(values))))
    u, v = ex.var("u"), ex.var("v")
    terms = []
    for i in range(n):
        for j in range(n):
            ni, nj = (-i) % n, (-j) % n
            if (ni, nj) < (i, j):
                continue  # conjugate already handled
            k1, k2 = int(freqs[i]), int(freqs[j])
            theta = ex.zadd(
                ex.zmul(ex.const(2.0 * math.pi * k1), u),
                ex.zmul(ex.const(2.0 * math.pi * k2), v),
            )
            if (ni, nj) == (i, j):
                amp = float(c[i, j].real)
                if abs(amp) <= drop_tol * scale:
                    continue
                terms.append(ex.zmul(ex.const(amp), ex.func("cos", theta)))
            else:
                re, im = 2.0 * float(c[i, j].real), 2.0 * float(c[i, j].imag)
                if math.hypot(re, im) <= drop_tol * scale:
                    continue
                terms.append(
                    ex.zsub(
                        ex.zmul(ex.const(re), ex.func("cos", theta)),
                        ex.zmul(ex.const(im), ex.func("sin", theta)),
                    )
                )
    if not terms:
        return ex.ZERO
    return reduce(ex.zadd, terms)


@dataclass(frozen=True)
class ScalingSolution:
    n: int
    log_f: np.ndarray
    log_g: np.ndarray
    f_expr: Expr
    g_expr: Expr
    residual: float
    residual_history: tuple[float, ...]
    iterations: int
    success: bool
    interpolant_residual: float


def scaling_solve(
    a: DifferentialForm,
    b: DifferentialForm,
    *,
    n: int = 64,
    tol: float = 1e-6,
    max_iterations: int = 4000,
) -> ScalingSolution:
    """Minimizes the mean-square curl of e^phi a - e^gamma b over grid
    functions phi = log f, gamma = log g.

    Barzilai-Borwein steps guarded by a backtracking sufficient-decrease
    line search, so the recorded residual history never increases.  Jointly
    shrinking f and g scales the raw objective down without changing
    anything, so the iteration minimizes the gauge-fixed value: the residual
    of the representative with mean(phi) = 0.
    """
    raw = closedness_objective(a, b, n)

    def objective(phi, gamma):
        J0, gp, gg = raw(phi, gamma)
        s = math.exp(-2.0 * float(np.mean(phi)))
        J = s * J0
        return J, s * gp - (2.0 * J / phi.size), s * gg

    phi = np.zeros((n, n))
    gamma = np.zeros((n, n))
    J, g_phi, g_gamma = objective(phi, gamma)
    history = [math.sqrt(J)]
    it = 0
    step = 1.0 / max(1.0, math.sqrt(float(np.sum(g_phi**2) + np.sum(g_gamma**2))))
    prev = None
    while history[-1] >= tol and it < max_iterations:
        it += 1
        gnorm2 = float(np.sum(g_phi**2) + np.sum(g_gamma**2))
        if gnorm2 == 0.0:
            break
        if prev is not None:
            s_phi, s_gamma, y_phi, y_gamma = prev
            sy = float(np.sum(s_phi * y_phi) + np.sum(s_gamma * y_gamma))
            ss = float(np.sum(s_phi * s_phi) + np.sum(s_gamma * s_gamma))
            if sy > 0:
                step = ss / sy
        accepted = False
        t = step
        while t > 1e-18:
            phi_t = phi - t * g_phi
            gamma_t = gamma - t * g_gamma
            J_t, gp_t, gg_t = objective(phi_t, gamma_t)
            if J_t <= J - 1e-4 * t * gnorm2:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        prev = (phi_t - phi, gamma_t - gamma, gp_t - g_phi, gg_t - g_gamma)
        phi, gamma, J, g_phi, g_gamma = phi_t, gamma_t, J_t, gp_t, gg_t
        history.append(math.sqrt(J))
    # gauge: joint constant shift, zero-mean phi (leaves the gauge-fixed
    # objective unchanged)
    m = float(np.mean(phi))
    phi = phi - m
    gamma = gamma - m
    residual = math.sqrt(J)
    f_expr = ex.func("exp", _trig_expr(phi))
    g_expr = ex.func("exp", _trig_expr(gamma))
    interp_res = _interpolant_residual(a, b, f_expr, g_expr, n)
    return ScalingSolution(
        n=n,
        log_f=phi,
        log_g=gamma,
        f_expr=f_expr,
        g_expr=g_expr,
        residual=residual,
        residual_history=tuple(history),
        iterations=it,
        success=residual < tol,
        interpolant_residual=interp_res,
    )


def _interpolant_residual(a, b, f_expr, g_expr, n) -> float:
    a1, a2 = _sample_form(a, n)
    b1, b2 = _sample_form(b, n)
    t = np.arange(n) / n
    U, V = np.meshgrid(t, t, indexing="ij")
    zeros = np.zeros_like(U)
    fv = compile_field(f_expr, UV)(U, V) + zeros
    gv = compile_field(g_expr, UV)(U, V) + zeros
    k = _wavenumbers(n)
    rho = _du(fv * a2 - gv * b2, k) - _dv(fv * a1 - gv * b1, k)
    return math.sqrt(float(np.mean(rho * rho)))


# ---------------------------------------------------------------------------
# certificate pipeline

@dataclass(frozen=True)
class ExtensionSummary:
    delta: float
    eps: float
    c_lo: float
    c_hi: float
    margin: float

    def to_dict(self):
        return {
            "delta": self.delta,
            "eps": self.eps,
            "c_lo": self.c_lo,
            "c_hi": self.c_hi,
            "margin": self.margin,
        }


@dataclass(frozen=True)
class PreLagReport:
    outcome: str  # certificate | not_attempted | failed
    diagnostics: tuple[str, ...]
    obstruction: ObstructionResult | None = None
    parallel_verdict: str | None = None
    cone_pair: tuple | None = None
    scaling: ScalingSolution | None = None
    extension_u: ExtensionSummary | None = None
    extension_s: ExtensionSummary | None = None
    scale_C: float = 1.0
    c1_distance: float | None = None
    final_residual: float | None = None
    final_al: ALReport | None = None
    pair: FormPair | None = None

    def to_dict(self):
        return {
            "outcome": self.outcome,
            "diagnostics": list(self.diagnostics),
            "obstruction": None if self.obstruction is None else self.obstruction.to_dict(),
            "parallel_verdict": self.parallel_verdict,
            "cone_pair": None if self.cone_pair is None else [list(d) for d in self.cone_pair],
            "scaling": None
            if self.scaling is None
            else {
                "grid_n": self.scaling.n,
                "residual": self.scaling.residual,
                "iterations": self.scaling.iterations,
                "success": self.scaling.success,
                "log_f": self.scaling.log_f.tolist(),
                "log_g": self.scaling.log_g.tolist(),
            },
            "extension_u": None if self.extension_u is None else self.extension_u.to_dict(),
            "extension_s": None if self.extension_s is None else self.extension_s.to_dict(),
            "scale_C": self.scale_C,
            "c1_distance": self.c1_distance,
            "final_residual": self.final_residual,
            "final_al": None if self.final_al is None else self.final_al.to_dict(),
        }


def _restrict_scalar(r: Expr, sigma: TorusEmbedding) -> Expr:
    return restrict(DifferentialForm(XYZ, 0, {(): r}), sigma).coeff(())


def _mean_constant_form(beta: DifferentialForm, n: int = 48) -> DifferentialForm:
    """Constant-coefficient (hence closed) form with the grid-averaged
    coefficients of beta."""
    t = np.arange(n) / n
    U, V = np.meshgrid(t, t, indexing="ij")
    coeffs = {}
    for idx in ((0,), (1,)):
        c = beta.coeff(idx)
        vals = compile_field(c, UV)(U, V) + np.zeros_like(U)
        coeffs[idx] = ex.const(float(np.mean(vals)))
    return DifferentialForm(UV, 1, coeffs)


def pre_lagrangian_certificate(
    model: FlowModel | None = None,
    sigma: TorusEmbedding | None = None,
    *,
    foliations: tuple[Foliation2, Foliation2] | None = None,
    scale_C: float = 10.0,
    solver_n: int = 64,
    grid_n: int = 12,
    tol: float = 1e-6,
    delta: float = 0.2,
    eps: float = 0.1,
    slope_search: SlopeSearch = SlopeSearch(),
) -> PreLagReport:
    """Fail-soft pipeline: obstruction test, shared-compact-leaf analysis,
    scaling solve, collar extension, constant rescaling, collar perturbation,
    and a final check that the restricted sum is closed and the pair still
    passes the AL test.  Bare foliation pairs run the decision stages only.
    """
    if model is not None:
        if sigma is None:
            raise PreLagError("an ambient model needs a torus embedding")
        F_ws, F_wu = weak_foliations_on_torus(model, sigma)
    elif foliations is not None:
        F_ws, F_wu = foliations
    else:
        raise PreLagError("need either an ambient model or a foliation pair")

    obst = obstruction_test(F_ws, F_wu)
    if obst.verdict == "obstructed":
        return PreLagReport(
            outcome="not_attempted",
            diagnostics=(
                "nontrivial loop winding: no restricted combination can be closed",
            ),
            obstruction=obst,
            scale_C=scale_C,
        )

    par = parallel_compact_leaves(F_ws, F_wu)
    cone = cone_separation(F_ws, F_wu, slope_search)
    if par.parallel:
        return PreLagReport(
            outcome="failed",
            diagnostics=(
                "parallel compact leaves: the scaling construction hypothesis fails",
            ),
            obstruction=obst,
            parallel_verdict=par.verdict,
            cone_pair=cone,
            scale_C=scale_C,
        )
    if model is None:
        return PreLagReport(
            outcome="not_attempted",
            diagnostics=("foliation data only: no ambient pair to rebuild",),
            obstruction=obst,
            parallel_verdict=par.verdict,
            cone_pair=cone,
            scale_C=scale_C,
        )

    common = dict(
        obstruction=obst,
        parallel_verdict=par.verdict,
        cone_pair=cone,
        scale_C=scale_C,
    )
    a = restrict(model.alpha_u, sigma)
    b = restrict(model.alpha_s, sigma)
    sol = scaling_solve(a, b, n=solver_n, tol=tol)
    common["scaling"] = sol
    if not sol.success:
        return PreLagReport(
            outcome="failed",
            diagnostics=(
                f"scaling solve stalled at residual {sol.residual:.2e}",
            ),
            **common,
        )
    if float(sol.log_f.std()) > 1e-8 or float(sol.log_g.std()) > 1e-8:
        return PreLagReport(
            outcome="failed",
            diagnostics=(
                "nonconstant scalings: collar data computed but the global "
                "reassembly is limited to constant solutions",
            ),
            **common,
        )
    f0 = math.exp(float(np.mean(sol.log_f)))
    g0 = math.exp(float(np.mean(sol.log_g)))

    r_u = _restrict_scalar(model.r_u, sigma)
    r_s = _restrict_scalar(model.r_s, sigma)
    try:
        ext_u = _collar_extension(Const(f0), r_u, delta, eps)
        ext_s = _collar_extension(Const(1.0 / g0), ex.zneg(r_s), delta, eps)
    except Exception as e:
        return PreLagReport(
            outcome="failed",
            diagnostics=(f"collar extension failed: {e}",),
            **common,
        )
    common["extension_u"] = ExtensionSummary(
        ext_u.delta, ext_u.eps, ext_u.c_lo, ext_u.c_hi, ext_u.positivity_margin()
    )
    common["extension_s"] = ExtensionSummary(
        ext_s.delta, ext_s.eps, ext_s.c_lo, ext_s.c_hi, ext_s.positivity_margin()
    )
    if common["extension_u"].margin <= 0 or common["extension_s"].margin <= 0:
        return PreLagReport(
            outcome="failed",
            diagnostics=("collar extension margin is not positive",),
            **common,
        )

    alpha_u = model.alpha_u.scale(ex.const(f0))
    alpha_s = model.alpha_s.scale(ex.const(g0))
    plus = (alpha_u - alpha_s).scale(ex.const(scale_C))
    minus = (alpha_u + alpha_s).scale(ex.const(1.0 / scale_C))
    pair = FormPair(plus, minus, model.gluing)

    restricted = restrict(pair.plus + pair.minus, sigma)
    beta = _mean_constant_form(restricted)
    try:
        perturbed = perturb_pair(pair, beta, sigma)
    except PerturbationError as e:
        return PreLagReport(
            outcome="failed", diagnostics=(f"collar perturbation failed: {e}",), **common
        )
    final_pair = perturbed.pair

    final_al = al_check(final_pair, n=grid_n)
    final_res = _curl_residual(restrict(final_pair.plus + final_pair.minus, sigma))
    ok = final_al.verdict == "anosov_liouville" and final_res < tol
    return PreLagReport(
        outcome="certificate" if ok else "failed",
        diagnostics=perturbed.warnings
        if ok
        else (f"final check: verdict {final_al.verdict}, residual {final_res:.2e}",),
        c1_distance=perturbed.c1_norm,
        final_residual=final_res,
        final_al=final_al,
        pair=final_pair,
        **common,
    )


def _collar_extension(f: Expr, r: Expr, delta: float, eps: float):
    """Collar extension with plateau constants chosen from grid bounds with
    a factor-2 headroom."""
    n = 24
    t = np.arange(n) / n
    U, V = np.meshgrid(t, t, indexing="ij")
    zeros = np.zeros_like(U)
    f_vals = compile_field(f, UV)(U, V) + zeros
    s_vals = 1.0 - (compile_field(r, UV)(U, V) + zeros)  # inner-band exponent
    s_max = float(np.max(np.abs(s_vals)))
    C = 2.0 * float(f_vals.max()) * math.exp(s_max * eps)
    c = 0.5 * float(f_vals.min()) * math.exp(-s_max * eps)
    return extend_scaling(f, r, delta=delta, eps=eps, c=c, C=C)


# ---------------------------------------------------------------------------
# graph criterion

@dataclass(frozen=True)
class GraphCheck:
    ok: bool
    residual: float


def check_graph_lagrangian(
    pair: FormPair,
    sigma: TorusEmbedding,
    f: Expr,
    *,
    n: int = 64,
    tol: float = 1e-6,
) -> GraphCheck:
    """Is d[(e^f alpha_+ + e^-f alpha_-)|_Sigma] below tolerance on the grid?"""
    rep = al_check(pair, n=8)
    if rep.verdict == "fail":
        raise PreLagError("pair fails the AL check")
    beta = restrict(pair.plus, sigma).scale(ex.func("exp", f)) + restrict(
        pair.minus, sigma
    ).scale(ex.func("exp", ex.zneg(f)))
    res = _curl_residual(beta, n)
    return GraphCheck(res < tol, res)
