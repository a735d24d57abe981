"""Radial solutions of -div(|grad u|^{p-2} grad u) = f on the unit ball, u = 0 on the sphere.

For radial data the equation integrates once to the flux identity

    r^{n-1} phi(u'(r)) = -F(r),   F(r) = int_0^r f(s) s^{n-1} ds,

with phi(t) = |t|^{p-2} t, so u' = phi^{-1}(-F(r) / r^{n-1}) and
u(r) = -int_r^1 u'(t) dt.
"""

from __future__ import annotations

import math

import numpy as np

from .exponents import ExponentContext
from .profiles import PowerLawAffine, RadialProfile, Sampled
from .quadrature import QuadratureConfig, QuadratureError, gauss_legendre, panel_integrals, quad_log

DEFAULT_GRID_SIZE = 512


class ResidualWindowError(ValueError):
    pass


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")


def phi(t, p: float):
    """Scalar flux map |t|^{p-2} t (odd, phi(0) = 0)."""
    _check_finite(t)
    t = np.asarray(t, dtype=float)
    out = np.sign(t) * np.abs(t) ** (p - 1)
    return out if out.ndim else float(out)


def phi_inverse(s, p: float):
    """Inverse flux map |s|^{(2-p)/(p-1)} s."""
    _check_finite(s)
    s = np.asarray(s, dtype=float)
    out = np.sign(s) * np.abs(s) ** (1.0 / (p - 1))
    return out if out.ndim else float(out)


# -- cumulative source ------------------------------------------------------

def _closed_form_cumulative(f: PowerLawAffine, r, n: int):
    """int_0^r a (s^k + c) s^{n-1} ds."""
    a, k, c = f.coefficient, f.exponent, f.offset
    if a == 0:
        return np.zeros_like(np.asarray(r, dtype=float))
    if k + n <= 0:
        raise QuadratureError(f"source exponent {k:.6g} <= -n = {-n}: not integrable against s^(n-1)")
    r = np.asarray(r, dtype=float)
    out = r ** (k + n) / (k + n)
    if c:
        out = out + c * r**n / n
    return a * out


def _origin_piece(f: RadialProfile, r0: float, n: int) -> float:
    """int_0^{r0} f(s) s^{n-1} ds from a power-law model of f near the origin."""
    if isinstance(f, PowerLawAffine):
        return float(_closed_form_cumulative(f, r0, n))
    c, k = f.value_origin_model()
    if c == 0:
        return 0.0
    if k + n <= 0:
        raise QuadratureError(f"source behaves like s^{k:.6g} near 0; not integrable against s^(n-1)")
    return c * r0 ** (k + n) / (k + n)


def cumulative_source(
    f: RadialProfile,
    r: float,
    ctx: ExponentContext,
    cfg: QuadratureConfig | None = None,
    *,
    method: str = "auto",
) -> float:
    """F(r) = int_0^r f(s) s^{n-1} ds.

    ``method="auto"`` uses the closed form for power-law sources and adaptive
    quadrature otherwise; ``method="quadrature"`` forces the singularity-split
    quadrature path (model on (0, cutoff], Gauss-Kronrod on [cutoff, r]).
    """
    cfg = cfg or QuadratureConfig()
    if not (0 < r <= 1):
        raise ValueError(f"r={r} not in (0, 1]")
    n = ctx.n
    if isinstance(f, PowerLawAffine) and method == "auto":
        return float(_closed_form_cumulative(f, r, n))
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    r0 = cfg.origin_cutoff
    if isinstance(f, Sampled):
        r0 = max(r0, f.grid_min)
    if r <= r0:
        return _origin_piece(f, r, n)
    head = _origin_piece(f, r0, n)
    return head + quad_log(lambda s: f(s), r0, r, cfg, weight_power=n - 1)


class _SourceIntegral:
    """Vectorized F(r) on (0, 1] for a fixed source, anchored on a log grid."""

    def __init__(self, f: RadialProfile, grid: np.ndarray, n: int, cfg: QuadratureConfig):
        self.f, self.n, self.cfg = f, n, cfg
        self.closed = isinstance(f, PowerLawAffine)
        self.grid = grid
        if self.closed:
            self.nodes = _closed_form_cumulative(f, grid, n)
            return
        self.t = np.log(grid)
        head = _origin_piece(f, grid[0], n)
        inc = panel_integrals(self._integrand_t, self.t, cfg)
        self.nodes = head + np.concatenate([[0.0], np.cumsum(inc)])

    def _integrand_t(self, t):
        return np.asarray(self.f(np.exp(t))) * np.exp(self.n * t)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.closed:
            return _closed_form_cumulative(self.f, r, self.n)
        t = np.log(r)
        idx = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 2)
        base_t = self.t[idx]
        x, w = gauss_legendre(20)
        span = (t - base_t)[..., None]
        vals = self._integrand_t(base_t[..., None] + span * x)
        return self.nodes[idx] + (vals * w).sum(axis=-1) * span[..., 0]


def solve_radial(
    f: RadialProfile,
    ctx: ExponentContext,
    cfg: QuadratureConfig | None = None,
    grid_size: int = DEFAULT_GRID_SIZE,
    r_min: float | None = None,
) -> Sampled:
    """Radial solution on a geometric grid from ``r_min`` (default: origin cutoff) to 1."""
    cfg = cfg or QuadratureConfig()
    r_min = cfg.origin_cutoff if r_min is None else r_min
    if r_min < cfg.origin_cutoff:
        raise ValueError(f"grid start {r_min} is below origin_cutoff {cfg.origin_cutoff}")
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    grid = np.geomspace(r_min, 1.0, grid_size)
    grid[-1] = 1.0
    n, p = ctx.n, ctx.p
    F = _SourceIntegral(f, grid, n, cfg)

    def du_dt(t):
        r = np.exp(t)
        return phi_inverse(-F(r) / r ** (n - 1), p) * r

    increments = panel_integrals(du_dt, np.log(grid), cfg)
    # u(1) = 0, u(r_i) = u(r_{i+1}) - int_{r_i}^{r_{i+1}} u'
    values = -np.concatenate([np.cumsum(increments[::-1])[::-1], [0.0]])
    derivs = phi_inverse(-F.nodes / grid ** (n - 1), p)
    if not (np.isfinite(values).all() and np.isfinite(derivs).all()):
        raise QuadratureError("solver produced non-finite values")
    return Sampled(grid, values, derivs)


def flux(u: RadialProfile, r, ctx: ExponentContext):
    r = np.asarray(r, dtype=float)
    return r ** (ctx.n - 1) * phi(u.derivative(r), ctx.p)


def p_laplacian_residual(
    u: RadialProfile,
    f: RadialProfile,
    ctx: ExponentContext,
    radii,
    cfg: QuadratureConfig | None = None,
) -> float:
    """Max relative residual of -r^{1-n} (r^{n-1} phi(u'))' = f over ``radii``.

    The outer derivative is a central difference of the flux with step r * 1e-5.
    """
    cfg = cfg or QuadratureConfig()
    radii = np.asarray(radii, dtype=float)
    lo = cfg.origin_cutoff * 10
    if isinstance(u, Sampled):
        lo = max(lo, u.grid_min * 10)
    if radii.size == 0 or radii.min() < lo * (1 - 1e-12) or radii.max() > 0.99:
        raise ResidualWindowError(f"radii must lie in [{lo:.3g}, 0.99]")
    h = radii * 1e-5
    dG = (flux(u, radii + h, ctx) - flux(u, radii - h, ctx)) / (2 * h)
    lhs = -dG / radii ** (ctx.n - 1)
    rhs = np.asarray(f(radii), dtype=float)
    rel = np.abs(lhs - rhs) / (np.abs(rhs) + np.finfo(float).tiny)
    return float(rel.max())


def power_source_solution(f: PowerLawAffine, ctx: ExponentContext) -> PowerLawAffine | None:
    """Exact solution for a pure power source f = a r^k, or None when none is available.

    u = phi^{-1}(-a/(k+n)) (r^s - 1)/s with s = (k+p)/(p-1).
    """
    if not isinstance(f, PowerLawAffine) or f.offset != 0:
        return None
    a, k, n, p = f.coefficient, f.exponent, ctx.n, ctx.p
    if k + n <= 0:
        return None
    s = (k + p) / (p - 1)
    if s == 0:
        return None
    return PowerLawAffine(phi_inverse(-a / (k + n), p) / s, s, -1.0)
