"""Detect whether a radial L^r integral converges at the origin.

Truncated integrals T(delta) = |S^{n-1}| int_delta^1 |u|^r rho^{n-1} d rho are
computed on a log-spaced sequence delta -> 0 and matched against the growth
models

    constant:   T = a
    log:        T = a + b log(1/delta)
    power:      T = a + b delta^(-gamma)

On log-spaced deltas the increments of the power model form a geometric
sequence with ratio (delta_{i+1}/delta_i)^(-gamma), so gamma is estimated from
the increments; gamma < 0 is convergence (with extrapolated limit a), gamma = 0
is the log model.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .exponents import ExponentContext
from .profiles import RadialProfile
from .quadrature import QuadratureConfig, panel_integrals

DEFAULT_DELTAS = np.geomspace(1e-2, 1e-30, 15)
FIT_POINTS = 4
# |gamma| at or below this is read as logarithmic growth
LOG_GAMMA_TOL = 5e-3
MIN_R2 = 0.99
SUBPANELS = 24


class Growth(str, enum.Enum):
    CONVERGENT = "convergent"
    LOG_DIVERGENT = "log_divergent"
    POWER_DIVERGENT = "power_divergent"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ProbeResult:
    growth: Growth
    gamma: float
    r2_log: float
    r2_power: float
    limit: float  # extrapolated integral when convergent, inf otherwise
    deltas: np.ndarray = field(repr=False)
    truncated: np.ndarray = field(repr=False)

    @property
    def diverges(self) -> bool:
        return self.growth in (Growth.LOG_DIVERGENT, Growth.POWER_DIVERGENT)


def log_integrand(u: RadialProfile, r_exp: float, n: int):
    """t -> log(|u(e^t)|^r e^{n t}), the integrand of int |u|^r rho^{n-1} d rho in t = log rho."""

    def g(t):
        return r_exp * u.log_abs(np.exp(t)) + n * t

    return g


def truncated_integrals(u: RadialProfile, r_exp: float, ctx: ExponentContext, deltas, cfg: QuadratureConfig | None = None):
    """T(delta) for each delta (deltas must be decreasing and in (0, 1))."""
    cfg = cfg or QuadratureConfig()
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 1 or np.any(np.diff(deltas) >= 0) or deltas[0] >= 1 or deltas[-1] <= 0:
        raise ValueError("deltas must be strictly decreasing inside (0, 1)")
    lg = log_integrand(u, r_exp, ctx.n)

    def integrand(t):
        with np.errstate(over="ignore"):
            return np.exp(lg(t))

    knots = np.log(np.concatenate([[1.0], deltas]))
    edges = [np.linspace(knots[i], knots[i + 1], SUBPANELS + 1)[:-1] for i in range(knots.size - 1)]
    edges = np.concatenate(edges + [[knots[-1]]])[::-1]
    pieces = panel_integrals(integrand, edges, cfg)[::-1]
    cum = np.cumsum(pieces)[SUBPANELS - 1 :: SUBPANELS]
    return ctx.sphere_area * cum


def _r2(y, yhat):
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - yhat) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return 1.0 - ss_res / ss_tot


def classify(deltas, T) -> ProbeResult:
    deltas = np.asarray(deltas, dtype=float)
    T = np.asarray(T, dtype=float)
    d, y = deltas[-FIT_POINTS:], T[-FIT_POINTS:]
    if not np.isfinite(y).all():
        return ProbeResult(Growth.POWER_DIVERGENT, math.inf, 0.0, 0.0, math.inf, deltas, T)
    L = np.log(1 / d)

    # log model
    A = np.vstack([np.ones_like(L), L]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r2_log = _r2(y, A @ coef)

    inc = np.diff(y)
    scale = max(abs(y[-1]), np.finfo(float).tiny)
    if np.all(np.abs(inc) <= 1e-13 * scale):
        # constant model
        return ProbeResult(Growth.CONVERGENT, -math.inf, r2_log, 1.0, float(y[-1]), deltas, T)
    if np.any(inc <= 0):
        # truncated integrals of a nonnegative integrand must increase as delta shrinks
        return ProbeResult(Growth.INCONCLUSIVE, math.nan, r2_log, 0.0, math.nan, deltas, T)

    # power model: log(inc_i) linear in log(1/delta_i) with slope gamma
    Lm = L[:-1]
    B = np.vstack([np.ones_like(Lm), Lm]).T
    (c0, gamma), *_ = np.linalg.lstsq(B, np.log(inc), rcond=None)
    if abs(gamma) > LOG_GAMMA_TOL:
        basis = d ** (-gamma)
        P = np.vstack([np.ones_like(basis), basis]).T
        pc, *_ = np.linalg.lstsq(P, y, rcond=None)
        r2_pow = _r2(y, P @ pc)
    else:
        pc, r2_pow = coef, r2_log

    if gamma < -LOG_GAMMA_TOL:
        growth, good, limit = Growth.CONVERGENT, r2_pow, float(pc[0])
    elif gamma > LOG_GAMMA_TOL:
        growth, good, limit = Growth.POWER_DIVERGENT, r2_pow, math.inf
    else:
        growth, good, limit = Growth.LOG_DIVERGENT, r2_log, math.inf
    if good < MIN_R2:
        growth, limit = Growth.INCONCLUSIVE, math.nan
    return ProbeResult(growth, float(gamma), r2_log, r2_pow, limit, deltas, T)


def divergence_probe(
    u: RadialProfile,
    r_exp: float,
    ctx: ExponentContext,
    deltas=None,
    cfg: QuadratureConfig | None = None,
) -> ProbeResult:
    deltas = DEFAULT_DELTAS if deltas is None else np.asarray(deltas, dtype=float)
    if deltas.size < 6:
        raise ValueError("divergence probe needs at least 6 deltas")
    if deltas[0] > 0.1:
        raise ValueError("deltas must lie in (0, 0.1]")
    T = truncated_integrals(u, r_exp, ctx, deltas, cfg)
    return classify(deltas, T)
