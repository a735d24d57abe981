"""Quadrature helpers for radial integrals with power-type singularities at r = 0.

Integrals over (0, 1] are taken in the logarithmic variable t = log r, where
power laws become exponentials and panels of equal width in t resolve the
origin uniformly. The piece (0, cutoff] is handled by a power-law model.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-13
    rel_tol: float = 1e-12
    max_subdivisions: int = 200
    origin_cutoff: float = 1e-8

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")
        if not (0 < self.origin_cutoff <= 1e-3):
            raise ValueError(f"origin_cutoff={self.origin_cutoff} not in (0, 1e-3]")


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    if order not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = ((x + 1) / 2, w / 2)
    return _GL_CACHE[order]


def panel_integrals(fun, edges, cfg: QuadratureConfig, order: int = 16) -> np.ndarray:
    """Integrals of a vectorized ``fun`` over consecutive panels [edges[i], edges[i+1]].

    Each panel is integrated with Gauss-Legendre of two orders; panels whose
    estimates disagree are bisected until they agree or the subdivision budget
    is exhausted. Refinement also stops once the summed error estimate of the
    unfinished panels is within rel_tol of the summed magnitudes, so the total
    error stays below twice that. Weak endpoint singularities such as
    (1 - r)^0.5 then no longer exhaust the budget.
    """
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    out = np.zeros(lo.size)
    done_abs = 0.0
    todo = np.arange(lo.size)
    a, b = lo.copy(), hi.copy()
    depth = 0
    x1, w1 = gauss_legendre(order)
    x2, w2 = gauss_legendre(order + 8)
    while todo.size:
        width = (b - a)[:, None]
        coarse = (fun(a[:, None] + width * x1) * w1).sum(axis=1) * width[:, 0]
        fine = (fun(a[:, None] + width * x2) * w2).sum(axis=1) * width[:, 0]
        err = np.abs(fine - coarse)
        ok = err <= np.maximum(cfg.abs_tol, cfg.rel_tol * np.abs(fine))
        pending_err = float(np.sum(err[~ok]))
        if pending_err <= max(cfg.abs_tol, cfg.rel_tol * (done_abs + float(np.sum(np.abs(fine))))):
            ok[:] = True
        if depth >= cfg.max_subdivisions.bit_length() or not np.isfinite(fine).all():
            if not np.isfinite(fine).all():
                raise QuadratureError("non-finite integrand on a panel")
            if not ok.all():
                warnings.warn("panel quadrature hit its subdivision limit", RuntimeWarning, stacklevel=2)
            ok[:] = True
        np.add.at(out, todo[ok], fine[ok])
        done_abs += float(np.sum(np.abs(fine[ok])))
        mid = (a + b) / 2
        bad = ~ok
        todo = np.concatenate([todo[bad], todo[bad]])
        a, b = np.concatenate([a[bad], mid[bad]]), np.concatenate([mid[bad], b[bad]])
        depth += 1
    return out


def quad_log(fun_r, r_lo: float, r_hi: float, cfg: QuadratureConfig, *, weight_power: float = 0.0) -> float:
    """Adaptive Gauss-Kronrod integral of fun_r(r) * r**weight_power over [r_lo, r_hi].

    Works in t = log r so the integrand becomes fun_r(e^t) * e^{(w+1) t}.
    """
    if r_hi <= r_lo:
        return 0.0
    w1 = weight_power + 1.0

    def g(t):
        return float(fun_r(math.exp(t))) * math.exp(w1 * t)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(
                g,
                math.log(r_lo),
                math.log(r_hi),
                epsabs=cfg.abs_tol,
                epsrel=cfg.rel_tol,
                limit=cfg.max_subdivisions,
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from None
    return val

