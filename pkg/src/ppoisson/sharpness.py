"""Closed-form source/solution pairs whose solutions sit exactly at the integrability edge.

For eps > 0 set ell = eps (n/q - p)^2 / ((p-1) n + eps (n/q - p)) and take the
source f = -r^(ell - n/q). The radial solution is a(r^s - 1) with
s = (pq - n + ell q)/((p-1) q) < 0, and |u|^R r^(n-1) ~ 1/r exactly at
R = (p-1) q n / (n - pq - ell q), which equals the sharp exponent plus eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distribution import Diverged, lebesgue_norm
from .divergence import Growth, ProbeResult, divergence_probe
from .exponents import ExponentContext, Regime
from .profiles import PowerLawAffine
from .quadrature import QuadratureConfig
from .radial import p_laplacian_residual, solve_radial

__all__ = [
    "SharpnessExample",
    "build_example",
    "verify_example_pde",
    "divergence_probe",
    "exponent_sweep",
    "Growth",
    "ProbeResult",
]


class ExampleError(ValueError):
    pass


def ell_for_epsilon(ctx: ExponentContext, epsilon: float) -> float:
    d = ctx.n / ctx.q - ctx.p
    return epsilon * d * d / ((ctx.p - 1) * ctx.n + epsilon * d)


@dataclass(frozen=True)
class SharpnessExample:
    ctx: ExponentContext
    epsilon: float
    ell_sharp: float
    f: PowerLawAffine
    u: PowerLawAffine
    u_exponent: float
    u_coefficient: float
    threshold: float

    @property
    def source_norm(self) -> float:
        """||f||_q = (|S^{n-1}| / (ell q))^(1/q)."""
        return (self.ctx.sphere_area / (self.ell_sharp * self.ctx.q)) ** (1 / self.ctx.q)


def build_example(ctx: ExponentContext, epsilon: float) -> SharpnessExample:
    if ctx.regime is not Regime.SUBCRITICAL:
        raise ExampleError(f"examples need q < n/p, got regime {ctx.regime.value}")
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ExampleError(f"epsilon={epsilon} must be positive and finite")
    n, p, q = ctx.n, ctx.p, ctx.q
    ell = ell_for_epsilon(ctx, epsilon)
    s = (p * q - n + ell * q) / ((p - 1) * q)
    coeff = (p - 1) * q ** (p / (p - 1)) / ((n * q - n + ell * q) ** (1 / (p - 1)) * (p * q - n + ell * q))
    threshold = (p - 1) * q * n / (n - p * q - ell * q)

    if not (ell > 0 and ell * q > 0):
        raise ExampleError(f"ell={ell} must be positive")
    if not s < 0:
        raise ExampleError(f"solution exponent {s} is not negative")
    target = ctx.sharp_exponent + epsilon
    if abs(threshold - target) > 1e-10 * target:
        raise ExampleError(f"threshold {threshold} != sharp exponent + eps = {target}")

    f = PowerLawAffine(-1.0, ell - n / q)
    u = PowerLawAffine(coeff, s, -1.0)
    if u.boundary_value != 0:
        raise ExampleError("u(1) must vanish")
    return SharpnessExample(ctx, float(epsilon), ell, f, u, s, coeff, threshold)


@dataclass(frozen=True)
class PDECheck:
    residual: float
    solver_gap: float


def verify_example_pde(
    example: SharpnessExample,
    radii=None,
    cfg: QuadratureConfig | None = None,
    *,
    grid_size: int = 512,
) -> PDECheck:
    """Residual of the closed form against f, and its gap to the quadrature solver.

    The gap is the max relative difference at solver nodes inside [0.01, 0.99].
    """
    radii = np.geomspace(1e-3, 0.99, 200) if radii is None else np.asarray(radii, dtype=float)
    if radii.min() < 1e-3 or radii.max() > 0.99:
        raise ValueError("radii must lie in [1e-3, 0.99]")
    residual = p_laplacian_residual(example.u, example.f, example.ctx, radii, cfg)
    sol = solve_radial(example.f, example.ctx, cfg, grid_size)
    sel = (sol.radii >= 0.01) & (sol.radii <= 0.99)
    exact = example.u(sol.radii[sel])
    gap = float(np.max(np.abs(sol.values[sel] - exact) / np.abs(exact)))
    return PDECheck(residual, gap)


@dataclass(frozen=True)
class SweepRow:
    r_exp: float
    growth: Growth
    finite: bool
    norm: float | None


@dataclass(frozen=True)
class SweepResult:
    example: SharpnessExample
    rows: list
    empirical_cutoff: float | None
    resolution: float | None

    @property
    def cutoff_ok(self) -> bool:
        if self.empirical_cutoff is None:
            return False
        return abs(self.empirical_cutoff - self.example.threshold) <= self.resolution * (1 + 1e-12)


def exponent_sweep(
    ctx: ExponentContext,
    epsilon: float,
    r_grid,
    cfg: QuadratureConfig | None = None,
    deltas=None,
) -> SweepResult:
    """Probe ||u||_r for each r in ``r_grid``; the cutoff is the smallest divergent r.

    The resolution is the gap from the cutoff to the largest finite r below it.
    """
    example = build_example(ctx, epsilon)
    rows = []
    for r in sorted(float(x) for x in r_grid):
        probe = divergence_probe(example.u, r, ctx, deltas, cfg)
        norm = None
        if probe.growth is Growth.CONVERGENT:
            val = lebesgue_norm(example.u, r, ctx, cfg, deltas=deltas)
            norm = None if isinstance(val, Diverged) else float(val)
        rows.append(SweepRow(r, probe.growth, probe.growth is Growth.CONVERGENT, norm))
    cutoff = resolution = None
    for i, row in enumerate(rows):
        if row.growth in (Growth.LOG_DIVERGENT, Growth.POWER_DIVERGENT):
            cutoff = row.r_exp
            finite_below = [x.r_exp for x in rows[:i] if x.finite]
            resolution = cutoff - finite_below[-1] if finite_below else math.inf
            break
    return SweepResult(example, rows, cutoff, resolution)
