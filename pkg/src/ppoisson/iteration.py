"""Successive approximations of a normalized distribution function.

Starting from lambda_0 = 1 (unit ambient measure), each step takes

    lambda_{k+1}(beta) = inf_{0 <= alpha < beta} lambda_k(alpha)^theta (beta - alpha)^(-a)

with a = (p-1) n/(n-p) and theta = (q-1)/q * n/(n-p), which is the ratio ell
(and equals 1 when q = n/p). Everything is carried in log form: lambda_k
overflows double precision long before the iteration budget is spent in the
critical regime.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .exponents import ExponentContext, Regime
from .profiles import metadata_block

MAX_ITERATIONS = 60
DEFAULT_K_SUBCRITICAL = 30
DEFAULT_K_CRITICAL = 50
MAX_INTERVAL_K = 10**6
ENVELOPE_K = 10**4

_INVPHI = (math.sqrt(5) - 1) / 2
# interior fractions alpha/beta tried before golden-section refinement
_FRACTIONS = np.unique(np.concatenate([np.geomspace(1e-8, 0.5, 160), 1 - np.geomspace(1e-8, 0.5, 160)]))


class RegimeError(ValueError):
    pass


def default_beta_grid(size: int = 200) -> np.ndarray:
    return np.geomspace(0.1, 1e3, size)


@dataclass(frozen=True, eq=False)
class IterationState:
    ctx: ExponentContext
    beta_grid: np.ndarray
    log_lambda: list  # k = 0..K, each an array on beta_grid
    argmin: list  # k = 1..K, minimizing alpha per beta (0 where alpha = 0 wins)
    K: int
    normalized: bool = True
    half_log: list = field(default_factory=list)  # k = 1..K, log of the alpha = beta/2 evaluation

    @property
    def lambda_k(self) -> list:
        with np.errstate(over="ignore"):
            return [np.exp(l) for l in self.log_lambda]

    def half_step(self, k: int) -> np.ndarray:
        """The alpha = beta/2 evaluation of the step producing lambda_k (k >= 1)."""
        with np.errstate(over="ignore"):
            return np.exp(self.half_log[k - 1])


class _LogInterp:
    """Monotone interpolation of log lambda in log alpha with power-law continuation below the grid."""

    def __init__(self, beta_grid, log_lam, k):
        self.k = k
        self.lo_t = math.log(beta_grid[0])
        t = np.log(beta_grid)
        self.interp = PchipInterpolator(t, log_lam, extrapolate=False)
        self.slope = (log_lam[1] - log_lam[0]) / (t[1] - t[0])
        self.l0 = log_lam[0]

    def __call__(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        out = np.empty_like(alpha)
        zero = alpha <= 0
        # lambda_0(0) = 1; for k >= 1 lambda_k(0) is an infimum over an empty set
        out[zero] = 0.0 if self.k == 0 else np.inf
        pos = ~zero
        t = np.log(alpha[pos])
        below = t < self.lo_t
        vals = np.empty_like(t)
        vals[~below] = self.interp(t[~below])
        vals[below] = self.l0 + self.slope * (t[below] - self.lo_t)
        out[pos] = vals
        return out


def _objective(lam_k: _LogInterp, theta: float, a: float):
    def g(alpha, beta):
        with np.errstate(divide="ignore", invalid="ignore"):
            gap = np.log(beta - alpha)
            val = theta * lam_k(alpha) - a * gap
        return np.where(alpha < beta, val, np.inf)

    return g


def _golden(g, lo, hi, beta, iters: int = 80):
    """Vectorized golden-section minimization of g(., beta) on [lo, hi]."""
    lo, hi = lo.copy(), hi.copy()
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1, f2 = g(x1, beta), g(x2, beta)
    for _ in range(iters):
        left = f1 <= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        nx = np.where(left, hi - _INVPHI * (hi - lo), lo + _INVPHI * (hi - lo))
        nf = g(nx, beta)
        x2, f2, x1, f1 = (
            np.where(left, x1, nx),
            np.where(left, f1, nf),
            np.where(left, nx, x2),
            np.where(left, nf, f2),
        )
    take1 = f1 <= f2
    return np.where(take1, x1, x2), np.where(take1, f1, f2)


def _step(ctx: ExponentContext, beta_grid: np.ndarray, log_lam: np.ndarray, k: int, theta: float):
    a = ctx.flux_exponent
    lam = _LogInterp(beta_grid, log_lam, k)
    g = _objective(lam, theta, a)
    B = beta_grid[:, None]
    cand = np.concatenate(
        [
            np.zeros((beta_grid.size, 1)),
            B * _FRACTIONS[None, :],
            np.where(beta_grid[None, :] < B, beta_grid[None, :], 0.0),
            B / 2,
        ],
        axis=1,
    )
    cand.sort(axis=1)
    vals = g(cand, B)
    j = np.argmin(vals, axis=1)
    rows = np.arange(beta_grid.size)
    best_a, best_v = cand[rows, j], vals[rows, j]
    lo = cand[rows, np.maximum(j - 1, 0)]
    hi = cand[rows, np.minimum(j + 1, cand.shape[1] - 1)]
    ra, rv = _golden(g, lo, np.minimum(hi, beta_grid * (1 - 1e-15)), beta_grid)
    better = rv < best_v
    best_a = np.where(better, ra, best_a)
    best_v = np.where(better, rv, best_v)
    half = g(beta_grid / 2, beta_grid)
    return best_v, best_a, half


def _iterate(ctx: ExponentContext, beta_grid, K: int, theta: float) -> IterationState:
    beta_grid = np.asarray(beta_grid, dtype=float)
    if beta_grid.ndim != 1 or beta_grid.size < 2 or np.any(np.diff(beta_grid) <= 0) or beta_grid[0] <= 0:
        raise ValueError("beta_grid must be strictly increasing and positive")
    if not (0 <= K <= MAX_ITERATIONS):
        raise ValueError(f"K must be in [0, {MAX_ITERATIONS}]")
    logs = [np.zeros(beta_grid.size)]
    argmins, halves = [], []
    for k in range(K):
        v, am, half = _step(ctx, beta_grid, logs[-1], k, theta)
        logs.append(v)
        argmins.append(am)
        halves.append(half)
    return IterationState(ctx, beta_grid, logs, argmins, K, True, halves)


def iterate_subcritical(ctx: ExponentContext, beta_grid=None, K: int = DEFAULT_K_SUBCRITICAL) -> IterationState:
    if ctx.regime is not Regime.SUBCRITICAL:
        raise RegimeError(f"subcritical iteration needs q < n/p, got regime {ctx.regime.value}")
    beta_grid = default_beta_grid() if beta_grid is None else beta_grid
    return _iterate(ctx, beta_grid, K, ctx.iteration_ratio)


def iterate_critical(ctx: ExponentContext, beta_grid=None, K: int = DEFAULT_K_CRITICAL) -> IterationState:
    if ctx.regime is not Regime.CRITICAL:
        raise RegimeError(f"critical iteration needs q = n/p, got regime {ctx.regime.value}")
    beta_grid = default_beta_grid() if beta_grid is None else beta_grid
    state = _iterate(ctx, beta_grid, K, 1.0)
    for k in range(1, K):
        expected = k * state.beta_grid / (k + 1)
        spacing = _grid_spacing(state.beta_grid, expected)
        off = np.abs(state.argmin[k] - expected) > 2 * spacing
        if off.any():
            raise ArithmeticError(f"critical optimizer missed k beta/(k+1) at step {k + 1}")
    return state


def _grid_spacing(grid, x):
    """Local spacing of the (geometric) grid at x, continued geometrically below it."""
    ratio = grid[1] / grid[0]
    return x * (ratio - 1)


# -- closed forms -------------------------------------------------------------

def subcritical_exponent(ctx: ExponentContext, k) -> float:
    """(p-1)q/(q-1) * sum_{j=1}^k ell^j; k = math.inf gives the sharp exponent."""
    ell = ctx.iteration_ratio
    if k == math.inf:
        return ctx.source_exponent * ell / (1 - ell)
    return ctx.source_exponent * ell * (1 - ell**k) / (1 - ell)


def subcritical_closed_form(ctx: ExponentContext, beta, k) -> float:
    if ctx.regime is not Regime.SUBCRITICAL:
        raise RegimeError("closed form applies to q < n/p")
    if k != math.inf and k < 1:
        raise ValueError("k must be >= 1")
    return (2 / np.asarray(beta, dtype=float)) ** subcritical_exponent(ctx, k)


def halving_bound(ctx: ExponentContext, beta, k) -> np.ndarray:
    """Exact k-th iterate of the recursion with alpha fixed at beta/2.

    H_0 = 1 and H_{k+1}(beta) = (2/beta)^a H_k(beta/2)^ell, which solves to
    exp(e_k log(2/beta) + d_k) with d_{k+1} = ell (e_k log 2 + d_k).
    """
    ell, a = ctx.iteration_ratio, ctx.flux_exponent
    e, d = 0.0, 0.0
    for _ in range(int(k)):
        e, d = a + ell * e, ell * (e * math.log(2) + d)
    beta = np.asarray(beta, dtype=float)
    return np.exp(e * np.log(2 / beta) + d)


@dataclass(frozen=True)
class SandwichReport:
    k_max: int
    infimum_above_half: int
    half_above_closed_form: int
    half_above_halving_bound: int
    worst_closed_form_ratio: float

    @property
    def violations(self) -> int:
        return self.infimum_above_half + self.half_above_closed_form


def sandwich(state: IterationState, rtol: float = 1e-12) -> SandwichReport:
    """Count pointwise violations of  infimum <= alpha=beta/2 evaluation <= closed form."""
    b = state.beta_grid
    inf_half = half_cf = half_hb = 0
    worst = 0.0
    for k in range(1, state.K + 1):
        li = state.log_lambda[k]
        lh = state.half_log[k - 1]
        cf = subcritical_exponent(state.ctx, k) * np.log(2 / b)
        hb = np.log(halving_bound(state.ctx, b, k))
        tol = math.log1p(rtol)
        inf_half += int(np.sum(li > lh + tol))
        half_cf += int(np.sum(lh > cf + tol))
        half_hb += int(np.sum(lh > hb + tol))
        worst = max(worst, float(np.max(lh - cf)))
    return SandwichReport(state.K, inf_half, half_cf, half_hb, math.exp(worst))


# -- critical regime ------------------------------------------------------------

def _log_left(k):
    """log of k^k / (k-1)^(k-1), with 0^0 = 1."""
    k = np.asarray(k, dtype=float)
    out = np.zeros_like(k)
    m = k > 1
    km = k[m]
    out[m] = np.log(km) + (km - 1) * np.log1p(1 / (km - 1))
    return out


@dataclass(frozen=True)
class CriticalInterval:
    k: int
    left: float
    right: float

    @property
    def length(self) -> float:
        return self.right - self.left


def interval_endpoints(k_max: int):
    """Arrays (k, left, right, length) for I_k = [k^k/(k-1)^(k-1), (k+1)^(k+1)/k^k), k = 1..k_max."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if k_max > MAX_INTERVAL_K:
        raise ValueError(f"k_max must be <= {MAX_INTERVAL_K}")
    k = np.arange(1, k_max + 1, dtype=float)
    ll = _log_left(k)
    lr = _log_left(k + 1)
    left = np.exp(ll)
    length = left * np.expm1(lr - ll)
    return k.astype(int), left, left + length, length


def interval_table(k_max: int) -> list:
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    ks, left, right, _ = interval_endpoints(k_max)
    return [CriticalInterval(int(k), float(l), float(r)) for k, l, r in zip(ks, left, right)]


def interval_length_limit(k_max: int) -> float:
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    return float(interval_endpoints(k_max)[3][-1])


def interval_index(beta: float) -> int:
    """k with beta in I_k (0 for beta < 1)."""
    if beta < 1:
        return 0
    lb = math.log(beta)
    # log left endpoints are increasing; bracket then bisect
    hi = 2
    while _log_left(np.array([hi]))[0] <= lb:
        hi *= 2
    lo = 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _log_left(np.array([mid]))[0] <= lb:
            lo = mid
        else:
            hi = mid
    return lo


def critical_bound(ctx: ExponentContext, beta, k: int):
    """(k^k / beta^k)^a with a = (p-1) n/(n-p)."""
    beta = np.asarray(beta, dtype=float)
    with np.errstate(over="ignore"):
        return np.exp(ctx.flux_exponent * k * (math.log(k) - np.log(beta)))


def critical_envelope(ctx: ExponentContext, beta: float, k_max: int = ENVELOPE_K) -> tuple:
    """min over 1 <= k <= k_max of (k^k/beta^k)^a, with its minimizing k.

    For beta < 1 the constant 1 is smaller and (1.0, 0) is returned.
    """
    if beta < 1:
        return 1.0, 0
    a = ctx.flux_exponent
    k = np.arange(1, k_max + 1, dtype=float)
    logs = a * k * (np.log(k) - math.log(beta))
    j = int(np.argmin(logs))
    k_int = interval_index(beta)
    if k_int > k_max:
        raise ValueError(f"beta={beta} lies beyond I_{k_max}")
    # the interval containing beta must attain the minimum (ties at shared endpoints)
    if logs[k_int - 1] - logs[j] > 1e-12 * max(1.0, abs(logs[j])):
        raise ArithmeticError(f"envelope minimizer k={j + 1} disagrees with interval I_{k_int}")
    return float(math.exp(logs[k_int - 1])), k_int


@dataclass(frozen=True)
class CriticalSeries:
    r_exp: float
    terms: np.ndarray
    partial_sums: np.ndarray
    converged: bool
    tail_bound: float  # bound on sum beyond the last term, relative to the total
    pre_terms: np.ndarray
    bound_constant: float  # pre_terms[k] <= bound_constant * terms[k]

    @property
    def total(self) -> float:
        return float(self.partial_sums[-1])


def critical_series(ctx: ExponentContext, r_exp: float, K: int = 200) -> CriticalSeries:
    """Partial sums of sum_k k^(r-1) exp(-k a) and the unsimplified terms they dominate."""
    if ctx.regime is not Regime.CRITICAL:
        raise RegimeError("critical series needs q = n/p")
    if r_exp < 1:
        raise ValueError("r_exp must be >= 1")
    a = ctx.flux_exponent
    k = np.arange(1, K + 1, dtype=float)
    log_terms = (r_exp - 1) * np.log(k) - k * a
    terms = np.exp(log_terms)
    sums = np.cumsum(terms)
    total = sums[-1]
    # successive ratios ((k+1)/k)^(r-1) e^-a decrease in k: geometric tail bound
    rho = (1 + 1 / K) ** (r_exp - 1) * math.exp(-a)
    nxt = math.exp((r_exp - 1) * math.log(K + 1) - (K + 1) * a)
    tail = nxt / (1 - rho) / total if rho < 1 else math.inf
    converged = bool(terms[-1] < 1e-14 * total and tail < 1e-14)

    log_pre = (r_exp - 1) * _log_left(k)
    km = k[k > 1]
    log_pre[k > 1] += (km**2 - km) * a * np.log1p(-1 / km)
    pre = np.exp(log_pre)
    const = math.exp(r_exp - 1 + a)
    if np.any(log_pre > log_terms + math.log(const) + 1e-12):
        raise ArithmeticError("unsimplified term exceeds its bound")
    return CriticalSeries(r_exp, terms, sums, converged, tail, pre, const)


def iteration_csv(state: IterationState, k: int, metadata: dict | None = None) -> str:
    """Rows (beta, lambda_k, closed_form_k, envelope) for one iterate."""
    ctx = state.ctx
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["beta", "lambda_k", "closed_form_k", "envelope"])
    lam = state.lambda_k[k]
    for j, b in enumerate(state.beta_grid):
        if ctx.regime is Regime.SUBCRITICAL:
            cf = float(subcritical_closed_form(ctx, b, k)) if k >= 1 else 1.0
            env = min(1.0, float(subcritical_closed_form(ctx, b, math.inf)))
        else:
            cf = float(critical_bound(ctx, b, k)) if k >= 1 else 1.0
            env = critical_envelope(ctx, float(b))[0]
        w.writerow([repr(float(b)), repr(float(lam[j])), repr(cf), repr(env)])
    if metadata:
        buf.write(metadata_block(metadata))
    return buf.getvalue()
