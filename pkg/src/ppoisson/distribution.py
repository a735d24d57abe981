"""Distribution functions, Lebesgue norms and the empirical level-set constant."""

from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .divergence import ProbeResult, divergence_probe
from .exponents import ExponentContext
from .profiles import RadialProfile, Sampled, metadata_block
from .quadrature import QuadratureConfig, panel_integrals

# smallest radius reached by level-set root solves; log r is bisected on [log R_FLOOR, 0]
R_FLOOR = 1e-300
ROOT_TOL = 1e-12
SCAN_POINTS = 4096
INNER_RADIUS = 1e-8
CLOSED_FORM_SPLIT = 1e-40


class DivergedIntegralError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Diverged:
    """Outcome of a norm whose defining integral does not converge."""

    probe: ProbeResult

    def __bool__(self):
        return False


@dataclass(frozen=True, eq=False)
class DistributionCurve:
    heights: np.ndarray
    measures: np.ndarray
    total_measure: float

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float)
        m = np.asarray(self.measures, dtype=float)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "measures", m)
        if h.shape != m.shape or h.ndim != 1:
            raise ValueError("heights and measures must be 1-d of equal length")
        if np.any(h < 0) or np.any(np.diff(h) <= 0):
            raise ValueError("heights must be nonnegative and strictly increasing")
        if np.any(m < 0) or np.any(np.diff(m) > 0):
            raise ValueError("measures must be nonnegative and nonincreasing")
        if m.size and m[0] > self.total_measure * (1 + 1e-12):
            raise ValueError("measure exceeds the ambient measure")

    def normalized(self, height_scale: float = 1.0) -> "DistributionCurve":
        """View with unit ambient measure and heights divided by ``height_scale``."""
        return DistributionCurve(self.heights / height_scale, self.measures / self.total_measure, 1.0)

    def to_csv(self, metadata: dict | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "lambda"])
        for a, m in zip(self.heights, self.measures):
            w.writerow([repr(float(a)), repr(float(m))])
        if metadata:
            buf.write(metadata_block(metadata))
        return buf.getvalue()


# -- level sets -------------------------------------------------------------

def _scan_grid(u: RadialProfile) -> np.ndarray:
    r = np.geomspace(R_FLOOR, 1.0, SCAN_POINTS)
    if isinstance(u, Sampled):
        r = np.union1d(r, u.radii)
    return r


def monotonicity(u: RadialProfile) -> int:
    """-1 if |u| is nonincreasing in r on the scan grid, +1 if nondecreasing, 0 otherwise."""
    if isinstance(u, Sampled):
        if "monotonicity" not in u._cache:
            u._cache["monotonicity"] = _monotonicity(u)
        return u._cache["monotonicity"]
    return _monotonicity_closed(u)


@functools.lru_cache(maxsize=256)
def _monotonicity_closed(u) -> int:
    return _monotonicity(u)


def _monotonicity(u: RadialProfile) -> int:
    la = u.log_abs(_scan_grid(u))
    d = np.diff(la)
    d = d[np.isfinite(d)]
    if np.all(d <= 1e-14):
        return -1
    if np.all(d >= -1e-14):
        return 1
    return 0


def _bisect_log(u: RadialProfile, log_alpha: np.ndarray, lo: np.ndarray, hi: np.ndarray, above_at_lo: bool):
    """Vectorized bisection in t = log r for log|u(e^t)| = log_alpha.

    ``above_at_lo`` says on which side of the crossing |u| exceeds alpha.
    """
    lo, hi = lo.astype(float).copy(), hi.astype(float).copy()
    while np.any(hi - lo > ROOT_TOL):
        mid = 0.5 * (lo + hi)
        above = u.log_abs(np.exp(mid)) > log_alpha
        move_lo = above if above_at_lo else ~above
        lo = np.where(move_lo, mid, lo)
        hi = np.where(move_lo, hi, mid)
    return 0.5 * (lo + hi)


def _measure_root(u: RadialProfile, heights: np.ndarray, omega: float, n: int, mono: int) -> np.ndarray:
    out = np.zeros(heights.size)
    t_lo, t_hi = math.log(R_FLOOR), 0.0
    with np.errstate(divide="ignore"):
        la = np.log(heights)
    end_lo = float(u.log_abs(np.array([R_FLOOR]))[0])
    end_hi = float(u.log_abs(np.array([1.0]))[0])
    if mono < 0:
        # {|u| > alpha} = [0, r_alpha)
        full = la < end_hi
        none = la >= end_lo
        mid = ~(full | none)
        out[full] = omega
        if mid.any():
            t = _bisect_log(u, la[mid], np.full(mid.sum(), t_lo), np.full(mid.sum(), t_hi), True)
            out[mid] = omega * np.exp(n * t)
    else:
        # {|u| > alpha} = (r_alpha, 1]
        full = la < end_lo
        none = la >= end_hi
        mid = ~(full | none)
        out[full] = omega
        if mid.any():
            t = _bisect_log(u, la[mid], np.full(mid.sum(), t_lo), np.full(mid.sum(), t_hi), False)
            out[mid] = omega * (1 - np.exp(n * t))
    return out


def _measure_levelset(u: RadialProfile, heights: np.ndarray, omega: float, n: int) -> np.ndarray:
    r = _scan_grid(u)
    t = np.log(r)
    la_grid = u.log_abs(r)
    out = np.zeros(heights.size)
    for j, alpha in enumerate(heights):
        lalpha = math.log(alpha) if alpha > 0 else -math.inf
        above = la_grid > lalpha
        if not above.any():
            continue
        if above.all():
            out[j] = omega
            continue
        flips = np.nonzero(above[1:] != above[:-1])[0]
        roots = _bisect_log(
            u, np.full(flips.size, lalpha), t[flips], t[flips + 1], True
        ) if flips.size else np.array([])
        # re-bisect crossings that go from below to above with the opposite orientation
        ups = ~above[flips]
        if ups.any():
            roots[ups] = _bisect_log(u, np.full(ups.sum(), lalpha), t[flips[ups]], t[flips[ups] + 1], False)
        bounds = np.concatenate([[-np.inf], roots, [0.0]])
        # intervals alternate starting with the state at the left end of the grid
        state = bool(above[0])
        total = 0.0
        for a_t, b_t in zip(bounds[:-1], bounds[1:]):
            if state:
                total += math.exp(n * b_t) - (math.exp(n * a_t) if np.isfinite(a_t) else 0.0)
            state = not state
        out[j] = omega * total
    return out


def distribution_function(
    u: RadialProfile,
    heights,
    ctx: ExponentContext,
    *,
    method: str = "auto",
) -> DistributionCurve:
    """lambda(alpha) = m({|u| > alpha}) on the unit ball.

    ``method``: "root" (single level crossing, needs |u| monotone in r),
    "levelset" (scan for all crossings and integrate r^{n-1} over the
    super-level set), or "auto".
    """
    heights = np.asarray(heights, dtype=float)
    if np.any(heights < 0) or np.any(np.diff(heights) <= 0):
        raise ValueError("heights must be nonnegative and increasing")
    omega, n = ctx.ambient_measure, ctx.n
    if method == "auto":
        mono = monotonicity(u)
        method = "root" if mono else "levelset"
    if method == "root":
        mono = monotonicity(u)
        if mono == 0:
            raise ValueError("root method needs |u| monotone in r")
        meas = _measure_root(u, heights, omega, n, mono)
    elif method == "levelset":
        meas = _measure_levelset(u, heights, omega, n)
    else:
        raise ValueError(f"unknown method {method!r}")
    # guard against last-bit noise so the curve stays monotone
    meas = np.minimum.accumulate(np.clip(meas, 0.0, omega))
    return DistributionCurve(heights, meas, omega)


def sup_abs(u: RadialProfile) -> float:
    if u.singular_at_origin:
        return math.inf
    return float(np.exp(np.max(u.log_abs(_scan_grid(u)))))


def height_grid(u: RadialProfile, size: int = 2048, r_inner: float = INNER_RADIUS) -> np.ndarray:
    """0 followed by a geometric grid of heights.

    Bounded profiles get 1e-4 to 10 times sup|u|. Unbounded ones run from
    1e-4 |u(1/2)| to 10 times |u| at the innermost resolved radius (the grid
    start for sampled profiles), leaving the rest to the power-law tail.
    """
    scale = sup_abs(u)
    if math.isfinite(scale):
        lo, hi = 1e-4 * scale, 10 * scale
    else:
        r0 = max(r_inner, u.grid_min) if isinstance(u, Sampled) else r_inner
        lo = 1e-4 * abs(float(u(np.array([0.5]))[0]))
        hi = 10 * math.exp(float(u.log_abs(np.array([r0]))[0]))
    return np.concatenate([[0.0], np.geomspace(lo, hi, size - 1)])


# -- norms ------------------------------------------------------------------

def _power_integral_to_origin(u: RadialProfile, r_exp: float, n: int, cutoff: float) -> float:
    """int_0^cutoff |u|^r rho^{n-1} d rho under a power-law model of |u| near 0."""
    r1, r2 = cutoff, cutoff * 1.5
    l1, l2 = u.log_abs(np.array([r1, r2]))
    if not np.isfinite(l1):
        return 0.0
    k = (l2 - l1) / math.log(r2 / r1)
    e = k * r_exp + n
    if e <= 0:
        raise DivergedIntegralError(f"|u|^r rho^(n-1) ~ rho^{e - 1:.6g} near 0")
    return math.exp(r_exp * l1 + n * math.log(r1)) / e


def lebesgue_norm(
    u: RadialProfile,
    r_exp: float,
    ctx: ExponentContext,
    cfg: QuadratureConfig | None = None,
    *,
    deltas=None,
) -> float | Diverged:
    """(int_ball |u|^r)^{1/r}; ``Diverged`` when the origin probe detects divergence."""
    if r_exp < 1:
        raise ValueError("r_exp must be >= 1")
    cfg = cfg or QuadratureConfig()
    n = ctx.n
    if u.singular_at_origin:
        probe = divergence_probe(u, r_exp, ctx, deltas, cfg)
        if probe.diverges:
            return Diverged(probe)
    cutoff = cfg.origin_cutoff
    if isinstance(u, Sampled):
        cutoff = max(cutoff, u.grid_min)
        edges = np.log(u.radii[u.radii >= cutoff])
    else:
        if u.singular_at_origin:
            # closed forms evaluate anywhere; go deep so the power-law head is exact to rounding
            cutoff = min(cutoff, CLOSED_FORM_SPLIT)
        edges = np.linspace(math.log(cutoff), 0.0, 513)

    def integrand(t):
        with np.errstate(divide="ignore"):
            return np.exp(r_exp * u.log_abs(np.exp(t)) + n * t)

    body = float(panel_integrals(integrand, edges, cfg).sum())
    try:
        head = _power_integral_to_origin(u, r_exp, n, cutoff)
    except DivergedIntegralError:
        return Diverged(divergence_probe(u, r_exp, ctx, deltas, cfg))
    return (ctx.sphere_area * (body + head)) ** (1.0 / r_exp)


def layer_cake_norm(curve: DistributionCurve, r_exp: float) -> float:
    """(int_0^inf r alpha^{r-1} lambda(alpha) d alpha)^{1/r} from sampled lambda.

    Trapezoid in the variable alpha^r on the height grid; below the first
    height lambda is taken constant, above the last a power law fitted on the
    top decade is integrated exactly.
    """
    if r_exp < 1:
        raise ValueError("r_exp must be >= 1")
    h, m = curve.heights, curve.measures
    if h.size == 0:
        return 0.0
    s = h**r_exp
    body = float(np.sum(0.5 * (m[1:] + m[:-1]) * np.diff(s)))
    body += m[0] * s[0]
    tail = 0.0
    if m[-1] > 0:
        top = (h >= h[-1] / 10) & (m > 0)
        if top.sum() < 2:
            raise DivergedIntegralError("cannot fit the distribution tail")
        slope, icpt = np.polyfit(np.log(h[top]), np.log(m[top]), 1)
        decay = -slope
        if decay <= r_exp:
            raise DivergedIntegralError(
                f"distribution decays like alpha^-{decay:.4g}, too slowly for r={r_exp}"
            )
        # int_H^inf r a^{r-1} C a^{-decay} da
        tail = r_exp * math.exp(icpt) * h[-1] ** (r_exp - decay) / (decay - r_exp)
    return (body + tail) ** (1.0 / r_exp)


# -- level-set estimate ratio --------------------------------------------

def lemma1_ratio(lam_beta, lam_alpha, alpha, beta, ctx: ExponentContext, f_norm: float):
    """lambda(beta)^{(n-p)/n} (beta-alpha)^{p-1} / (||f||_q lambda(alpha)^{(q-1)/q})."""
    n, p, q = ctx.n, ctx.p, ctx.q
    return lam_beta ** ((n - p) / n) * (beta - alpha) ** (p - 1) / (f_norm * lam_alpha ** ((q - 1) / q))


def lemma1_empirical_constant(
    u: RadialProfile,
    f: RadialProfile,
    ctx: ExponentContext,
    pairs,
    *,
    normalized: bool = False,
    refine: bool = False,
    f_norm: float | None = None,
    cfg: QuadratureConfig | None = None,
) -> float:
    """Smallest C for which the level-set estimate holds on every (alpha, beta) pair.

    With ``normalized=True`` measures are divided by m(ball), the unit-measure
    view used by the iteration comparison. With ``refine=True`` the best pairs
    seed a bounded local maximization over the region the pairs span
    (alpha in [min alpha, max alpha], alpha < beta <= max beta), so the result
    bounds the ratio on any denser grid of that region.
    """
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if pairs.size == 0:
        raise ValueError("no (alpha, beta) pairs")
    alpha, beta = pairs[:, 0], pairs[:, 1]
    if np.any(alpha < 0) or np.any(beta <= alpha):
        raise ValueError("pairs must satisfy beta > alpha >= 0")
    if f_norm is None:
        f_norm = lebesgue_norm(f, ctx.q, ctx, cfg)
    if isinstance(f_norm, Diverged) or not (f_norm > 0 and math.isfinite(f_norm)):
        raise ValueError("||f||_q must be finite and positive")
    heights = np.unique(np.concatenate([alpha, beta]))
    curve = distribution_function(u, heights, ctx)
    lam = curve.measures / (ctx.ambient_measure if normalized else 1.0)
    la = lam[np.searchsorted(heights, alpha)]
    lb = lam[np.searchsorted(heights, beta)]
    if np.any(la <= 0):
        raise ValueError("lambda_u(alpha) = 0 for some pair")
    ratios = lemma1_ratio(lb, la, alpha, beta, ctx, f_norm)
    best = float(np.max(ratios))
    if refine:
        scale = ctx.ambient_measure if normalized else 1.0
        best = max(best, _refine_lemma1(u, ctx, f_norm, scale, pairs, ratios))
    return best


def _refine_lemma1(u, ctx, f_norm, scale, pairs, ratios, starts: int = 6) -> float:
    a_lo, a_hi = float(pairs[:, 0].min()), float(pairs[:, 0].max())
    b_hi = float(pairs[:, 1].max())

    def unpack(x):
        beta = x[1]
        a_top = min(a_hi, beta)
        alpha = a_lo + x[0] * max(a_top - a_lo, 0.0)
        return alpha, beta

    def neg_ratio(x):
        alpha, beta = unpack(x)
        if beta <= alpha:
            return 0.0
        lam = distribution_function(u, np.array([alpha, beta]) if alpha < beta else np.array([alpha]), ctx).measures / scale
        if lam[0] <= 0:
            return 0.0
        return -float(lemma1_ratio(lam[1], lam[0], alpha, beta, ctx, f_norm))

    best = 0.0
    order = np.argsort(ratios)[::-1][:starts]
    for i in order:
        alpha, beta = pairs[i]
        a_top = min(a_hi, beta)
        t = 0.0 if a_top <= a_lo else (alpha - a_lo) / (a_top - a_lo)
        x0 = np.array([min(t, 1 - 1e-9), beta])
        bounds = [(0.0, 1 - 1e-9), (max(1e-300, a_lo), b_hi)]
        res = optimize.minimize(neg_ratio, x0, method="L-BFGS-B", bounds=bounds, options={"ftol": 1e-15, "gtol": 1e-14})
        best = max(best, -float(res.fun), -neg_ratio(x0))
        # polish along beta at the optimizer's alpha fraction, bounded 1-d search
        tb = res.x[0]
        r1 = optimize.minimize_scalar(
            lambda b: neg_ratio(np.array([tb, b])), bounds=(bounds[1][0], b_hi), method="bounded", options={"xatol": 1e-12 * b_hi}
        )
        best = max(best, -float(r1.fun))
    return best


def pair_grid(alpha_max: float, beta_max: float, size: int) -> np.ndarray:
    """size x size grid: alpha in [0, alpha_max], beta in (0, beta_max], pairs with beta > alpha."""
    a = np.linspace(0.0, alpha_max, size)
    b = np.linspace(beta_max / size, beta_max, size)
    A, B = np.meshgrid(a, b, indexing="ij")
    keep = B > A
    return np.column_stack([A[keep], B[keep]])
