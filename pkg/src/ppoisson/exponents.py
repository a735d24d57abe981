"""Parameter validation and derived exponents for the p-Poisson problem on the unit ball."""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

CRITICAL_RTOL = 1e-12


class ContextError(ValueError):
    """Raised when (n, p, q) violate 1 < p < n, n >= 3, q > 1."""


class DualityFloorWarning(UserWarning):
    pass


class Regime(str, enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True)
class ExponentContext:
    n: int
    p: float
    q: float
    sobolev_conjugate: float
    iteration_ratio: float
    sharp_exponent: float  # math.inf unless subcritical
    duality_floor: float
    regime: Regime
    ambient_measure: float
    sphere_area: float
    below_duality_floor: bool = field(default=False)

    @property
    def flux_exponent(self) -> float:
        """(p-1) n / (n-p), the power of 1/(beta-alpha) in the level-set recursion."""
        return (self.p - 1) * self.n / (self.n - self.p)

    @property
    def source_exponent(self) -> float:
        """(p-1) q / (q-1), so that flux_exponent = source_exponent * iteration_ratio."""
        return (self.p - 1) * self.q / (self.q - 1)

    def sharp_exponent_via_ratio(self) -> float:
        ell = self.iteration_ratio
        if ell >= 1:
            return math.inf
        return self.source_exponent * ell / (1 - ell)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value
        if math.isinf(self.sharp_exponent):
            d["sharp_exponent"] = None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExponentContext":
        d = json.loads(text)
        return validate_context(d["n"], d["p"], d["q"], warn=False)


def _is_integer(n) -> bool:
    if isinstance(n, bool):
        return False
    if isinstance(n, int):
        return True
    return isinstance(n, float) and n.is_integer()


def validate_context(n, p, q, *, warn: bool = True) -> ExponentContext:
    for name, value in (("n", n), ("p", p), ("q", q)):
        try:
            fv = float(value)
        except (TypeError, ValueError):
            raise ContextError(f"{name}={value!r} is not a number") from None
        if not math.isfinite(fv):
            raise ContextError(f"{name}={value!r} is not finite")
    if not _is_integer(n):
        raise ContextError(f"n={n!r} must be an integer")
    n = int(n)
    p = float(p)
    q = float(q)
    if n < 3:
        raise ContextError(f"n={n} violates n >= 3")
    if p <= 1:
        raise ContextError(f"p={p} violates 1 < p")
    if p >= n:
        raise ContextError(f"p={p} violates p < n={n}")
    if q <= 1:
        raise ContextError(f"q={q} violates q > 1")

    crit_q = n / p
    if abs(q - crit_q) <= CRITICAL_RTOL * crit_q:
        regime = Regime.CRITICAL
        ell = 1.0
    else:
        regime = Regime.SUBCRITICAL if q < crit_q else Regime.SUPERCRITICAL
        ell = (q - 1) * n / (q * (n - p))

    if regime is Regime.SUBCRITICAL:
        sharp = (p - 1) * q * n / (n - p * q)
    else:
        sharp = math.inf

    floor = n * p / (n * p - n + p)
    below = q < floor
    if below and warn:
        warnings.warn(
            f"q={q} is below the duality floor {floor:.6g}; the weak pairing is not "
            "guaranteed, radial solutions are still computed",
            DualityFloorWarning,
            stacklevel=2,
        )

    omega = unit_ball_volume(n)
    return ExponentContext(
        n=n,
        p=p,
        q=q,
        sobolev_conjugate=n * p / (n - p),
        iteration_ratio=ell,
        sharp_exponent=sharp,
        duality_floor=floor,
        regime=regime,
        ambient_measure=omega,
        sphere_area=n * omega,
        below_duality_floor=below,
    )
