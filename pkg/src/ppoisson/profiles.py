"""Radial functions on (0, 1]: closed-form power laws and grid-sampled profiles."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator, make_interp_spline

MIN_NODES = 64


@dataclass(frozen=True)
class PowerLawAffine:
    """r -> coefficient * (r**exponent + offset)."""

    coefficient: float
    exponent: float
    offset: float = 0.0

    @classmethod
    def constant(cls, value: float) -> "PowerLawAffine":
        return cls(float(value), 0.0, 0.0)

    @property
    def singular_at_origin(self) -> bool:
        return self.exponent < 0 and self.coefficient != 0

    @property
    def boundary_value(self) -> float:
        return self.coefficient * (1.0 + self.offset)

    @property
    def is_pure_power(self) -> bool:
        return self.offset == 0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.coefficient * (r**self.exponent + self.offset)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        if self.exponent == 0:
            return np.zeros_like(r)
        return self.coefficient * self.exponent * r ** (self.exponent - 1)

    def log_abs(self, r):
        """log|u(r)| computed without overflow for tiny r."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            logr = np.log(r)
            if self.offset == 0:
                return math.log(abs(self.coefficient)) + self.exponent * logr if self.coefficient else np.full_like(r, -np.inf)
            lead = self.exponent * logr
            # |r^s + c| = r^s |1 + c r^{-s}| when r^s dominates
            big = lead > 30
            out = np.empty_like(r)
            out[big] = lead[big] + np.log(np.abs(1 + self.offset * np.exp(-lead[big])))
            small = ~big
            out[small] = np.log(np.abs(np.exp(lead[small]) + self.offset))
        return out + (math.log(abs(self.coefficient)) if self.coefficient else -np.inf)

    def scaled(self, t: float) -> "PowerLawAffine":
        return PowerLawAffine(self.coefficient * t, self.exponent, self.offset)

    def to_json(self) -> str:
        return json.dumps(
            {"form": "power_law_affine", "coefficient": self.coefficient, "exponent": self.exponent, "offset": self.offset},
            sort_keys=True,
        )


@dataclass(frozen=True, eq=False)
class Sampled:
    """Grid-sampled radial function with monotone-cubic interpolation in log r.

    When derivative samples are present the value interpolant is the cubic
    Hermite spline through (value, derivative) pairs; below the first node the
    derivative is continued as a power law and integrated.
    """

    radii: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "values", v)
        if self.derivatives is not None:
            object.__setattr__(self, "derivatives", np.asarray(self.derivatives, dtype=float))
        if r.ndim != 1 or r.size < MIN_NODES:
            raise ValueError(f"sampled profile needs at least {MIN_NODES} nodes, got {r.size}")
        if v.shape != r.shape or (self.derivatives is not None and self.derivatives.shape != r.shape):
            raise ValueError("radii, values and derivatives must have equal length")
        if not np.all(np.diff(r) > 0):
            raise ValueError("radii must be strictly increasing")
        if r[0] <= 0 or r[-1] > 1:
            raise ValueError("radii must lie in (0, 1]")
        if not (np.isfinite(v).all() and (self.derivatives is None or np.isfinite(self.derivatives).all())):
            raise ValueError("sampled data must be finite")

    # -- interpolants -----------------------------------------------------
    @property
    def _t(self):
        return np.log(self.radii)

    def _value_interp(self):
        if "value" not in self._cache:
            if self.derivatives is not None:
                self._cache["value"] = CubicHermiteSpline(self._t, self.values, self.derivatives * self.radii)
            else:
                self._cache["value"] = PchipInterpolator(self._t, self.values)
        return self._cache["value"]

    def _derivative_interp(self):
        if "deriv" not in self._cache:
            d = self.derivatives
            if d is None:
                interp = self._value_interp().derivative()
                self._cache["deriv"] = ("dt", interp)
            elif np.all(d > 0) or np.all(d < 0):
                sign = 1.0 if d[0] > 0 else -1.0
                spl = make_interp_spline(self._t, np.log(np.abs(d)), k=5)
                self._cache["deriv"] = ("loglog", (sign, spl))
            else:
                self._cache["deriv"] = ("lin", make_interp_spline(self._t, d, k=5))
        return self._cache["deriv"]

    def _origin_model(self):
        """(coefficient, exponent) of the power law continuing the data below the grid."""
        if "origin" not in self._cache:
            r0, r1 = self.radii[0], self.radii[1]
            if self.derivatives is not None:
                c, k = _two_point_power(r0, self.derivatives[0], r1, self.derivatives[1])
            else:
                c, k = _two_point_power(r0, self.values[0], r1, self.values[1])
            self._cache["origin"] = (c, k)
        return self._cache["origin"]

    def value_origin_model(self):
        """(coefficient, exponent) of a power law through the first two value samples."""
        return _two_point_power(self.radii[0], self.values[0], self.radii[1], self.values[1])

    @property
    def singular_at_origin(self) -> bool:
        c, k = self._origin_model()
        if c == 0:
            return False
        if self.derivatives is not None:
            return k < -1 - 1e-9
        return k < -1e-9

    @property
    def boundary_value(self) -> float:
        return float(self.values[-1]) if self.radii[-1] == 1.0 else float(self(1.0))

    @property
    def grid_min(self) -> float:
        return float(self.radii[0])

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inside = r >= self.radii[0]
        out[inside] = self._value_interp()(np.log(np.minimum(r[inside], self.radii[-1])))
        below = ~inside
        if below.any():
            r0, v0 = self.radii[0], self.values[0]
            c, k = self._origin_model()
            rb = r[below]
            if self.derivatives is not None:
                # u(r) = u(r0) - int_r^{r0} c s^k ds
                if abs(k + 1) < 1e-12:
                    out[below] = v0 - c * np.log(r0 / rb)
                else:
                    out[below] = v0 - c * (r0 ** (k + 1) - rb ** (k + 1)) / (k + 1)
            else:
                out[below] = c * rb**k
        return out

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        kind, interp = self._derivative_interp()
        t = np.log(np.clip(r, self.radii[0], self.radii[-1]))
        if kind == "dt":
            out = interp(t) / np.exp(t)
        elif kind == "loglog":
            sign, spl = interp
            out = sign * np.exp(spl(t))
        else:
            out = interp(t)
        below = r < self.radii[0]
        if below.any():
            c, k = self._origin_model()
            if self.derivatives is not None:
                out[below] = c * r[below] ** k
            else:
                out[below] = c * k * r[below] ** (k - 1)
        return out

    def log_abs(self, r):
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self(r)))

    def scaled(self, t: float) -> "Sampled":
        d = None if self.derivatives is None else self.derivatives * t
        return Sampled(self.radii.copy(), self.values * t, d)

    # -- serialization ----------------------------------------------------
    def to_csv(self, metadata: dict | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "value", "derivative"])
        d = self.derivatives if self.derivatives is not None else [None] * self.radii.size
        for r, v, dv in zip(self.radii, self.values, d):
            w.writerow([repr(float(r)), repr(float(v)), "" if dv is None else repr(float(dv))])
        if metadata:
            buf.write(metadata_block(metadata))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Sampled":
        rows = []
        reader = csv.reader(io.StringIO(text))
        header = None
        for lineno, row in enumerate(reader, start=1):
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = [h.strip() for h in row]
                if header[:2] != ["r", "value"]:
                    raise CSVFormatError(lineno, f"expected header 'r,value[,derivative]', got {row}")
                continue
            try:
                vals = [float(x) if x.strip() else None for x in row[: len(header)]]
            except ValueError:
                raise CSVFormatError(lineno, f"non-numeric field in {row}") from None
            if len(vals) < 2 or vals[0] is None or vals[1] is None:
                raise CSVFormatError(lineno, f"missing r or value in {row}")
            rows.append((lineno, vals))
        if header is None or not rows:
            raise CSVFormatError(0, "no data rows")
        radii = np.array([v[0] for _, v in rows])
        values = np.array([v[1] for _, v in rows])
        derivs = None
        if len(header) > 2 and all(len(v) > 2 and v[2] is not None for _, v in rows):
            derivs = np.array([v[2] for _, v in rows])
        bad = np.nonzero(np.diff(radii) <= 0)[0]
        if bad.size:
            raise CSVFormatError(rows[bad[0] + 1][0], "radii must be strictly increasing")
        try:
            return cls(radii, values, derivs)
        except ValueError as exc:
            raise CSVFormatError(rows[0][0], str(exc)) from None


class CSVFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


RadialProfile = PowerLawAffine | Sampled


def profile_from_json(text: str) -> PowerLawAffine:
    d = json.loads(text)
    if d.get("form") != "power_law_affine":
        raise ValueError(f"unknown profile form {d.get('form')!r}")
    return PowerLawAffine(float(d["coefficient"]), float(d["exponent"]), float(d.get("offset", 0.0)))


def metadata_block(metadata: dict) -> str:
    lines = json.dumps(metadata, sort_keys=True, indent=1).splitlines()
    return "".join(f"# {line}\n" for line in lines)


def _two_point_power(r0, v0, r1, v1):
    if v0 == 0 and v1 == 0:
        return 0.0, 0.0
    if v0 == 0 or v1 == 0 or (v0 > 0) != (v1 > 0):
        return float(v0), 0.0
    k = math.log(v1 / v0) / math.log(r1 / r0)
    return float(v0 / r0**k), float(k)
