"""Closed-form capacity bounds, thresholds and scaling laws."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from ._validation import (
    ValidationError,
    check_kappa,
    check_l,
    check_nonnegative,
    check_positive,
    check_positive_int,
)


@dataclass(frozen=True)
class CapacityBounds:
    kappa: float
    l: float
    lower: float
    upper: float
    regime: str
    lower_clamped: float
    l_outside_proven_range: bool

    def to_row(self) -> dict:
        return {"kappa": self.kappa, "l": self.l, "lower_raw": self.lower,
                "lower_clamped": self.lower_clamped, "upper": self.upper}


def _delta_kappa_one(kappa: float) -> int:
    # exact comparison: callers meaning kappa = 1 must pass exactly 1
    return 1 if kappa == 1 else 0


def capacity_bounds(kappa: float, l: float) -> CapacityBounds:
    """Lower ``1/2 - (kappa/4 + l)`` and upper ``1/2 + kappa + l + 2(1 - [kappa=1]) l``.

    The lower bound is meaningful only for ``l < 1/4``; larger ``l`` is
    accepted, flagged, and the clamped lower bound is reported at zero.
    """
    kappa = check_kappa(kappa)
    l = check_l(l)
    delta = _delta_kappa_one(kappa)
    lower = 0.5 - (kappa / 4 + l)
    upper = 0.5 + kappa + l + 2 * (1 - delta) * l
    return CapacityBounds(kappa, l, lower, upper,
                          "kappa_eq_1" if delta else "kappa_lt_1",
                          max(lower, 0.0), l >= 0.25)


def converse_threshold(c_max: float, kappa: float, l: float, b: float, t: int) -> float:
    """``c_max / t**(kappa (1 - l [kappa=1]) + 2l + b)``."""
    c_max = check_positive(c_max, "c_max")
    kappa = check_kappa(kappa)
    l = check_l(l)
    b = check_nonnegative(b, "b")
    t = check_positive_int(t, "t")
    exponent = kappa * (1 - l * _delta_kappa_one(kappa)) + 2 * l + b
    return c_max / t ** exponent


def density_bounds(t: int) -> tuple[float, float]:
    """Saturated packing density band ``(2**-t, 2**(-0.599 t))``."""
    t = check_positive_int(t, "t")
    return 2.0 ** -t, 2.0 ** (-0.599 * t)


def codebook_size(r: float, t: int) -> tuple[float, float]:
    """Codebook size ``2**((t log2 t) r)`` as ``(value, log2 value)``.

    ``value`` overflows to ``inf`` for large exponents; the log form is exact.
    """
    r = check_nonnegative(r, "r")
    t = check_positive_int(t, "t", minimum=2)
    log2m = t * math.log2(t) * r
    try:
        value = 2.0 ** log2m
    except OverflowError:
        value = math.inf
    return value, log2m


def receptor_load(f_k_max, a_max, v_max, c_avg, lambda_max) -> float:
    """Worst-case receptor mean scale ``F (A_max v_max C_avg + lambda_max)``."""
    return f_k_max * (a_max * v_max * c_avg + lambda_max)


def type1_bound(f_k_max: int, a_max: float, v_max: float, c_avg: float, lambda_max: float,
                t: int, psi_t: float) -> float:
    """Chebyshev bound ``7 (A^4 + A^3 + A^2 + A) / (t psi_t^2)`` on the type I error."""
    f_k_max = check_positive_int(f_k_max, "f_k_max")
    for name, val in (("a_max", a_max), ("v_max", v_max), ("c_avg", c_avg),
                      ("lambda_max", lambda_max), ("psi_t", psi_t)):
        check_positive(val, name)
    t = check_positive_int(t, "t")
    big_a = receptor_load(f_k_max, a_max, v_max, c_avg, lambda_max)
    u = big_a ** 4 + big_a ** 3 + big_a ** 2 + big_a
    return 7 * u / (t * psi_t ** 2)


def type2_bound(f_k_max: int, a_max: float, v_max: float, c_avg: float, lambda_max: float,
                t: int, psi_t: float) -> float:
    """Type II bound: the cross-term Chebyshev bound plus the type I bound."""
    big_a = receptor_load(f_k_max, a_max, v_max, c_avg, lambda_max)
    cross = 16 * c_avg ** 2 * (f_k_max * a_max * v_max) ** 2 * big_a / (t * psi_t ** 2)
    return cross + type1_bound(f_k_max, a_max, v_max, c_avg, lambda_max, t, psi_t)


BOUNDS_CSV_FIELDS = ("kappa", "l", "lower_raw", "lower_clamped", "upper")


def bounds_grid(kappas, ls) -> list[CapacityBounds]:
    kappas, ls = list(kappas), list(ls)
    if not kappas or not ls:
        raise ValidationError("kappa and l grids must be non-empty")
    return [capacity_bounds(k, l) for k in kappas for l in ls]


def fmt(x) -> str:
    """Fixed 12-significant-digit text for CSV cells; ``None`` becomes empty."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".12g")


def write_bounds_csv(kappas, ls, path) -> Path:
    rows = bounds_grid(kappas, ls)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BOUNDS_CSV_FIELDS)
        for cb in rows:
            r = cb.to_row()
            w.writerow([fmt(r[f]) for f in BOUNDS_CSV_FIELDS])
    return path
