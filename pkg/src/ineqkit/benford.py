"""First-digit (Benford) conformity testing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Iterable, Mapping

import numpy as np

from .specfun import chi2_sf

DIGITS = tuple(range(1, 10))
DOF = 8


class BenfordError(ValueError):
    pass


def first_digit(value) -> int:
    """Leading significant decimal digit of a positive number.

    Works on the decimal representation: ``Decimal`` and ``int`` exactly,
    floats through their shortest round-trip repr (so ``0.3`` gives 3, not
    the 2 of its binary expansion).
    """
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        if not math.isfinite(value):
            raise BenfordError(f"non-finite value {value!r}")
        value = Decimal(repr(float(value)))
    try:
        d = value if isinstance(value, Decimal) else Decimal(value)
    except (InvalidOperation, TypeError, ValueError):
        raise BenfordError(f"not a number: {value!r}") from None
    if not d.is_finite() or d <= 0:
        raise BenfordError(f"first digit needs a positive value, got {value!r}")
    # Decimal strips leading zeros from the coefficient.
    return d.as_tuple().digits[0]


def benford_expected() -> np.ndarray:
    d = np.arange(1, 10, dtype=np.float64)
    return np.log10(1.0 + 1.0 / d)


@dataclass(frozen=True)
class DigitDistribution:
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def frequencies(self) -> np.ndarray:
        c = np.asarray(self.counts, dtype=np.float64)
        return c / c.sum() if self.total else c


def digit_distribution(values: Iterable) -> tuple[DigitDistribution, int]:
    """Digit counts over the positive values, plus the number skipped."""
    counts = [0] * 9
    skipped = 0
    for v in values:
        try:
            positive = v > 0
        except TypeError:
            raise BenfordError(f"not a number: {v!r}") from None
        if not positive:
            skipped += 1
            continue
        counts[first_digit(v) - 1] += 1
    return DigitDistribution(tuple(counts)), skipped


def chi_square_test(observed, expected=None) -> tuple[float, float]:
    """Pearson statistic and p-value with 8 degrees of freedom.

    ``observed`` is a :class:`DigitDistribution` or nine (possibly
    fractional) counts; ``expected`` are nine positive frequencies.
    """
    obs = np.asarray(
        observed.counts if isinstance(observed, DigitDistribution) else observed,
        dtype=np.float64,
    )
    p = benford_expected() if expected is None else np.asarray(expected, dtype=np.float64)
    if obs.shape != (9,) or p.shape != (9,):
        raise BenfordError("need nine observed counts and nine expected frequencies")
    if np.any(p <= 0):
        raise BenfordError("expected frequencies must be positive")
    n = obs.sum()
    if n <= 0:
        raise BenfordError("no observations")
    e = n * p / p.sum()
    stat = float(np.sum((obs - e) ** 2 / e))
    return stat, chi2_sf(stat, DOF)


def mean_absolute_deviation(observed: DigitDistribution, expected=None) -> float:
    p = benford_expected() if expected is None else np.asarray(expected, dtype=np.float64)
    return float(np.mean(np.abs(observed.frequencies - p)))


@dataclass(frozen=True)
class BenfordReport:
    observed: DigitDistribution
    expected: np.ndarray
    chi_square: float
    p_value: float
    mad: float
    alpha: float
    n_skipped: int
    dof: int = DOF

    @property
    def verdict(self) -> str:
        return "consistent" if self.p_value >= self.alpha else "reject"

    def to_dict(self) -> dict:
        return {
            "counts": list(self.observed.counts),
            "total": self.observed.total,
            "observed_freq": [float(f) for f in self.observed.frequencies],
            "expected_freq": [float(f) for f in self.expected],
            "chi_square": self.chi_square,
            "dof": self.dof,
            "p_value": self.p_value,
            "mad": self.mad,
            "alpha": self.alpha,
            "verdict": self.verdict,
            "n_skipped": self.n_skipped,
        }

    def rows(self) -> list[tuple[int, float, float]]:
        return [
            (d, float(o), float(e))
            for d, o, e in zip(DIGITS, self.observed.frequencies, self.expected)
        ]


def _report(values: Iterable, alpha: float) -> BenfordReport:
    dist, skipped = digit_distribution(values)
    if dist.total == 0:
        raise BenfordError("no positive values in group")
    stat, p = chi_square_test(dist)
    return BenfordReport(
        observed=dist,
        expected=benford_expected(),
        chi_square=stat,
        p_value=p,
        mad=mean_absolute_deviation(dist),
        alpha=alpha,
        n_skipped=skipped,
    )


def benford_report(values, per_year: bool = False, alpha: float = 0.05):
    """One report for ``values``, or with ``per_year`` a dict of reports for a
    ``{year: values}`` mapping."""
    if per_year:
        if not isinstance(values, Mapping):
            raise BenfordError("per_year needs a mapping of year -> values")
        return {year: _report(v, alpha) for year, v in sorted(values.items())}
    return _report(values, alpha)
