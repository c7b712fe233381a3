"""Inequality and concentration indices for a vector of nonnegative values.

Theil is computed as ``ln N - H`` with ``H`` the share entropy. The
alternative form with a leading ``1/N`` factor on the entropy sum does not
agree with the published tables and is not used.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike


class IndicesError(ValueError):
    pass


def _as_values(values: ArrayLike) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise IndicesError("empty value vector")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise IndicesError("values must be finite and nonnegative")
    if x.sum() <= 0:
        raise IndicesError("values sum to zero")
    return x


@dataclass(frozen=True)
class ShareVector:
    shares: np.ndarray
    n: int


def shares(values: ArrayLike) -> ShareVector:
    x = _as_values(values)
    return ShareVector(x / x.sum(), x.size)


def entropy(s: ShareVector) -> float:
    p = s.shares[s.shares > 0]
    return float(-np.sum(p * np.log(p)))


def max_entropy(n: int) -> float:
    return float(np.log(n))


def theil_from_entropy(n: int, h: float) -> float:
    return max_entropy(n) - h


def theil(s: ShareVector) -> float:
    return theil_from_entropy(s.n, entropy(s))


def hhi(values: ArrayLike, top_k: int = 50) -> float:
    """Sum of squared shares of the ``top_k`` largest values.

    Shares are relative to the total over *all* values, not the top-k subtotal.
    """
    if top_k < 1:
        raise IndicesError("top_k must be >= 1")
    x = _as_values(values)
    s = np.sort(x)[::-1][:top_k] / x.sum()
    return float(np.sum(s * s))


def hhi_normalized(hhi_value: float, n: int) -> float:
    """Normalized HHI with ``n`` the full number of units in the scope."""
    if n < 2:
        raise IndicesError("normalized HHI needs n >= 2")
    if not 0.0 <= hhi_value <= 1.0:
        raise IndicesError("hhi must lie in [0, 1]")
    return (hhi_value - 1.0 / n) / (1.0 - 1.0 / n)


@dataclass(frozen=True)
class LorenzCurve:
    fractions: np.ndarray  # j / N, j = 0..N
    cumulative: np.ndarray  # L_j
    delta: np.ndarray  # L_j - j / N

    @property
    def n(self) -> int:
        return self.fractions.size - 1

    def rows(self) -> list[tuple[int, float, float, float]]:
        return [
            (j, float(f), float(c), float(d))
            for j, (f, c, d) in enumerate(zip(self.fractions, self.cumulative, self.delta))
        ]


def lorenz(values: ArrayLike) -> LorenzCurve:
    x = _as_values(values)
    n = x.size
    y = np.sort(x, kind="stable")
    cum = np.concatenate([[0.0], np.cumsum(y)]) / y.sum()
    cum[-1] = 1.0
    frac = np.arange(n + 1) / n
    delta = cum - frac
    # Rounding can leave +1e-17 where the exact value is 0.
    delta = np.minimum(delta, 0.0)
    return LorenzCurve(frac, cum, delta)


def gini(values: ArrayLike) -> float:
    """Mean absolute pairwise difference over twice the mean.

    Uses the sorted closed form of ``sum_i sum_j |y_i - y_j| / (2 N^2 mean)``.
    """
    x = _as_values(values)
    n = x.size
    y = np.sort(x)
    weights = 2.0 * np.arange(1, n + 1) - n - 1
    # The weights sum to zero, so shifting by y[0] is exact and makes a
    # constant vector give exactly 0.
    return float(max(np.dot(weights, y - y[0]) / (n * y.sum()), 0.0))


def gini_trapezoid(curve: LorenzCurve) -> float:
    """One minus twice the trapezoid area under the Lorenz curve."""
    n = curve.n
    area = np.sum(curve.cumulative[1:] + curve.cumulative[:-1]) / (2.0 * n)
    return float(1.0 - 2.0 * area)


def delta_lorenz_peak(curve: LorenzCurve) -> tuple[float, float]:
    """``(j/N, |dL_j|)`` at the largest gap to equality; ties go to smallest j."""
    mag = np.abs(curve.delta)
    j = int(np.argmax(mag))
    if mag[j] == 0:
        return 0.0, 0.0
    return float(curve.fractions[j]), float(mag[j])


@dataclass(frozen=True)
class IndexReport:
    n: int
    entropy: float
    max_entropy: float
    theil: float
    hhi: float
    hhi_normalized: float | None
    gini: float
    gini_trapezoid: float
    delta_lorenz_peak_fraction: float
    delta_lorenz_peak_magnitude: float
    delta_lorenz_peak_lorenz: float
    top_k: int

    def to_dict(self) -> dict:
        return asdict(self)


REPORT_ROWS: Sequence[str] = (
    "n",
    "entropy",
    "max_entropy",
    "theil",
    "hhi",
    "hhi_normalized",
    "gini",
    "gini_trapezoid",
    "delta_lorenz_peak_fraction",
    "delta_lorenz_peak_magnitude",
    "delta_lorenz_peak_lorenz",
)


def index_report(values: ArrayLike, top_k: int = 50) -> IndexReport:
    s = shares(values)
    h = entropy(s)
    h_max = max_entropy(s.n)
    conc = hhi(values, top_k)
    curve = lorenz(values)
    frac, mag = delta_lorenz_peak(curve)
    j = int(round(frac * s.n))
    return IndexReport(
        n=s.n,
        entropy=h,
        max_entropy=h_max,
        theil=h_max - h,
        hhi=conc,
        hhi_normalized=hhi_normalized(conc, s.n) if s.n >= 2 else None,
        gini=gini(values),
        gini_trapezoid=gini_trapezoid(curve),
        delta_lorenz_peak_fraction=frac,
        delta_lorenz_peak_magnitude=mag,
        delta_lorenz_peak_lorenz=float(curve.cumulative[j]),
        top_k=top_k,
    )
