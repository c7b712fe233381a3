"""Rank-size series, power-law and Lavalette fits, frequency-size histograms.

Models, with ``N`` the number of ranked values:

* ``powerlaw``    y = N1 * r**-alpha
* ``lavalette2``  y = kappa2 * (N r / (N - r + 1))**-chi
* ``lavalette3``  y = A * (N r)**-gamma * (N - r + 1)**beta

All three are linear in log space, so the default fit is OLS on ``ln y``.
:func:`refine_nonlinear` re-fits in linear space with Levenberg-Marquardt.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike

logger = logging.getLogger(__name__)

MODELS = ("powerlaw", "lavalette2", "lavalette3")
PARAM_NAMES = {
    "powerlaw": ("N1", "alpha"),
    "lavalette2": ("kappa2", "chi"),
    "lavalette3": ("A", "gamma", "beta"),
}
MIN_POINTS = {"powerlaw": 3, "lavalette2": 3, "lavalette3": 4}


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class RankedSeries:
    """Values in descending order; rank ``r`` is position + 1."""

    ids: tuple
    values: np.ndarray
    excluded: tuple[tuple[int, object], ...] = ()

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def ranks(self) -> np.ndarray:
        return np.arange(1, self.n + 1, dtype=np.float64)

    @property
    def pairs(self) -> list[tuple[int, float]]:
        return [(i + 1, float(v)) for i, v in enumerate(self.values)]


def _items(values) -> list[tuple[object, float]]:
    if isinstance(values, Mapping):
        return [(k, float(v)) for k, v in values.items()]
    items = list(values)
    if items and isinstance(items[0], tuple):
        return [(k, float(v)) for k, v in items]
    return [(i, float(v)) for i, v in enumerate(items)]


def rank(values) -> RankedSeries:
    """Rank ``(id, value)`` pairs, a mapping, or bare values (ids = positions).

    Ties are broken by id. Non-positive values are dropped into ``excluded``
    after the positive ones.
    """
    items = _items(values)
    if any(not np.isfinite(v) for _, v in items):
        raise FitError("non-finite value")
    pos = sorted(((k, v) for k, v in items if v > 0), key=lambda kv: (-kv[1], kv[0]))
    if not pos:
        raise FitError("no positive values to rank")
    rest = sorted(k for k, v in items if v <= 0)
    excluded = tuple((len(pos) + i + 1, k) for i, k in enumerate(rest))
    return RankedSeries(
        ids=tuple(k for k, _ in pos),
        values=np.array([v for _, v in pos], dtype=np.float64),
        excluded=excluded,
    )


def exclude_top(series: RankedSeries, k: int) -> RankedSeries:
    """Drop the ``k`` lowest-rank (largest) entries, e.g. King/Vice-Roy cities."""
    if not 0 <= k < series.n:
        raise FitError(f"k must satisfy 0 <= k < n={series.n}, got {k}")
    if k == 0:
        return series
    dropped = tuple((i + 1, series.ids[i]) for i in range(k))
    return RankedSeries(
        ids=series.ids[k:],
        values=series.values[k:].copy(),
        excluded=dropped + series.excluded,
    )


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict[str, float]
    std_errors: dict[str, float]
    r_squared: float
    fit_space: str
    n: int
    n_excluded: int = 0
    sse: float = 0.0
    flags: tuple[str, ...] = field(default=())

    def values(self) -> np.ndarray:
        return np.array([self.params[p] for p in PARAM_NAMES[self.model]])

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": dict(self.params),
            "std_errors": dict(self.std_errors),
            "r_squared": self.r_squared,
            "fit_space": self.fit_space,
            "n": self.n,
            "excluded": self.n_excluded,
            "sse": self.sse,
            "flags": list(self.flags),
        }


def _design(model: str, r: np.ndarray, n: int) -> np.ndarray:
    one = np.ones_like(r)
    if model == "powerlaw":
        return np.column_stack([one, np.log(r)])
    if model == "lavalette2":
        return np.column_stack([one, _lav_u(r, n)])
    if model == "lavalette3":
        return np.column_stack([one, np.log(n * r), np.log(n - r + 1)])
    raise FitError(f"unknown model {model!r}")


def _lav_u(r: np.ndarray, n: int) -> np.ndarray:
    return np.log(n) + np.log(r) - np.log(n - r + 1)


def _r_squared(y: np.ndarray, resid: np.ndarray) -> float:
    sst = float(np.sum((y - y.mean()) ** 2))
    sse = float(np.sum(resid**2))
    if sst == 0:
        return 1.0 if sse <= 1e-24 * max(1.0, float(np.sum(y**2))) else 0.0
    return float(min(1.0, max(0.0, 1.0 - sse / sst)))


def _log_fit(model: str, series: RankedSeries) -> FitResult:
    if series.n < MIN_POINTS[model]:
        raise FitError(f"{model} needs at least {MIN_POINTS[model]} points, got {series.n}")
    r = series.ranks
    y = np.log(series.values)
    x = _design(model, r, series.n)
    coef, _, rank_, sv = np.linalg.lstsq(x, y, rcond=None)
    if rank_ < x.shape[1] or sv[-1] / sv[0] < 1e-12:
        raise FitError(f"{model}: collinear regressors")
    resid = y - x @ coef
    dof = series.n - x.shape[1]
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(x.T @ x)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    amp = float(np.exp(coef[0]))
    if model == "lavalette3":
        params = (amp, -coef[1], coef[2])
    else:
        params = (amp, -coef[1])
    # Delta method for the exponentiated intercept.
    errs = (amp * se[0],) + tuple(se[1:])
    names = PARAM_NAMES[model]
    return FitResult(
        model=model,
        params={k: float(v) for k, v in zip(names, params)},
        std_errors={k: float(v) for k, v in zip(names, errs)},
        r_squared=_r_squared(y, resid),
        fit_space="log",
        n=series.n,
        n_excluded=len(series.excluded),
        sse=float(resid @ resid),
    )


def fit_powerlaw(series: RankedSeries) -> FitResult:
    return _log_fit("powerlaw", series)


def fit_lavalette2(series: RankedSeries) -> FitResult:
    return _log_fit("lavalette2", series)


def fit_lavalette3(series: RankedSeries) -> FitResult:
    """Three-parameter fit; falls back to lavalette2 if the design is singular."""
    try:
        return _log_fit("lavalette3", series)
    except FitError as exc:
        if "collinear" not in str(exc):
            raise
        logger.warning("lavalette3 design singular, falling back to lavalette2")
        fit = _log_fit("lavalette2", series)
        return replace(fit, flags=fit.flags + ("collinear_fallback",))


FITTERS: dict[str, Callable[[RankedSeries], FitResult]] = {
    "powerlaw": fit_powerlaw,
    "lavalette2": fit_lavalette2,
    "lavalette3": fit_lavalette3,
}


def _log_terms(model: str, theta: np.ndarray, r: np.ndarray, n: int):
    """Exponent of the model without amplitude, and its gradient columns."""
    if model == "powerlaw":
        lnr = np.log(r)
        return -theta[1] * lnr, [-lnr]
    if model == "lavalette2":
        u = _lav_u(r, n)
        return -theta[1] * u, [-u]
    if model == "lavalette3":
        lnr = np.log(n * r)
        lnq = np.log(n - r + 1)
        return -theta[1] * lnr + theta[2] * lnq, [-lnr, lnq]
    raise FitError(f"unknown model {model!r}")


def _model_and_jacobian(model: str, theta: np.ndarray, r: np.ndarray, n: int):
    """Model values and Jacobian in ``(ln amplitude, exponents...)`` coordinates."""
    expo, cols = _log_terms(model, theta, r, n)
    with np.errstate(over="ignore", invalid="ignore"):
        f = np.exp(theta[0] + expo)
        jac = np.column_stack([f] + [c * f for c in cols])
    return f, jac


def _to_internal(theta: np.ndarray) -> np.ndarray:
    out = theta.astype(np.float64).copy()
    out[0] = np.log(out[0]) if out[0] > 0 else np.nan
    return out


def _from_internal(theta: np.ndarray) -> np.ndarray:
    out = theta.copy()
    out[0] = np.exp(out[0])
    return out


def evaluate_model(fit: FitResult, r: ArrayLike):
    """Model value at rank(s) ``r``; scalar in, scalar out."""
    rr = np.asarray(r, dtype=np.float64)
    if np.any(rr <= 0) or (fit.model != "powerlaw" and np.any(rr > fit.n)):
        raise FitError(f"rank out of domain for {fit.model} with N={fit.n}")
    theta = fit.values()
    expo, _ = _log_terms(fit.model, theta, np.atleast_1d(rr), fit.n)
    f = theta[0] * np.exp(expo)
    return float(f[0]) if rr.ndim == 0 else f


def linear_sse(fit: FitResult, series: RankedSeries) -> float:
    f = evaluate_model(fit, series.ranks)
    return float(np.sum((series.values - f) ** 2))


def refine_nonlinear(
    series: RankedSeries,
    initial: FitResult,
    max_iter: int = 200,
    rtol: float = 1e-10,
    lam0: float = 1e-3,
) -> FitResult:
    """Levenberg-Marquardt fit of the model to the raw values.

    Minimizes ``sum (y_r - model(r))**2`` starting from ``initial``. Damping
    starts at ``lam0``, is multiplied by 10 on a rejected step and divided by
    10 on an accepted one; stops when the relative SSE decrease falls below
    ``rtol`` or after ``max_iter`` accepted-step attempts. Only SSE-decreasing
    steps are taken, so the result is never worse than the initializer.
    The amplitude is iterated on as its logarithm, which keeps the problem
    well scaled when exponents are far off.
    """
    model, r, y, n = initial.model, series.ranks, series.values, series.n
    theta = _to_internal(initial.values())
    flags = list(initial.flags)
    if not np.all(np.isfinite(theta)):
        return replace(initial, flags=tuple(flags + ["diverged"]))

    def sse_of(th):
        f, _ = _model_and_jacobian(model, th, r, n)
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.sum((y - f) ** 2))

    sse = sse_of(theta)
    lam = lam0
    converged = False
    for _ in range(max_iter):
        f, jac = _model_and_jacobian(model, theta, r, n)
        resid = y - f
        hess = jac.T @ jac
        grad = jac.T @ resid
        scale = np.diag(hess).copy()
        scale[scale <= 0] = 1e-300
        improved = False
        while lam < 1e30:
            try:
                step = np.linalg.solve(hess + lam * np.diag(scale), grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = theta + step
            trial_sse = sse_of(trial) if np.all(np.isfinite(trial)) else np.inf
            if np.isfinite(trial_sse) and trial_sse < sse:
                improved = True
                lam = max(lam / 10, 1e-15)
                break
            lam *= 10
        if not improved:
            converged = True
            break
        rel = (sse - trial_sse) / sse
        theta, sse = trial, trial_sse
        if rel < rtol:
            converged = True
            break
    if not np.all(np.isfinite(theta)):
        return replace(initial, flags=tuple(flags + ["diverged"]))
    if not converged:
        flags.append("max_iter")

    f, jac = _model_and_jacobian(model, theta, r, n)
    p = theta.size
    s2 = sse / (n - p) if n > p else 0.0
    try:
        cov = s2 * np.linalg.inv(jac.T @ jac)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        se = np.full(p, np.nan)
        flags.append("singular_jacobian")
    natural = _from_internal(theta)
    se[0] *= natural[0]
    names = PARAM_NAMES[model]
    return FitResult(
        model=model,
        params={k: float(v) for k, v in zip(names, natural)},
        std_errors={k: float(v) for k, v in zip(names, se)},
        r_squared=_r_squared(y, y - f),
        fit_space="linear",
        n=n,
        n_excluded=len(series.excluded),
        sse=sse,
        flags=tuple(flags),
    )


def fitted_curve(series: RankedSeries, fit: FitResult) -> list[tuple[int, float, float]]:
    """``(r, y_observed, y_model)`` rows for plotting."""
    f = evaluate_model(fit, series.ranks)
    return [(i + 1, float(v), float(m)) for i, (v, m) in enumerate(zip(series.values, f))]


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    cap: int | None = None

    @property
    def truncated(self) -> np.ndarray:
        """Bins whose count exceeds the display cap; raw counts are untouched."""
        if self.cap is None:
            return np.zeros(self.counts.size, dtype=bool)
        return self.counts > self.cap

    @property
    def display_counts(self) -> np.ndarray:
        return self.counts if self.cap is None else np.minimum(self.counts, self.cap)

    def rows(self) -> list[tuple[float, float, int, int, bool]]:
        return [
            (float(lo), float(hi), int(c), int(d), bool(t))
            for lo, hi, c, d, t in zip(
                self.edges[:-1], self.edges[1:], self.counts, self.display_counts, self.truncated
            )
        ]


def histogram(
    values: ArrayLike,
    bin_width: float | None = None,
    edges: Sequence[float] | None = None,
    origin: float = 0.0,
    cap: int | None = None,
) -> Histogram:
    """Frequency-size histogram with half-open bins ``[lo, hi)``.

    With ``bin_width`` the edges start at ``origin`` and extend until the
    largest value falls inside a bin; empty bins are kept. Explicit ``edges``
    follow numpy's convention of a closed last bin.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise FitError("histogram of empty input")
    if edges is None:
        if bin_width is None or not bin_width > 0:
            raise FitError("bin_width must be positive")
        if x.min() < origin:
            raise FitError(f"values below origin {origin}")
        nbins = int(np.floor((x.max() - origin) / bin_width)) + 1
        e = origin + bin_width * np.arange(nbins + 1)
        idx = np.floor((x - origin) / bin_width).astype(np.int64)
        counts = np.bincount(np.clip(idx, 0, nbins - 1), minlength=nbins)
    else:
        e = np.asarray(edges, dtype=np.float64)
        if e.size < 2 or np.any(np.diff(e) <= 0):
            raise FitError("edges must be strictly increasing")
        if x.min() < e[0] or x.max() > e[-1]:
            raise FitError("values outside the histogram edges")
        counts, _ = np.histogram(x, bins=e)
    return Histogram(edges=e, counts=counts.astype(np.int64), cap=cap)


def fit_models(
    series: RankedSeries, models: Iterable[str] = MODELS, refine: bool = False
) -> list[FitResult]:
    """Fit each requested model the series is large enough for."""
    out = []
    for m in models:
        if m not in FITTERS:
            raise FitError(f"unknown model {m!r}")
        if series.n < MIN_POINTS[m]:
            logger.debug("%s skipped: %d points", m, series.n)
            continue
        fit = FITTERS[m](series)
        out.append(fit)
        if refine:
            out.append(refine_nonlinear(series, fit))
    return out
