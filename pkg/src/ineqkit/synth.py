"""Synthetic panels for recovery tests and demos."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .panel import CityYearRecord
from .ranksize import MIN_POINTS, PARAM_NAMES, RankedSeries

SYNTH_MODELS = ("powerlaw", "lavalette2", "lavalette3", "benford", "uniform")


def model_curve(model: str, params: Sequence[float], n: int) -> np.ndarray:
    """Noiseless rank-size curve for ranks 1..n."""
    if model not in PARAM_NAMES:
        raise ValueError(f"unknown model {model!r}")
    if len(params) != len(PARAM_NAMES[model]):
        raise ValueError(f"{model} takes parameters {PARAM_NAMES[model]}")
    if n < MIN_POINTS[model]:
        raise ValueError(f"{model} needs n >= {MIN_POINTS[model]}")
    r = np.arange(1, n + 1, dtype=np.float64)
    if model == "powerlaw":
        n1, alpha = params
        return n1 * r**-alpha
    if model == "lavalette2":
        kappa, chi = params
        return kappa * (n * r / (n - r + 1)) ** -chi
    a, gamma, beta = params
    return a * (n * r) ** -gamma * (n - r + 1) ** beta


def noisy_series(
    model: str,
    params: Sequence[float],
    n: int,
    sigma: float,
    rng: np.random.Generator,
) -> RankedSeries:
    """Curve times lognormal noise, kept at its generating rank (not re-sorted)."""
    y = model_curve(model, params, n)
    if sigma > 0:
        y = y * np.exp(rng.normal(0.0, sigma, n))
    return RankedSeries(ids=tuple(range(n)), values=y)


def benford_sample(n: int, rng: np.random.Generator, decades: int = 6, floor: float = 1e3) -> np.ndarray:
    """Values whose mantissa is log-uniform, hence exactly Benford-distributed."""
    return floor * 10.0 ** rng.uniform(0.0, decades, n)


def synth_records(
    model: str,
    params: Sequence[float],
    n_cities: int,
    years: Sequence[int],
    sigma: float = 0.0,
    seed: int = 0,
    region: str = "SYN",
    provinces: Sequence[str] = ("SA", "SB"),
    scale: float = 1e6,
    per_capita: float = 14_000.0,
) -> list[CityYearRecord]:
    """City-year records with ATI drawn from ``model``; deterministic in ``seed``.

    City ``S0001`` holds rank 1 of the noiseless curve, and so on. For
    ``benford`` and ``uniform`` the parameters are ignored (uniform uses a
    constant ATI of ``scale``).
    """
    if model not in SYNTH_MODELS:
        raise ValueError(f"model must be one of {SYNTH_MODELS}")
    if n_cities < 1 or not years:
        raise ValueError("need at least one city and one year")
    if sigma < 0 or scale <= 0:
        raise ValueError("sigma must be >= 0 and scale > 0")
    rng = np.random.default_rng(seed)
    width = max(4, len(str(n_cities)))
    records = []
    for year in years:
        if model == "benford":
            ati = benford_sample(n_cities, rng)
        elif model == "uniform":
            ati = np.full(n_cities, scale)
        else:
            ati = scale * model_curve(model, params, n_cities)
            if sigma > 0:
                ati = ati * np.exp(rng.normal(0.0, sigma, n_cities))
        for i, value in enumerate(ati):
            cents = int(round(float(value) * 100))
            records.append(
                CityYearRecord(
                    year=int(year),
                    city=f"S{i + 1:0{width}d}",
                    population=max(1, int(round(value / per_capita))),
                    ati_cents=cents,
                    province=provinces[i % len(provinces)],
                    region=region,
                    name=f"Synth {i + 1}",
                )
            )
    return records
