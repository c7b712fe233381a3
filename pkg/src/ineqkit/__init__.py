"""Regional inequality toolkit: panel harmonization, inequality indices,
rank-size fits and Benford tests for city-level tax-income data."""

from .benford import benford_expected, benford_report, chi_square_test, first_digit
from .indices import (
    delta_lorenz_peak,
    entropy,
    gini,
    gini_trapezoid,
    hhi,
    hhi_normalized,
    index_report,
    lorenz,
    max_entropy,
    shares,
    theil,
    theil_from_entropy,
)
from .ingest import parse_city_csv, parse_events_csv, validate
from .panel import (
    ChangeEvent,
    CityYearRecord,
    Panel,
    PanelError,
    aggregate,
    build_panel,
    five_year_average,
    harmonize,
    slice_values,
)
from .ranksize import (
    evaluate_model,
    exclude_top,
    fit_lavalette2,
    fit_lavalette3,
    fit_powerlaw,
    histogram,
    rank,
    refine_nonlinear,
)

__version__ = "0.1.0"
