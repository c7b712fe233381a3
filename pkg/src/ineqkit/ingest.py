"""CSV readers/writers for ``cities.csv`` and ``events.csv`` plus validation.

Both files are UTF-8, comma-delimited, with a header row and '.' as the
decimal point. ATI must carry at most two decimals (it is stored in cents).
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Iterable, Mapping, Sequence, TextIO

from .panel import ChangeEvent, CityYearRecord, PanelError, check_structure

CITY_COLUMNS = ("year", "city_id", "city_name", "province", "region", "population", "ati")
EVENT_COLUMNS = ("kind", "year_effective", "sources", "target", "new_province", "new_region")

# Yearly municipality counts for Italy 2007-2011, used as a cross-check.
ITALY_CITY_COUNTS = {2007: 8101, 2008: 8094, 2009: 8094, 2010: 8092, 2011: 8092}

_YEAR_RE = re.compile(r"^\d{4}$")

Issue = tuple[int, str, str]


class IngestError(ValueError):
    """Raised when a CSV cannot be parsed; carries every row issue found."""

    def __init__(self, issues: Sequence[Issue]):
        self.issues = list(issues)
        row, code, msg = self.issues[0]
        more = f" (+{len(self.issues) - 1} more)" if len(self.issues) > 1 else ""
        super().__init__(f"row {row}: {code}: {msg}{more}")


@dataclass
class ValidationReport:
    errors: list[Issue] = field(default_factory=list)
    warnings: list[Issue] = field(default_factory=list)
    counts: dict[int, int] = field(default_factory=dict)
    population_totals: dict[int, int] = field(default_factory=dict)
    ati_totals: dict[int, Decimal] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        def issues(items):
            return [{"row": r, "code": c, "message": m} for r, c, m in items]

        return {
            "ok": self.ok,
            "errors": issues(self.errors),
            "warnings": issues(self.warnings),
            "counts": {str(y): n for y, n in sorted(self.counts.items())},
            "population_totals": {str(y): n for y, n in sorted(self.population_totals.items())},
            # Strings keep the cent-exact totals intact through JSON.
            "ati_totals": {str(y): f"{v:.2f}" for y, v in sorted(self.ati_totals.items())},
        }


def _check_header(reader: csv.DictReader, required: Sequence[str]) -> None:
    header = reader.fieldnames or []
    missing = [c for c in required if c not in header]
    if missing:
        raise IngestError([(0, "MISSING_COLUMN", f"missing columns {missing}")])


def parse_year(text: str) -> int:
    text = text.strip()
    if not _YEAR_RE.match(text):
        raise ValueError(f"malformed year {text!r}")
    return int(text)


def parse_cents(text: str) -> int:
    """Parse a decimal euro amount into integer cents, exactly."""
    try:
        value = Decimal(text.strip())
    except InvalidOperation:
        raise ValueError(f"non-numeric amount {text!r}") from None
    if not value.is_finite():
        raise ValueError(f"non-numeric amount {text!r}")
    cents = value.scaleb(2)
    if cents != cents.to_integral_value():
        raise ValueError(f"more than two decimals in {text!r}")
    return int(cents)


def format_cents(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    q, r = divmod(abs(cents), 100)
    return f"{sign}{q}.{r:02d}"


def parse_city_csv(stream: TextIO) -> list[CityYearRecord]:
    reader = csv.DictReader(stream)
    _check_header(reader, CITY_COLUMNS)
    records: list[CityYearRecord] = []
    issues: list[Issue] = []
    for row_no, row in enumerate(reader, 1):
        if None in row:
            issues.append((row_no, "MALFORMED_ROW", "more fields than header columns"))
            continue
        try:
            year = parse_year(row["year"] or "")
        except ValueError as exc:
            issues.append((row_no, "MALFORMED_YEAR", str(exc)))
            continue
        try:
            pop_text = (row["population"] or "").strip()
            if not re.fullmatch(r"-?\d+", pop_text):
                raise ValueError(f"non-numeric population {pop_text!r}")
            population = int(pop_text)
            cents = parse_cents(row["ati"] or "")
        except ValueError as exc:
            issues.append((row_no, "NON_NUMERIC", str(exc)))
            continue
        if population < 0 or cents < 0:
            issues.append((row_no, "NEGATIVE_VALUE", "population and ati must be >= 0"))
            continue
        city = (row["city_id"] or "").strip()
        if not city:
            issues.append((row_no, "MISSING_VALUE", "empty city_id"))
            continue
        records.append(
            CityYearRecord(
                year=year,
                city=city,
                population=population,
                ati_cents=cents,
                province=(row["province"] or "").strip(),
                region=(row["region"] or "").strip(),
                name=row["city_name"] or "",
            )
        )
    if issues:
        raise IngestError(issues)
    return records


def parse_events_csv(stream: TextIO) -> list[ChangeEvent]:
    reader = csv.DictReader(stream)
    _check_header(reader, EVENT_COLUMNS)
    events: list[ChangeEvent] = []
    issues: list[Issue] = []
    for row_no, row in enumerate(reader, 1):
        if None in row:
            issues.append((row_no, "MALFORMED_ROW", "more fields than header columns"))
            continue
        try:
            year = parse_year(row["year_effective"] or "")
        except ValueError as exc:
            issues.append((row_no, "MALFORMED_YEAR", str(exc)))
            continue
        sources = tuple(s.strip() for s in (row["sources"] or "").split(";") if s.strip())
        try:
            events.append(
                ChangeEvent(
                    kind=(row["kind"] or "").strip().lower(),
                    year_effective=year,
                    sources=sources,
                    target=(row["target"] or "").strip(),
                    new_province=(row["new_province"] or "").strip() or None,
                    new_region=(row["new_region"] or "").strip() or None,
                )
            )
        except PanelError as exc:
            issues.append((row_no, exc.code, exc.message))
    if issues:
        raise IngestError(issues)
    return events


def write_city_csv(records: Iterable[CityYearRecord], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CITY_COLUMNS)
    for r in records:
        writer.writerow(
            [r.year, r.city, r.name, r.province, r.region, r.population, format_cents(r.ati_cents)]
        )


def write_events_csv(events: Iterable[ChangeEvent], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(EVENT_COLUMNS)
    for e in events:
        writer.writerow(
            [
                e.kind,
                e.year_effective,
                ";".join(e.sources),
                e.target,
                e.new_province or "",
                e.new_region or "",
            ]
        )


def validate(
    records: Sequence[CityYearRecord],
    events: Sequence[ChangeEvent] = (),
    registry: Mapping[str, str] | None = None,
    expected_counts: Mapping[int, int] | None = None,
) -> ValidationReport:
    """Check parsed records and events; problems become report content.

    ``registry`` maps declared province codes to their region code; when
    given, undeclared codes are errors. ``expected_counts`` maps year to the
    expected number of cities; differences are COUNT_MISMATCH warnings.
    """
    errors, warnings = check_structure(records, events)
    if registry is not None:
        regions = set(registry.values())
        for i, rec in enumerate(records, 1):
            if rec.province not in registry:
                errors.append((i, "UNKNOWN_CODE", f"undeclared province {rec.province!r}"))
            elif rec.region not in regions:
                errors.append((i, "UNKNOWN_CODE", f"undeclared region {rec.region!r}"))
        for j, ev in enumerate(events, 1):
            if ev.new_province and ev.new_province not in registry:
                errors.append((j, "UNKNOWN_CODE", f"undeclared province {ev.new_province!r}"))
            if ev.new_region and ev.new_region not in regions:
                errors.append((j, "UNKNOWN_CODE", f"undeclared region {ev.new_region!r}"))

    report = ValidationReport(errors=errors, warnings=warnings)
    for rec in records:
        report.counts[rec.year] = report.counts.get(rec.year, 0) + 1
        report.population_totals[rec.year] = report.population_totals.get(rec.year, 0) + rec.population
        cents = report.ati_totals.get(rec.year, 0) + rec.ati_cents
        report.ati_totals[rec.year] = cents
    report.ati_totals = {y: Decimal(c).scaleb(-2) for y, c in report.ati_totals.items()}

    if expected_counts:
        for year, expected in sorted(expected_counts.items()):
            got = report.counts.get(year, 0)
            if got != expected:
                report.warnings.append(
                    (0, "COUNT_MISMATCH", f"{year}: {got} cities, expected {expected}")
                )
    return report
