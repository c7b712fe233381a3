"""City/province/region panel with yearly membership and administrative changes.

ATI is held as integer euro cents from ingestion through aggregation so that
sums are exact; conversion to float happens only in the analysis modules.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

SCOPES = ("city", "province", "region", "country")
COUNTRY_CODE = "ALL"
FIELDS = ("ati", "population")


class PanelError(ValueError):
    """Raised for structurally invalid panels. ``code`` is a stable tag."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


@dataclass(frozen=True)
class CityYearRecord:
    year: int
    city: str
    population: int
    ati_cents: int
    province: str
    region: str
    name: str = ""

    def __post_init__(self):
        if self.population < 0 or self.ati_cents < 0:
            raise PanelError(
                "NEGATIVE_VALUE", f"negative population/ati for {self.city} in {self.year}"
            )

    @property
    def ati(self) -> Decimal:
        """ATI in euros, exact."""
        return Decimal(self.ati_cents).scaleb(-2)


@dataclass(frozen=True)
class ChangeEvent:
    kind: str
    year_effective: int
    sources: tuple[str, ...]
    target: str
    new_province: str | None = None
    new_region: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if self.kind == "merge":
            if len(self.sources) < 2 or len(set(self.sources)) != len(self.sources):
                raise PanelError(
                    "MALFORMED_EVENT", "merge needs at least 2 distinct sources"
                )
        elif self.kind == "move":
            if self.sources != (self.target,):
                raise PanelError(
                    "MALFORMED_EVENT", "move needs exactly one source equal to the target"
                )
            if not (self.new_province or self.new_region):
                raise PanelError("MALFORMED_EVENT", "move without new province or region")
        else:
            raise PanelError("MALFORMED_EVENT", f"unknown event kind {self.kind!r}")


def merge(year: int, sources: Sequence[str], target: str) -> ChangeEvent:
    return ChangeEvent("merge", year, tuple(sources), target)


def move(year: int, city: str, province: str | None = None, region: str | None = None) -> ChangeEvent:
    return ChangeEvent("move", year, (city,), city, province, region)


@dataclass(frozen=True)
class AggregateSlice:
    scope: str
    scope_code: str
    year: int
    n_cities: int
    population: int
    ati_cents: int

    @property
    def ati_total(self) -> Decimal:
        return Decimal(self.ati_cents).scaleb(-2)


@dataclass(frozen=True, eq=False)
class Panel:
    """Immutable year-indexed collection of city records plus change events.

    Construct through :func:`build_panel`; the constructor does not validate.
    """

    records: dict[tuple[int, str], CityYearRecord]
    events: tuple[ChangeEvent, ...] = ()
    years: tuple[int, ...] = ()
    reference_year: int | None = None
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __eq__(self, other):
        if not isinstance(other, Panel):
            return NotImplemented
        return (
            self.records == other.records
            and self.events == other.events
            and self.years == other.years
        )

    def __hash__(self):
        return hash((self.years, len(self.records)))

    def year_records(self, year: int) -> list[CityYearRecord]:
        if year not in self.years:
            raise PanelError("UNKNOWN_YEAR", f"year {year} not in panel")
        return sorted(
            (r for (y, _), r in self.records.items() if y == year), key=lambda r: r.city
        )

    def city_counts(self) -> dict[int, int]:
        counts = dict.fromkeys(self.years, 0)
        for year, _ in self.records:
            counts[year] += 1
        return counts

    def totals(self) -> dict[int, tuple[int, int]]:
        """Per-year (population, ati_cents) sums."""
        out = {y: (0, 0) for y in self.years}
        for (year, _), rec in self.records.items():
            pop, ati = out[year]
            out[year] = (pop + rec.population, ati + rec.ati_cents)
        return out

    def events_by_year(self) -> dict[int, list[ChangeEvent]]:
        out: dict[int, list[ChangeEvent]] = defaultdict(list)
        for ev in self.events:
            out[ev.year_effective].append(ev)
        return dict(out)


def check_structure(
    records: Sequence[CityYearRecord], events: Sequence[ChangeEvent]
) -> tuple[list[tuple[int, str, str]], list[tuple[int, str, str]]]:
    """Collect structural problems as ``(row, code, message)`` tuples.

    Rows are 1-based positions in ``records``, or in ``events`` for event
    codes. Returns ``(errors, warnings)``.
    """
    errors: list[tuple[int, str, str]] = []
    warnings: list[tuple[int, str, str]] = []

    seen: dict[tuple[int, str], int] = {}
    for i, rec in enumerate(records, 1):
        key = (rec.year, rec.city)
        if key in seen:
            errors.append(
                (i, "DUPLICATE_KEY", f"({rec.year}, {rec.city}) already at row {seen[key]}")
            )
        else:
            seen[key] = i

    years = sorted({r.year for r in records})
    presence: dict[str, set[int]] = defaultdict(set)
    for rec in records:
        presence[rec.city].add(rec.year)

    province_region: dict[tuple[int, str], str] = {}
    for i, rec in enumerate(records, 1):
        k = (rec.year, rec.province)
        prev = province_region.setdefault(k, rec.region)
        if prev != rec.region:
            errors.append(
                (
                    i,
                    "INCONSISTENT_HIERARCHY",
                    f"province {rec.province} in both {prev} and {rec.region} in {rec.year}",
                )
            )

    if not years:
        return errors, warnings
    first, last = years[0], years[-1]
    codes = {(r.year, r.city): (r.province, r.region) for r in records}

    born: dict[str, int] = {}
    died: dict[str, int] = {}
    for j, ev in enumerate(events, 1):
        if not first <= ev.year_effective <= last:
            errors.append(
                (j, "EVENT_YEAR_OUT_OF_RANGE", f"{ev.kind} in {ev.year_effective} outside {first}-{last}")
            )
            continue
        for src in ev.sources:
            if not any(y < ev.year_effective for y in presence.get(src, ())):
                errors.append(
                    (j, "ORPHAN_EVENT", f"{src} has no record before {ev.year_effective}")
                )
        if ev.kind == "merge":
            if not any(y >= ev.year_effective for y in presence.get(ev.target, ())):
                errors.append(
                    (j, "ORPHAN_EVENT", f"merge target {ev.target} has no record from {ev.year_effective}")
                )
            for src in ev.sources:
                if src == ev.target:
                    continue
                late = [y for y in presence.get(src, ()) if y >= ev.year_effective]
                if late:
                    errors.append(
                        (j, "EVENT_CONFLICT", f"{src} merged in {ev.year_effective} but present in {min(late)}")
                    )
                died[src] = ev.year_effective
            born.setdefault(ev.target, ev.year_effective)
        else:
            later = [
                e.year_effective
                for e in events
                if e.kind == "move" and e.target == ev.target and e.year_effective > ev.year_effective
            ]
            until = min(later, default=last + 1)
            for y in sorted(presence.get(ev.target, ())):
                if not ev.year_effective <= y < until:
                    continue
                prov, reg = codes[(y, ev.target)]
                if (ev.new_province and prov != ev.new_province) or (
                    ev.new_region and reg != ev.new_region
                ):
                    warnings.append(
                        (j, "MOVE_MISMATCH", f"{ev.target} in {y} is {prov}/{reg} after move")
                    )
                    break

    for city in sorted(presence):
        present = presence[city]
        lo, hi = min(present), max(present)
        gaps = [y for y in years if lo < y < hi and y not in present]
        if gaps:
            warnings.append((0, "YEAR_GAP", f"{city} missing in {gaps}"))
        if lo > first and born.get(city) != lo:
            warnings.append((0, "UNEXPLAINED_ABSENCE", f"{city} first appears in {lo}"))
        if hi < last and died.get(city, None) != _next_year(years, hi):
            warnings.append((0, "UNEXPLAINED_ABSENCE", f"{city} last appears in {hi}"))
    return errors, warnings


def _next_year(years: Sequence[int], y: int) -> int | None:
    later = [v for v in years if v > y]
    return later[0] if later else None


def build_panel(
    records: Iterable[CityYearRecord], events: Iterable[ChangeEvent] = ()
) -> Panel:
    records = list(records)
    events = sorted(events, key=lambda e: e.year_effective)
    if not records:
        raise PanelError("EMPTY_PANEL", "no records")
    errors, warnings = check_structure(records, events)
    if errors:
        row, code, msg = errors[0]
        raise PanelError(code, f"row {row}: {msg}" + (f" (+{len(errors) - 1} more)" if len(errors) > 1 else ""))
    for _, code, msg in warnings:
        logger.warning("%s: %s", code, msg)
    return Panel(
        records={(r.year, r.city): r for r in records},
        events=tuple(events),
        years=tuple(sorted({r.year for r in records})),
        warnings=tuple(f"{code}: {msg}" for _, code, msg in warnings),
    )


def _resolution_map(events: Sequence[ChangeEvent], reference_year: int) -> dict[str, str]:
    """Map each merged city to its identity in ``reference_year``."""
    step: dict[str, str] = {}
    for ev in sorted(events, key=lambda e: e.year_effective):
        if ev.kind != "merge" or ev.year_effective > reference_year:
            continue
        for src in ev.sources:
            if src != ev.target:
                step[src] = ev.target

    resolved: dict[str, str] = {}
    for start in step:
        path = [start]
        node = start
        while node in step:
            node = step[node]
            if node in path:
                raise PanelError("EVENT_CYCLE", " -> ".join(path + [node]))
            if node in resolved:
                node = resolved[node]
                break
            path.append(node)
        for p in path:
            resolved[p] = node
    return resolved


def harmonize(panel: Panel, reference_year: int | None = None) -> Panel:
    """Express every year of ``panel`` in the entity frame of ``reference_year``.

    Cities that merged into a reference-year entity by ``reference_year`` are
    summed under that entity in every earlier year. Cities touched by a merge
    or move take the reference-frame province/region codes in all years.
    Merges effective after ``reference_year`` cannot be split backward and
    are left as recorded. Defaults to the last panel year.
    """
    if reference_year is None:
        reference_year = panel.years[-1]
    if reference_year not in panel.years:
        raise PanelError("UNKNOWN_YEAR", f"reference year {reference_year} not in panel")

    resolve = _resolution_map(panel.events, reference_year)
    touched = set(resolve) | set(resolve.values())
    moves = [e for e in panel.events if e.kind == "move"]
    touched.update(e.target for e in moves)

    def frame_codes(city: str, fallback: CityYearRecord) -> tuple[str, str]:
        ref = panel.records.get((reference_year, city))
        if ref is not None:
            return ref.province, ref.region
        # Entity absent in the reference year: use its own record plus any
        # moves effective by the reference year.
        prov, reg = fallback.province, fallback.region
        for ev in moves:
            if ev.target == city and fallback.year < ev.year_effective <= reference_year:
                prov = ev.new_province or prov
                reg = ev.new_region or reg
        return prov, reg

    acc: dict[tuple[int, str], list] = {}
    names: dict[str, str] = {
        city: rec.name for (y, city), rec in panel.records.items() if y == reference_year
    }
    for key in sorted(panel.records):
        rec = panel.records[key]
        city = resolve.get(rec.city, rec.city)
        slot = acc.get((rec.year, city))
        if slot is None:
            acc[(rec.year, city)] = [rec.population, rec.ati_cents, rec]
        else:
            slot[0] += rec.population
            slot[1] += rec.ati_cents
            if rec.city == city:
                slot[2] = rec

    out: dict[tuple[int, str], CityYearRecord] = {}
    for (year, city), (pop, cents, proto) in acc.items():
        if city in touched:
            prov, reg = frame_codes(city, proto)
        else:
            prov, reg = proto.province, proto.region
        out[(year, city)] = CityYearRecord(
            year=year,
            city=city,
            population=pop,
            ati_cents=cents,
            province=prov,
            region=reg,
            name=names.get(city, proto.name) if city != proto.city else proto.name,
        )
    return Panel(
        records=dict(sorted(out.items())),
        events=panel.events,
        years=panel.years,
        reference_year=reference_year,
        warnings=panel.warnings,
    )


def _scope_key(rec: CityYearRecord, scope: str) -> str:
    if scope == "city":
        return rec.city
    if scope == "province":
        return rec.province
    if scope == "region":
        return rec.region
    if scope == "country":
        return COUNTRY_CODE
    raise PanelError("UNKNOWN_SCOPE", f"scope must be one of {SCOPES}, got {scope!r}")


def aggregate(panel: Panel, scope: str, year: int) -> list[AggregateSlice]:
    if scope not in SCOPES:
        raise PanelError("UNKNOWN_SCOPE", f"scope must be one of {SCOPES}, got {scope!r}")
    recs = panel.year_records(year)
    if not recs:
        raise PanelError("EMPTY_YEAR", f"no records in {year}")
    groups: dict[str, list[int]] = {}
    for rec in recs:
        g = groups.setdefault(_scope_key(rec, scope), [0, 0, 0])
        g[0] += 1
        g[1] += rec.population
        g[2] += rec.ati_cents
    return [
        AggregateSlice(scope, code, year, n, pop, cents)
        for code, (n, pop, cents) in sorted(groups.items())
    ]


def scope_codes(panel: Panel, scope: str, year: int | None = None) -> list[str]:
    years = panel.years if year is None else (year,)
    return sorted({s.scope_code for y in years for s in aggregate(panel, scope, y)})


def _field_value(rec: CityYearRecord, field_name: str):
    if field_name == "ati":
        return rec.ati
    if field_name == "population":
        return rec.population
    raise PanelError("UNKNOWN_FIELD", f"field must be one of {FIELDS}, got {field_name!r}")


def slice_values(
    panel: Panel, scope: str, scope_code: str, year: int, field: str = "ati"
) -> list[tuple[str, Decimal | int]]:
    """``(city, value)`` pairs for one slice, ordered by city id.

    ATI comes back as an exact :class:`~decimal.Decimal` in euros.
    """
    if scope not in SCOPES:
        raise PanelError("UNKNOWN_SCOPE", f"scope must be one of {SCOPES}, got {scope!r}")
    out = [
        (rec.city, _field_value(rec, field))
        for rec in panel.year_records(year)
        if _scope_key(rec, scope) == scope_code
    ]
    if not out:
        raise PanelError("UNKNOWN_SCOPE_CODE", f"no {scope} {scope_code!r} in {year}")
    return out


def five_year_average(
    panel: Panel, scope: str, scope_code: str, field: str = "ati"
) -> list[tuple[str, float]]:
    """Per-city mean over the panel years in which the city is in the slice."""
    sums: dict[str, Decimal] = defaultdict(Decimal)
    counts: dict[str, int] = defaultdict(int)
    found = False
    for year in panel.years:
        try:
            pairs = slice_values(panel, scope, scope_code, year, field)
        except PanelError as exc:
            if exc.code != "UNKNOWN_SCOPE_CODE":
                raise
            continue
        found = True
        for city, value in pairs:
            sums[city] += Decimal(value)
            counts[city] += 1
    if not found:
        raise PanelError("UNKNOWN_SCOPE_CODE", f"no {scope} {scope_code!r} in any year")
    return [(city, float(sums[city] / counts[city])) for city in sorted(sums)]
