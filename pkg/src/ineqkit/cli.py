"""``ineqkit`` command line.

Exit codes: 0 success, 1 data or validation failure, 2 I/O or config failure.
Outputs are named ``<command>_<scope_code>_<year>.<ext>`` (``avg`` for the
multi-year average) and are byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import benford as bf
from . import indices as ix
from . import ranksize as rs
from .ingest import (
    ITALY_CITY_COUNTS,
    IngestError,
    ValidationReport,
    parse_city_csv,
    parse_events_csv,
    validate,
    write_city_csv,
)
from .panel import (
    FIELDS,
    SCOPES,
    Panel,
    PanelError,
    build_panel,
    five_year_average,
    harmonize,
    scope_codes,
    slice_values,
)
from .synth import SYNTH_MODELS, synth_records

log = logging.getLogger("ineqkit")

EXIT_OK, EXIT_DATA, EXIT_IO = 0, 1, 2


class CliError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


@dataclass
class RunConfig:
    command: str
    cities: Path | None = None
    events: Path | None = None
    ref_year: int | None = None
    scopes: tuple[str, ...] = ("region",)
    codes: frozenset[str] | None = None
    years: tuple[int, ...] | None = None
    out: Path = Path("out")
    fmt: str = "json"
    top_k: int = 50
    exclude_top: int = 0
    models: tuple[str, ...] = rs.MODELS
    bin_width: float | None = None
    cap: int | None = None
    value_field: str | None = None
    refine: bool = False
    seed: int | None = None
    expected_counts: dict[int, int] | None = None
    synth: dict = field(default_factory=dict)


def _parse_years(text: str) -> tuple[int, ...]:
    years: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            years.extend(range(int(lo), int(hi) + 1))
        elif part:
            years.append(int(part))
    return tuple(sorted(set(years)))


def _parse_expected(text: str) -> dict[int, int]:
    if text.lower() == "italy":
        return dict(ITALY_CITY_COUNTS)
    out = {}
    for part in text.split(","):
        year, count = part.split(":")
        out[int(year)] = int(count)
    return out


def _csv_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _threads() -> int:
    raw = os.environ.get("INEQKIT_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1 if raw else min(8, os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--cities", type=Path, help="cities.csv")
    common.add_argument("--events", type=Path, help="events.csv (optional)")
    common.add_argument("--ref-year", type=int, help="harmonization frame (default: last year)")
    common.add_argument("--scope", default="region", help=f"comma list of {','.join(SCOPES)}")
    common.add_argument("--code", help="comma list of scope codes to keep")
    common.add_argument("--years", help="e.g. 2007-2011 or 2007,2009")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json")
    common.add_argument("--top-k", type=int, default=50)
    common.add_argument("--exclude-top", type=int, default=0)
    common.add_argument("--models", default=",".join(rs.MODELS))
    common.add_argument("--bin-width", type=float)
    common.add_argument("--cap", type=int, help="histogram display cap")
    common.add_argument("--field", choices=FIELDS)
    common.add_argument("--refine", action="store_true", help="add linear-space LM fits")
    common.add_argument("--seed", type=int)
    common.add_argument("--expected-counts", help="'italy' or year:count,...")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ineqkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("validate", "check input files and write a validation report"),
        ("indices", "entropy/Theil/HHI/Gini per slice"),
        ("ranksize", "power-law and Lavalette fits per slice"),
        ("lorenz", "Lorenz and delta-Lorenz curves per slice"),
        ("benford", "first-digit tests per slice"),
        ("histogram", "frequency-size histograms per slice"),
    ):
        sub.add_parser(name, parents=[common], help=help_)
    p = sub.add_parser("synth", parents=[common], help="write a synthetic cities.csv")
    p.add_argument("--model", choices=SYNTH_MODELS, default="lavalette3")
    p.add_argument("--params", default="47.090,0.809,0.361")
    p.add_argument("--n-cities", type=int, default=132)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--region", default="SYN")
    p.add_argument("--provinces", default="SA,SB")
    p.add_argument("--scale", type=float, default=1e6)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    try:
        scopes = _csv_list(args.scope)
        bad = [s for s in scopes if s not in SCOPES]
        if bad or not scopes:
            raise ValueError(f"unknown scope {bad}")
        models = _csv_list(args.models)
        bad = [m for m in models if m not in rs.MODELS]
        if bad:
            raise ValueError(f"unknown model {bad}")
        cfg = RunConfig(
            command=args.command,
            cities=args.cities,
            events=args.events,
            ref_year=args.ref_year,
            scopes=scopes,
            codes=frozenset(_csv_list(args.code)) if args.code else None,
            years=_parse_years(args.years) if args.years else None,
            out=args.out,
            fmt=args.fmt,
            top_k=args.top_k,
            exclude_top=args.exclude_top,
            models=models,
            bin_width=args.bin_width,
            cap=args.cap,
            value_field=args.field,
            refine=args.refine,
            seed=args.seed,
            expected_counts=_parse_expected(args.expected_counts) if args.expected_counts else None,
        )
        if args.command == "synth":
            cfg.synth = {
                "model": args.model,
                "params": [float(v) for v in _csv_list(args.params)],
                "n_cities": args.n_cities,
                "sigma": args.sigma,
                "region": args.region,
                "provinces": _csv_list(args.provinces),
                "scale": args.scale,
            }
    except ValueError as exc:
        raise CliError(EXIT_IO, f"bad option: {exc}") from None
    if cfg.top_k < 1 or cfg.exclude_top < 0:
        raise CliError(EXIT_IO, "--top-k must be >= 1 and --exclude-top >= 0")
    return cfg


# -- output helpers ---------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


# -- loading ----------------------------------------------------------------


def _read(path: Path | None, what: str) -> str:
    if path is None:
        raise CliError(EXIT_IO, f"--{what} is required")
    try:
        return path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from None


def load_inputs(cfg: RunConfig):
    report = ValidationReport()
    try:
        records = parse_city_csv(io.StringIO(_read(cfg.cities, "cities")))
    except IngestError as exc:
        report.errors = [(r, c, f"cities: {m}") for r, c, m in exc.issues]
        return None, None, report
    events = []
    if cfg.events is not None:
        try:
            events = parse_events_csv(io.StringIO(_read(cfg.events, "events")))
        except IngestError as exc:
            report.errors = [(r, c, f"events: {m}") for r, c, m in exc.issues]
            return records, None, report
    return records, events, validate(records, events, expected_counts=cfg.expected_counts)


def load_panel(cfg: RunConfig) -> Panel:
    records, events, report = load_inputs(cfg)
    if not report.ok:
        for row, code, msg in report.errors[:20]:
            log.error("row %s: %s: %s", row, code, msg)
        raise CliError(EXIT_DATA, f"validation failed with {len(report.errors)} error(s)")
    if not records:
        raise CliError(EXIT_DATA, "no city records")
    try:
        panel = build_panel(records, events)
        if cfg.ref_year is not None and cfg.ref_year not in panel.years:
            raise CliError(EXIT_IO, f"--ref-year {cfg.ref_year} not in panel years {panel.years}")
        return harmonize(panel, cfg.ref_year)
    except PanelError as exc:
        raise CliError(EXIT_DATA, str(exc)) from None


def _years(cfg: RunConfig, panel: Panel) -> tuple[int, ...]:
    if cfg.years is None:
        return panel.years
    bad = [y for y in cfg.years if y not in panel.years]
    if bad:
        raise CliError(EXIT_IO, f"years {bad} not in panel {panel.years}")
    return cfg.years


def iter_slices(cfg: RunConfig, panel: Panel):
    """Yield ``(scope, code)`` for every requested slice, in a stable order."""
    for scope in cfg.scopes:
        codes = scope_codes(panel, scope)
        if cfg.codes is not None:
            codes = [c for c in codes if c in cfg.codes]
        for code in codes:
            yield scope, code


def _values(panel, scope, code, year, field_name):
    try:
        return slice_values(panel, scope, code, year, field_name)
    except PanelError as exc:
        if exc.code != "UNKNOWN_SCOPE_CODE":
            raise
        log.warning("empty slice %s %s %s skipped", scope, code, year)
        return None


def _parallel(fn: Callable, jobs: list) -> list:
    workers = _threads()
    if workers == 1 or len(jobs) < 2:
        return [fn(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda j: fn(*j), jobs))


# -- commands ---------------------------------------------------------------


def cmd_validate(cfg: RunConfig) -> int:
    records, events, report = load_inputs(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out / "validate_report.json", report.to_dict())
    for row, code, msg in report.errors:
        print(f"error row {row}: {code}: {msg}")
    for row, code, msg in report.warnings:
        print(f"warning row {row}: {code}: {msg}")
    print(f"{len(report.errors)} error(s), {len(report.warnings)} warning(s)")
    return EXIT_OK if report.ok else EXIT_DATA


def cmd_indices(cfg: RunConfig) -> int:
    panel = load_panel(cfg)
    years = _years(cfg, panel)
    field_name = cfg.value_field or "ati"
    cfg.out.mkdir(parents=True, exist_ok=True)

    def one(scope, code, year):
        if year == "avg":
            pairs = five_year_average(panel, scope, code, field_name)
        else:
            pairs = _values(panel, scope, code, year, field_name)
        if pairs is None:
            return None
        try:
            return ix.index_report([v for _, v in pairs], cfg.top_k)
        except ix.IndicesError as exc:
            log.warning("%s %s %s skipped: %s", scope, code, year, exc)
            return None

    for scope, code in iter_slices(cfg, panel):
        cols = list(years) + ["avg"]
        reports = _parallel(one, [(scope, code, y) for y in cols])
        for y, rep in zip(cols, reports):
            if rep is None:
                continue
            meta = {"scope": scope, "scope_code": code, "year": y, "field": field_name}
            stem = cfg.out / f"indices_{code}_{y}"
            if cfg.fmt == "json":
                _write_json(stem.with_suffix(".json"), {**meta, **rep.to_dict()})
            else:
                row = {**meta, **rep.to_dict()}
                _write_csv(stem.with_suffix(".csv"), list(row), [[_fmt(v) for v in row.values()]])
        table = [
            [name] + [_fmt(getattr(rep, name)) if rep else "" for rep in reports]
            for name in ix.REPORT_ROWS
        ]
        _write_csv(cfg.out / f"indices_{code}_table.csv", ["index"] + [str(c) for c in cols], table)
        print(f"indices {scope} {code}: {sum(r is not None for r in reports)} slice(s)")
    return EXIT_OK


def _variants(series: rs.RankedSeries, k: int):
    yield "all", series
    if k > 0:
        if k >= series.n:
            log.warning("exclude-top %d leaves no points (n=%d)", k, series.n)
            return
        yield f"minus_top{k}", rs.exclude_top(series, k)


def cmd_ranksize(cfg: RunConfig) -> int:
    panel = load_panel(cfg)
    years = _years(cfg, panel)
    field_name = cfg.value_field or "ati"
    cfg.out.mkdir(parents=True, exist_ok=True)

    def one(scope, code, year):
        pairs = _values(panel, scope, code, year, field_name)
        if pairs is None:
            return None
        try:
            series = rs.rank(pairs)
        except rs.FitError as exc:
            log.warning("%s %s %s skipped: %s", scope, code, year, exc)
            return None
        out = []
        for name, s in _variants(series, cfg.exclude_top):
            fits = rs.fit_models(s, cfg.models, refine=cfg.refine)
            out.append((name, s, fits))
        return out

    for scope, code in iter_slices(cfg, panel):
        results = _parallel(one, [(scope, code, y) for y in years])
        for year, variants in zip(years, results):
            if variants is None:
                continue
            stem = f"ranksize_{code}_{year}"
            doc = {"scope": scope, "scope_code": code, "year": year, "field": field_name, "variants": {}}
            long_rows = []
            for name, s, fits in variants:
                doc["variants"][name] = {
                    "n": s.n,
                    "excluded": [[r, str(i)] for r, i in s.excluded],
                    "fits": [f.to_dict() for f in fits],
                }
                if not fits:
                    log.warning("%s %s %s %s: too few points for any model", scope, code, year, name)
                for f in fits:
                    for p in rs.PARAM_NAMES[f.model]:
                        long_rows.append(
                            [name, f.model, f.fit_space, f.n, f.n_excluded, _fmt(f.r_squared),
                             p, _fmt(f.params[p]), _fmt(f.std_errors[p])]
                        )
                    _write_csv(
                        cfg.out / f"{stem}_{f.model}_{f.fit_space}_{name}.csv",
                        ["r", "y_observed", "y_model"],
                        [[r, _fmt(o), _fmt(m)] for r, o, m in rs.fitted_curve(s, f)],
                    )
            if cfg.fmt == "json":
                _write_json(cfg.out / f"{stem}.json", doc)
            else:
                _write_csv(
                    cfg.out / f"{stem}.csv",
                    ["variant", "model", "fit_space", "n", "excluded", "r_squared", "param", "value", "std_error"],
                    long_rows,
                )
        print(f"ranksize {scope} {code}: {sum(r is not None for r in results)} slice(s)")
    return EXIT_OK


def cmd_lorenz(cfg: RunConfig) -> int:
    panel = load_panel(cfg)
    years = _years(cfg, panel)
    field_name = cfg.value_field or "ati"
    cfg.out.mkdir(parents=True, exist_ok=True)
    peaks = []
    for scope, code in iter_slices(cfg, panel):
        for year in list(years) + ["avg"]:
            if year == "avg":
                pairs = five_year_average(panel, scope, code, field_name)
            else:
                pairs = _values(panel, scope, code, year, field_name)
            if pairs is None:
                continue
            try:
                curve = ix.lorenz([v for _, v in pairs])
            except ix.IndicesError as exc:
                log.warning("%s %s %s skipped: %s", scope, code, year, exc)
                continue
            _write_csv(
                cfg.out / f"lorenz_{code}_{year}.csv",
                ["j", "j_over_n", "L_j", "delta_L_j"],
                [[j, _fmt(f), _fmt(c), _fmt(d)] for j, f, c, d in curve.rows()],
            )
            frac, mag = ix.delta_lorenz_peak(curve)
            lval = float(curve.cumulative[int(round(frac * curve.n))])
            peaks.append([scope, code, year, curve.n, _fmt(frac), _fmt(mag), _fmt(lval),
                          _fmt(ix.gini_trapezoid(curve))])
            print(f"lorenz {scope} {code} {year}: n={curve.n} peak at {frac:.4f} (|dL|={mag:.4f}, L={lval:.4f})")
    _write_csv(
        cfg.out / "lorenz_peaks.csv",
        ["scope", "scope_code", "year", "n", "peak_fraction", "peak_magnitude", "peak_lorenz", "gini"],
        peaks,
    )
    return EXIT_OK


def cmd_benford(cfg: RunConfig) -> int:
    panel = load_panel(cfg)
    years = _years(cfg, panel)
    field_name = cfg.value_field or "ati"
    cfg.out.mkdir(parents=True, exist_ok=True)
    for scope, code in iter_slices(cfg, panel):
        for year in years:
            pairs = _values(panel, scope, code, year, field_name)
            if pairs is None:
                continue
            try:
                rep = bf.benford_report([v for _, v in pairs])
            except bf.BenfordError as exc:
                log.warning("%s %s %s skipped: %s", scope, code, year, exc)
                continue
            stem = cfg.out / f"benford_{code}_{year}"
            meta = {"scope": scope, "scope_code": code, "year": year, "field": field_name}
            if cfg.fmt == "json":
                _write_json(stem.with_suffix(".json"), {**meta, **rep.to_dict()})
            else:
                d = rep.to_dict()
                flat = {k: v for k, v in {**meta, **d}.items() if not isinstance(v, list)}
                _write_csv(stem.with_suffix(".csv"), list(flat), [[_fmt(v) for v in flat.values()]])
            _write_csv(
                cfg.out / f"benford_{code}_{year}_digits.csv",
                ["digit", "observed_freq", "expected_freq"],
                [[d, _fmt(o), _fmt(e)] for d, o, e in rep.rows()],
            )
            print(f"benford {scope} {code} {year}: chi2={rep.chi_square:.3f} p={rep.p_value:.3g} {rep.verdict}")
    return EXIT_OK


def cmd_histogram(cfg: RunConfig) -> int:
    if cfg.bin_width is None or cfg.bin_width <= 0:
        raise CliError(EXIT_IO, "histogram needs a positive --bin-width")
    panel = load_panel(cfg)
    years = _years(cfg, panel)
    field_name = cfg.value_field or "population"
    cfg.out.mkdir(parents=True, exist_ok=True)
    for scope, code in iter_slices(cfg, panel):
        for year in years:
            pairs = _values(panel, scope, code, year, field_name)
            if pairs is None:
                continue
            h = rs.histogram([float(v) for _, v in pairs], bin_width=cfg.bin_width, cap=cfg.cap)
            _write_csv(
                cfg.out / f"histogram_{code}_{year}.csv",
                ["bin_lo", "bin_hi", "count", "display_count", "truncated"],
                [[_fmt(lo), _fmt(hi), c, d, int(t)] for lo, hi, c, d, t in h.rows()],
            )
            print(f"histogram {scope} {code} {year}: {len(h.counts)} bins, {int(h.truncated.sum())} truncated")
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    if cfg.seed is None:
        raise CliError(EXIT_IO, "synth needs --seed")
    years = cfg.years or tuple(range(2007, 2012))
    try:
        records = synth_records(years=years, seed=cfg.seed, **cfg.synth)
    except ValueError as exc:
        raise CliError(EXIT_IO, f"bad synth parameters: {exc}") from None
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "cities.csv"
    with path.open("w", encoding="utf-8", newline="") as fh:
        write_city_csv(records, fh)
    print(f"synth: wrote {len(records)} records to {path}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "indices": cmd_indices,
    "ranksize": cmd_ranksize,
    "lorenz": cmd_lorenz,
    "benford": cmd_benford,
    "histogram": cmd_histogram,
    "synth": cmd_synth,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_IO
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = config_from_args(args)
        return COMMANDS[cfg.command](cfg)
    except CliError as exc:
        print(f"ineqkit: {exc}", file=sys.stderr)
        return exc.status
    except OSError as exc:
        print(f"ineqkit: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
