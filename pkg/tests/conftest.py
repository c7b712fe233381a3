from __future__ import annotations

import random
from pathlib import Path

import pytest

from ineqkit.panel import ChangeEvent, CityYearRecord, build_panel, merge, move

FIXTURES = Path(__file__).parent / "fixtures"
YEARS = tuple(range(2007, 2012))
PROVINCES = {"AA": "R1", "AB": "R1", "BA": "R2", "BB": "R2", "CA": "R3"}


def rec(year, city, ati_cents, province="AA", region="R1", population=100):
    return CityYearRecord(year, city, population, ati_cents, province, region)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def merge_panel():
    """A(10 EUR) and B(5 EUR) in 2007 merge into C from 2008."""
    records = [rec(2007, "A", 1000, population=7), rec(2007, "B", 500, population=3)]
    records += [rec(y, "C", 1500 + 100 * (y - 2008), population=10 + y - 2008) for y in YEARS[1:]]
    return build_panel(records, [merge(2008, ["A", "B"], "C")])


def random_panel(seed: int):
    """Random valid panel with merges (some chained or absorbing) and moves."""
    rng = random.Random(seed)
    codes: dict[str, tuple[str, str]] = {}
    alive: list[str] = []
    for i in range(rng.randint(4, 25)):
        prov = rng.choice(sorted(PROVINCES))
        codes[f"c{i:03d}"] = (prov, PROVINCES[prov])
        alive.append(f"c{i:03d}")
    next_id = len(alive)
    events: list[ChangeEvent] = []
    records: list[CityYearRecord] = []
    for year in YEARS:
        if year > YEARS[0]:
            touched = set()
            for _ in range(rng.randint(0, 2)):
                pool = sorted(set(alive) - touched)
                if len(pool) < 3:
                    break
                sources = rng.sample(pool, rng.randint(2, 3))
                if rng.random() < 0.5:
                    target = sources[0]
                else:
                    target = f"c{next_id:03d}"
                    next_id += 1
                    codes[target] = codes[sources[0]]
                for s in sources:
                    alive.remove(s)
                alive.append(target)
                touched.add(target)
                events.append(merge(year, sources, target))
            candidates = sorted(set(alive) - touched)
            if candidates and rng.random() < 0.6:
                city = rng.choice(candidates)
                prov = rng.choice(sorted(PROVINCES))
                codes[city] = (prov, PROVINCES[prov])
                events.append(move(year, city, prov, PROVINCES[prov]))
        for city in sorted(alive):
            prov, reg = codes[city]
            records.append(
                CityYearRecord(year, city, rng.randint(0, 10**5), rng.randint(0, 10**11), prov, reg)
            )
    return build_panel(records, events)


TOY = ["--cities", str(FIXTURES / "toy_cities.csv"), "--events", str(FIXTURES / "toy_events.csv")]
FAILURE_CASES = (
    (["--cities", str(FIXTURES / "dup_cities.csv")], 1),
    (["--cities", str(FIXTURES / "negative_cities.csv")], 1),
    (["--cities", str(FIXTURES / "does_not_exist.csv")], 2),
)


def cli_invocations(out: Path) -> list[list[str]]:
    """One invocation per subcommand on the bundled fixtures, writing under ``out``."""
    scopes = ["--scope", "province,region,country"]
    return [
        ["validate", *TOY, "--out", str(out / "validate")],
        ["indices", *TOY, *scopes, "--out", str(out / "indices")],
        ["indices", *TOY, "--format", "csv", "--out", str(out / "indices_csv")],
        ["ranksize", *TOY, *scopes, "--exclude-top", "1", "--refine", "--out", str(out / "ranksize")],
        ["lorenz", *TOY, *scopes, "--out", str(out / "lorenz")],
        ["benford", *TOY, *scopes, "--out", str(out / "benford")],
        ["histogram", *TOY, "--bin-width", "5000", "--cap", "10", "--out", str(out / "histogram")],
        ["synth", "--seed", "7", "--model", "lavalette3", "--n-cities", "60", "--out", str(out / "synth")],
        ["synth", "--seed", "7", "--model", "benford", "--n-cities", "500", "--out", str(out / "synth_benford")],
    ]


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
