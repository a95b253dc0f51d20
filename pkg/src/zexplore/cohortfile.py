"""Reading and writing cohort CSV files.

Binomial files are wide: ``unit_id, successes, trials`` followed by any
numeric covariate columns.  Multinomial files are long: ``unit_id,
category, count`` with per-unit covariates in an optional sidecar file
keyed on ``unit_id``.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

from .likelihood import Family, SchemaError, UnitObservations

BINOMIAL_COLUMNS = ("unit_id", "successes", "trials")
MULTINOMIAL_COLUMNS = ("unit_id", "category", "count")


def _rows(text: str, required: tuple[str, ...], what: str):
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError(f"{what}: empty file") from None
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{what}: line 1: missing column(s) {', '.join(missing)}")
    if len(set(header)) != len(header):
        raise SchemaError(f"{what}: line 1: duplicate column names")
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != len(header):
            raise SchemaError(f"{what}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        yield lineno, dict(zip(header, (f.strip() for f in row)))


def _count(value: str, column: str, lineno: int, what: str) -> int:
    try:
        v = int(value)
    except ValueError:
        raise SchemaError(f"{what}: line {lineno}: {column} {value!r} is not an integer") from None
    if v < 0:
        raise SchemaError(f"{what}: line {lineno}: {column} is negative")
    return v


def _real(value: str, column: str, lineno: int, what: str) -> float:
    try:
        v = float(value)
    except ValueError:
        raise SchemaError(f"{what}: line {lineno}: covariate {column} {value!r} is not numeric") from None
    if not math.isfinite(v):
        raise SchemaError(f"{what}: line {lineno}: covariate {column} is not finite")
    return v


def parse_binomial(text: str, what: str = "cohort") -> list[UnitObservations]:
    units, seen = [], set()
    for lineno, rec in _rows(text, BINOMIAL_COLUMNS, what):
        uid = rec["unit_id"]
        if not uid:
            raise SchemaError(f"{what}: line {lineno}: empty unit_id")
        if uid in seen:
            raise SchemaError(f"{what}: line {lineno}: duplicate unit_id {uid!r}")
        seen.add(uid)
        y = _count(rec["successes"], "successes", lineno, what)
        n = _count(rec["trials"], "trials", lineno, what)
        if n < 1:
            raise SchemaError(f"{what}: line {lineno}: trials must be >= 1")
        if y > n:
            raise SchemaError(f"{what}: line {lineno}: successes > trials")
        cov = {k: _real(v, k, lineno, what) for k, v in rec.items() if k not in BINOMIAL_COLUMNS}
        units.append(UnitObservations(uid, successes=y, trials=n, covariates=cov))
    return units


def parse_covariates(text: str, what: str = "covariates") -> dict[str, dict[str, float]]:
    out = {}
    for lineno, rec in _rows(text, ("unit_id",), what):
        uid = rec["unit_id"]
        if uid in out:
            raise SchemaError(f"{what}: line {lineno}: duplicate unit_id {uid!r}")
        out[uid] = {k: _real(v, k, lineno, what) for k, v in rec.items() if k != "unit_id"}
    return out


def parse_multinomial(text: str, covariates_text: str | None = None,
                      what: str = "cohort") -> tuple[list[UnitObservations], Family]:
    counts: dict[str, dict[str, int]] = {}
    categories: list[str] = []
    for lineno, rec in _rows(text, MULTINOMIAL_COLUMNS, what):
        uid, cat = rec["unit_id"], rec["category"]
        if not uid or not cat:
            raise SchemaError(f"{what}: line {lineno}: empty unit_id or category")
        per = counts.setdefault(uid, {})
        if cat in per:
            raise SchemaError(f"{what}: line {lineno}: duplicate (unit_id, category) ({uid}, {cat})")
        per[cat] = _count(rec["count"], "count", lineno, what)
        if cat not in categories:
            categories.append(cat)
    if len(categories) < 2:
        raise SchemaError(f"{what}: need at least 2 categories")
    cov = parse_covariates(covariates_text) if covariates_text else {}
    family = Family.multinomial(categories)
    units = []
    for uid, per in counts.items():
        c = tuple(per.get(k, 0) for k in categories)
        if sum(c) < 1:
            raise SchemaError(f"{what}: unit {uid!r} has no observations")
        units.append(UnitObservations(uid, counts=c, covariates=cov.get(uid, {})))
    return units, family


def read_cohort(path: str | Path, family: str = "binomial",
                covariates_path: str | Path | None = None):
    """Load a cohort file; returns ``(units, Family)``."""
    text = Path(path).read_text(encoding="utf-8")
    if family == "binomial":
        return parse_binomial(text, str(path)), Family.binomial()
    if family == "multinomial":
        side = Path(covariates_path).read_text(encoding="utf-8") if covariates_path else None
        return parse_multinomial(text, side, str(path))
    raise SchemaError(f"unknown family {family!r}")


def format_binomial(units) -> str:
    names: list[str] = []
    for u in units:
        for k in u.covariates:
            if k not in names:
                names.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*BINOMIAL_COLUMNS, *names])
    for u in units:
        w.writerow([u.unit_id, u.successes, u.trials,
                    *(f"{u.covariates[k]:g}" if k in u.covariates else "" for k in names)])
    return buf.getvalue()
