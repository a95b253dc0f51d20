"""Embedded CADET II reader data and the published numbers they should reproduce."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import mixedlogit, npml
from .likelihood import SchemaError, UnitObservations
from .render import TableOptions, table_cells
from .zmatrix import OrderSpec, compute_z, diagnostics, reorder
from .likelihood import Family

# center, cancers detected (y), recalls, screens (n)
DUAL_FIRST_DETECTION = (
    (2, 2, 10, 18), (2, 8, 26, 92), (2, 4, 19, 53), (3, 5, 11, 355),
    (1, 5, 16, 394), (3, 9, 27, 805), (2, 11, 36, 1022), (1, 15, 62, 1412),
    (1, 6, 24, 628), (2, 18, 76, 1922), (2, 11, 46, 1384), (2, 14, 67, 2128),
    (1, 8, 62, 1221), (3, 5, 25, 769), (1, 1, 3, 160), (3, 6, 29, 997),
    (3, 12, 61, 2002), (2, 7, 34, 1180), (3, 5, 23, 906), (3, 7, 27, 1312),
    (1, 8, 51, 1571), (1, 10, 57, 2132), (2, 7, 40, 1556), (1, 3, 21, 735),
    (3, 8, 48, 2166), (1, 4, 46, 1284),
)
DUAL_FIRST_OVERALL = (199, 947, 28204)

# center, cancers, recalls (y), screens (n); center None = missing reader id
CAD_RECALL_RAW = (
    (2, 11, 57, 953), (2, 11, 64, 1080), (2, 14, 59, 1012), (2, 7, 61, 1062),
    (2, 9, 69, 1257), (2, 9, 49, 921), (1, 16, 113, 2408), (2, 8, 46, 993),
    (2, 5, 46, 1037), (1, 12, 87, 2150), (2, 5, 36, 1037), (1, 11, 76, 2266),
    (3, 9, 61, 2045), (1, 17, 79, 2713), (3, 7, 27, 953), (3, 25, 84, 3089),
    (3, 9, 48, 1835), (3, 10, 35, 1390),
    (None, 3, 3, 3),
)
CAD_RECALL_OVERALL = (198, 1097, 28204)

# center, experience (years), y, n
CAD_VS_DUAL_FALSE_RECALL = (
    (1, 4, 21, 43), (1, 6, 20, 59), (1, 12, 29, 50), (1, 14, 17, 32), (1, 15, 13, 28),
    (2, 4, 38, 65), (2, 4, 27, 42), (2, 5, 29, 45), (2, 5, 28, 44), (2, 6, 18, 35),
    (2, 7, 26, 43), (2, 8, 29, 42), (2, 17, 34, 42), (2, 22, 38, 62),
    (3, 4, 35, 92), (3, 6, 46, 96), (3, 9, 61, 103), (3, 18, 45, 88),
)

TABLE1_CONCENTRATION = (290, 375, 363, 108, 92, 103, 109, 124, 73, 124, 83, 82, 68,
                        60, 47, 64, 76, 66, 63, 69, 74, 86, 82, 72, 124, 127)
TABLE2_CONCENTRATION = (170, 170, 160, 156, 156, 143, 257, 168, 183, 322, 172, 249,
                        171, 180, 141, 188, 183, 192)

# Transposed (z x 1,000) matrix for the CAD readers, centers 3, 1, 2 and
# ascending estimate within center.  First field is the row's center.
TABLE3_TEXT = """\
3&192&176&146&117&73&80&13&&&31&&&&&&&&
3&187&183&176&130&102&115&27&&&45&1&&&&&&&
3&172&176&188&138&132&150&50&1&&62&1&1&&&&&&
3&148&156&174&141&158&175&87&2&&84&3&1&&&&&&
3&111&117&128&136&171&176&149&7&&115&7&3&&&&&&
1&129&136&152&140&168&180&118&4&&100&5&2&&&&&&
1&37&35&24&93&109&77&249&72&1&169&33&18&1&&&&&
1&2&1&&19&7&1&57&322&75&109&150&111&25&7&5&4&2&3
1&&&&2&&&2&112&257&26&169&168&97&67&46&41&31&33
2&24&21&11&76&80&47&238&117&2&172&49&27&2&&&&&
2&&&&5&1&&8&216&214&51&183&161&64&34&22&19&13&15
2&&&&3&&&2&135&255&31&174&168&89&58&39&35&26&28
2&&&&&&&&7&97&3&78&104&143&151&130&124&116&114
2&&&&&&&&3&55&2&56&80&139&156&147&143&140&137
2&&&&&&&&1&19&1&31&50&122&145&156&159&164&162
2&&&&&&&&&12&&25&42&114&137&155&160&168&167
2&&&&&&&&&8&&19&34&104&126&152&159&170&170
2&&&&&&&&&6&&16&30&99&119&148&157&169&170
"""

TABLE3_CENTER_ORDER = (3, 1, 2)

COHORTS = ("dual_first_detection", "cad_recall", "cad_vs_dual_false_recall")


def table3_cells() -> tuple[tuple[int, ...], list[list[int | None]]]:
    """Row centers and cells (``None`` for blanks) of the printed transposed matrix."""
    centers, cells = [], []
    for line in TABLE3_TEXT.strip().splitlines():
        fields = line.split("&")
        centers.append(int(fields[0]))
        cells.append([int(f) if f else None for f in fields[1:]])
    return tuple(centers), cells


def load(name: str) -> list[UnitObservations]:
    """Per-unit observations for an embedded cohort."""
    if name == "dual_first_detection":
        return [UnitObservations(f"dual{i + 1:02d}", successes=y, trials=n,
                                 covariates={"center": c, "recalls": rec})
                for i, (c, y, rec, n) in enumerate(DUAL_FIRST_DETECTION)]
    if name == "cad_recall":
        return [UnitObservations(f"cad{i + 1:02d}", successes=y, trials=n,
                                 covariates={"center": c, "cancers": can})
                for i, (c, can, y, n) in enumerate(CAD_RECALL_RAW) if c is not None]
    if name == "cad_vs_dual_false_recall":
        return [UnitObservations(f"fr{i + 1:02d}", successes=y, trials=n,
                                 covariates={"center": c, "experience": e})
                for i, (c, e, y, n) in enumerate(CAD_VS_DUAL_FALSE_RECALL)]
    raise SchemaError(f"unknown cohort {name!r}; choose from {', '.join(COHORTS)}")


# ---------------------------------------------------------------- reproduction

@dataclass
class Target:
    name: str
    computed: object
    expected: object
    tolerance: float | None
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "computed": _plain(self.computed),
                "expected": _plain(self.expected), "tolerance": self.tolerance,
                "passed": self.passed}


@dataclass
class Report:
    targets: list[Target] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.targets)

    def add(self, name, computed, expected, tol=None, passed=None):
        if passed is None:
            passed = _within(computed, expected, tol)
        self.targets.append(Target(name, computed, expected, tol, bool(passed)))

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "n_targets": len(self.targets),
                "n_failed": sum(not t.passed for t in self.targets),
                "targets": [t.to_dict() for t in self.targets]}

    def to_text(self) -> str:
        lines = []
        for t in self.targets:
            tol = "" if t.tolerance is None else f" +/-{t.tolerance:g}"
            lines.append(f"{'PASS' if t.passed else 'FAIL'}  {t.name}: computed "
                         f"{_fmt(t.computed)} expected {_fmt(t.expected)}{tol}")
        failed = sum(not t.passed for t in self.targets)
        lines.append(f"{len(self.targets) - failed}/{len(self.targets)} targets passed")
        return "\n".join(lines) + "\n"


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def _fmt(v) -> str:
    v = _plain(v)
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "(" + ", ".join(_fmt(x) for x in v) + ")"
    return str(v)


def _within(computed, expected, tol) -> bool:
    c = np.asarray(_plain(computed), dtype=float)
    e = np.asarray(_plain(expected), dtype=float)
    if c.shape != e.shape:
        return False
    return bool(np.all(np.abs(c - e) <= (tol or 0.0) + 1e-12))


def table3_comparison(tol: int = 2) -> tuple[int, int, list[str]]:
    """Compare the rendered CAD matrix with the printed one; returns (cells ok, total, problems)."""
    units = load("cad_recall")
    z = reorder(compute_z(units, Family.binomial()),
                OrderSpec(by="covariate", covariate="center", levels=TABLE3_CENTER_ORDER))
    centers, printed = table3_cells()
    got = table_cells(z, TableOptions())
    problems = []
    ok = 0
    row_centers = tuple(int(u.covariates["center"]) for u in z.units)
    if row_centers != centers:
        problems.append(f"row centers {row_centers} != {centers}")
    for i, (prow, grow) in enumerate(zip(printed, got)):
        for j, (p, g) in enumerate(zip(prow, grow)):
            if p is None and g is None:
                ok += 1
            elif p is not None and g is not None and abs(p - g) <= tol:
                ok += 1
            else:
                problems.append(f"cell ({i + 1},{j + 1}): printed {p} computed {g}")
    return ok, sum(len(r) for r in printed), problems


def nested_fits(name: str):
    units = load(name)
    fam = Family.binomial()
    alt = npml.em_fit(units, fam)
    null = npml.degenerate_fit(units, fam)
    return alt, null, npml.lr_test(alt, null)


def mixed_fits(experience: str, nodes: int = 16):
    design = mixedlogit.experience_design(load("cad_vs_dual_false_recall"), experience)
    return mixedlogit.fit(design, nodes), mixedlogit.fixed_logit_fit(design)


def reproduce_all() -> Report:
    """Run every published-number check against the embedded data."""
    rep = Report()
    fam = Family.binomial()

    t0 = time.perf_counter()
    z1 = compute_z(load("dual_first_detection"), fam)
    d1 = np.rint(diagnostics(z1).diag * 1000).astype(int)
    elapsed = time.perf_counter() - t0
    for i, (got, want) in enumerate(zip(d1, TABLE1_CONCENTRATION)):
        rep.add(f"table1 concentration reader {i + 1}", int(got), want, 2)
    rep.add("table1 concentration runtime under 1 s", elapsed < 1.0, True,
            passed=elapsed < 1.0)

    z2 = compute_z(load("cad_recall"), fam)
    d2 = np.rint(diagnostics(z2).diag * 1000).astype(int)
    for i, (got, want) in enumerate(zip(d2, TABLE2_CONCENTRATION)):
        rep.add(f"table2 concentration reader {i + 1}", int(got), want, 2)

    ok, total, problems = table3_comparison()
    rep.add("table3 cells within 2 and blanks reproduced", ok, total, passed=not problems)

    for name, label, atoms, masses, ll, atom0, ll0 in (
        ("dual_first_detection", "npml detection", (0.0066, 0.0855), (0.891, 0.109),
         -1170.151, 0.0071, -1184.125),
        ("cad_recall", "npml cad recall", (0.0293, 0.0507), (0.449, 0.551),
         -4606.186, 0.0389, -4637.097),
    ):
        alt, null, lr = nested_fits(name)
        same_k = alt.k == len(atoms)
        rep.add(f"{label} atoms", alt.atoms[:, 0] if same_k else alt.atoms[:, 0].tolist(),
                atoms, 0.0005)
        rep.add(f"{label} masses", alt.masses if same_k else alt.masses.tolist(), masses, 0.01)
        rep.add(f"{label} loglik", alt.loglik, ll, 0.05)
        rep.add(f"{label} degenerate atom", float(null.atoms[0, 0]), atom0, 0.0005)
        rep.add(f"{label} degenerate loglik", null.loglik, ll0, 0.05)
        rep.add(f"{label} LR p-value", lr.p_value, "< 0.001", passed=lr.p_value < 0.001)

    mixed, fixed = mixed_fits("gt6")
    (_, or_c, lo_c, hi_c), (_, or_e, lo_e, hi_e) = mixedlogit.odds_ratios(mixed)
    rep.add("mixed logit gt6 OR center2", or_c, 2.01, 0.03)
    rep.add("mixed logit gt6 OR center2 CI", (lo_c, hi_c), (1.54, 2.61), 0.05)
    rep.add("mixed logit gt6 OR experience", or_e, 1.59, 0.03)
    rep.add("mixed logit gt6 OR experience CI", (lo_e, hi_e), (1.23, 2.06), 0.05)
    rep.add("mixed logit gt6 boundary flag", mixed.boundary_flag, True,
            passed=mixed.boundary_flag)
    fixed_or = [round(o, 3) for _, o, _, _ in mixedlogit.odds_ratios(fixed)]
    mixed_or = [round(o, 3) for _, o, _, _ in mixedlogit.odds_ratios(mixed)]
    rep.add("mixed logit gt6 fixed-effects ORs identical (3 dp)", fixed_or, mixed_or,
            passed=fixed_or == mixed_or)

    years, _ = mixed_fits("years")
    (_, _, _, _), (_, o, lo, hi) = mixedlogit.odds_ratios(years)
    rep.add("mixed logit years OR experience", o, 1.02, 0.02)
    rep.add("mixed logit years OR experience CI", (lo, hi), (1.00, 1.05), 0.03)
    rep.add("mixed logit years ln sigma2", years.ln_sigma2, 0.15, 0.10)

    logfit, _ = mixed_fits("log")
    (_, _, _, _), (_, o, lo, hi) = mixedlogit.odds_ratios(logfit)
    rep.add("mixed logit log OR experience", o, 1.33, 0.03)
    rep.add("mixed logit log OR experience CI", (lo, hi), (1.04, 1.70), 0.05)
    return rep
