"""Null simulations for graphical (lineup) tests of a z-matrix.

Under the null every unit shares the pooled estimate.  Each replicate
redraws every unit's responses with its observed number of trials and
recomputes the z-matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .likelihood import Family, UnitObservations, check_cohort, pooled_mle
from .zmatrix import OrderSpec, ZMatrix, compute_z, reorder

ORDER_RULES = ("descending", "fixed")


@dataclass(frozen=True)
class SimConfig:
    seed: int
    replicates: int = 3
    order_rule: str = "descending"

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.order_rule not in ORDER_RULES:
            raise ValueError(f"order_rule must be one of {ORDER_RULES}")


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent Philox stream keyed on ``(seed, replicate)``."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, replicate])
    return np.random.Generator(np.random.Philox(ss))


def draw_null_cohort(units: Sequence[UnitObservations], family: Family,
                     rng: np.random.Generator) -> list[UnitObservations]:
    probs = family.to_probs(pooled_mle(units, family))
    out = []
    for u in units:
        if family.kind == "binomial":
            y = int(rng.binomial(u.trials, probs[0]))
            out.append(UnitObservations(u.unit_id, successes=y, trials=u.trials,
                                        covariates=u.covariates))
        else:
            c = rng.multinomial(u.total, probs)
            out.append(UnitObservations(u.unit_id, counts=tuple(int(v) for v in c),
                                        covariates=u.covariates))
    return out


def simulate_null(units: Sequence[UnitObservations], family: Family,
                  config: SimConfig) -> list[ZMatrix]:
    check_cohort(units, family, min_units=2)
    sims = []
    for r in range(config.replicates):
        z = compute_z(draw_null_cohort(units, family, replicate_rng(config.seed, r)), family)
        if config.order_rule == "descending":
            z = reorder(z, OrderSpec(by="estimate", descending=True))
        sims.append(z)
    return sims


def trace_over_n(z: ZMatrix) -> float:
    return float(np.trace(z.entries) / z.n)


@dataclass(frozen=True)
class Lineup:
    panels: tuple[ZMatrix, ...]
    rows: int
    cols: int
    observed_index: int
    seed: int

    def answer(self) -> dict:
        return {"seed": self.seed, "observed_index": self.observed_index,
                "rows": self.rows, "cols": self.cols}


def grid_shape(m: int) -> tuple[int, int]:
    cols = math.ceil(math.sqrt(m))
    return math.ceil(m / cols), cols


def lineup_panels(observed: ZMatrix, sims: Sequence[ZMatrix], seed: int,
                  fixed_position: bool = False) -> Lineup:
    """Place the observed matrix among the simulated ones.

    The observed panel's slot is drawn from ``seed`` unless
    ``fixed_position`` puts it top-left.
    """
    if not sims:
        raise ValueError("need at least one simulated matrix")
    m = len(sims) + 1
    rows, cols = grid_shape(m)
    pos = 0 if fixed_position else int(replicate_rng(seed, 2**32).integers(m))
    panels = list(sims)
    panels.insert(pos, observed)
    return Lineup(tuple(panels), rows, cols, pos, seed)
