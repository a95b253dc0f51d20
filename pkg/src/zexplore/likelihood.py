"""Likelihood families for per-unit repeated measurements.

Every response is held as a vector of category counts.  A binomial unit
with ``y`` successes in ``n`` trials is the two-category count vector
``(y, n - y)`` and its parameter is the scalar success probability; a
multinomial unit carries ``K`` counts and a probability vector on the
simplex.  Likelihood values are *kernels*: the data-only combinatorial
constant is dropped because it cancels wherever the kernels are used.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import xlogy


class SchemaError(ValueError):
    """Observations that do not fit the declared family."""


@dataclass(frozen=True)
class Family:
    kind: str
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind == "binomial":
            if self.categories and len(self.categories) != 2:
                raise SchemaError("binomial family has exactly two categories")
        elif self.kind == "multinomial":
            if len(self.categories) < 2:
                raise SchemaError("multinomial family needs K >= 2 categories")
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError("duplicate category labels")
        else:
            raise SchemaError(f"unknown family kind {self.kind!r}")

    @classmethod
    def binomial(cls) -> "Family":
        return cls("binomial")

    @classmethod
    def multinomial(cls, categories: Sequence[str]) -> "Family":
        return cls("multinomial", tuple(str(c) for c in categories))

    @property
    def n_categories(self) -> int:
        return 2 if self.kind == "binomial" else len(self.categories)

    @property
    def dim(self) -> int:
        """Length of a parameter vector (m)."""
        return 1 if self.kind == "binomial" else len(self.categories)

    def to_probs(self, params) -> np.ndarray:
        """Map parameter vectors ``(..., m)`` to category probabilities ``(..., K)``."""
        params = np.asarray(params, dtype=float)
        if self.kind == "binomial":
            u = params[..., 0]
            return np.stack([u, 1.0 - u], axis=-1)
        return params

    def from_probs(self, probs) -> np.ndarray:
        probs = np.asarray(probs, dtype=float)
        if self.kind == "binomial":
            return probs[..., :1].copy()
        return probs.copy()

    def validate_params(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        if params.shape[-1] != self.dim:
            raise SchemaError(f"parameter vector must have length {self.dim}")
        if self.kind == "binomial":
            if np.any((params < 0) | (params > 1)):
                raise SchemaError("binomial parameter outside [0, 1]")
        else:
            if np.any(params < 0) or np.any(np.abs(params.sum(axis=-1) - 1.0) > 1e-12):
                raise SchemaError("multinomial parameter not on the simplex")
        return params


@dataclass(frozen=True)
class UnitObservations:
    """One unit's responses as sufficient statistics plus covariates.

    Binomial units set ``successes`` and ``trials``; multinomial units set
    ``counts`` (ordered as the family's categories).
    """

    unit_id: str
    successes: int | None = None
    trials: int | None = None
    counts: tuple[int, ...] | None = None
    covariates: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.counts is None:
            if self.successes is None or self.trials is None:
                raise SchemaError(f"unit {self.unit_id}: need successes/trials or counts")
            if self.trials < 1:
                raise SchemaError(f"unit {self.unit_id}: trials must be >= 1")
            if not 0 <= self.successes <= self.trials:
                raise SchemaError(f"unit {self.unit_id}: need 0 <= successes <= trials")
        else:
            if self.successes is not None or self.trials is not None:
                raise SchemaError(f"unit {self.unit_id}: give either counts or successes/trials")
            object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
            if len(self.counts) < 2:
                raise SchemaError(f"unit {self.unit_id}: need at least 2 categories")
            if min(self.counts) < 0:
                raise SchemaError(f"unit {self.unit_id}: negative count")
            if sum(self.counts) < 1:
                raise SchemaError(f"unit {self.unit_id}: total count must be >= 1")
        object.__setattr__(self, "covariates", dict(self.covariates))

    @classmethod
    def from_sequence(cls, unit_id: str, outcomes: Sequence[int], covariates=None):
        """Build a binomial unit from a raw 0/1 sequence."""
        outcomes = [int(v) for v in outcomes]
        if any(v not in (0, 1) for v in outcomes):
            raise SchemaError(f"unit {unit_id}: binary outcomes must be 0 or 1")
        return cls(unit_id, successes=sum(outcomes), trials=len(outcomes),
                   covariates=covariates or {})

    @property
    def is_binomial(self) -> bool:
        return self.counts is None

    @property
    def total(self) -> int:
        return self.trials if self.counts is None else sum(self.counts)


def category_counts(unit: UnitObservations, family: Family) -> np.ndarray:
    if family.kind == "binomial":
        if not unit.is_binomial:
            raise SchemaError(f"unit {unit.unit_id}: multinomial counts given to a binomial family")
        return np.array([unit.successes, unit.trials - unit.successes], dtype=float)
    if unit.is_binomial:
        raise SchemaError(f"unit {unit.unit_id}: binomial response given to a multinomial family")
    if len(unit.counts) != family.n_categories:
        raise SchemaError(
            f"unit {unit.unit_id}: {len(unit.counts)} counts, family has {family.n_categories}")
    return np.array(unit.counts, dtype=float)


def count_matrix(units: Sequence[UnitObservations], family: Family) -> np.ndarray:
    """Stack category counts into an ``(n, K)`` array."""
    return np.array([category_counts(u, family) for u in units], dtype=float).reshape(
        len(units), family.n_categories)


def _mle_from_counts(counts: np.ndarray, family: Family) -> np.ndarray:
    probs = counts / counts.sum(axis=-1, keepdims=True)
    return family.from_probs(probs)


def mle(unit: UnitObservations, family: Family) -> np.ndarray:
    """Closed-form maximum-likelihood estimate (observed proportions)."""
    return _mle_from_counts(category_counts(unit, family), family)


def mle_matrix(units: Sequence[UnitObservations], family: Family) -> np.ndarray:
    return _mle_from_counts(count_matrix(units, family), family)


def pooled_mle(units: Sequence[UnitObservations], family: Family) -> np.ndarray:
    """MLE of a single shared parameter from the concatenated counts."""
    if len(units) == 0:
        raise SchemaError("empty cohort")
    return _mle_from_counts(count_matrix(units, family).sum(axis=0), family)


def log_kernel(unit: UnitObservations, params, family: Family) -> float:
    """Log-likelihood kernel; 0 * ln 0 is taken as 0 and may return -inf."""
    counts = category_counts(unit, family)
    probs = family.to_probs(family.validate_params(params))
    return float(np.sum(xlogy(counts, probs)))


def kernel_matrix(counts: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """``L[i, j] = sum_c counts[i, c] * ln probs[j, c]`` with 0 ln 0 = 0."""
    return xlogy(counts[:, None, :], probs[None, :, :]).sum(axis=-1)


def cohort_kernels(units: Sequence[UnitObservations], family: Family, params) -> np.ndarray:
    """Kernel of every unit's data at every parameter vector, shape ``(n, len(params))``."""
    params = np.asarray(params, dtype=float).reshape(-1, family.dim)
    return kernel_matrix(count_matrix(units, family), family.to_probs(params))


def check_cohort(units: Sequence[UnitObservations], family: Family, min_units: int = 1) -> None:
    if len(units) < min_units:
        raise SchemaError(f"need at least {min_units} units")
    seen = set()
    for u in units:
        if u.unit_id in seen:
            raise SchemaError(f"duplicate unit id {u.unit_id!r}")
        seen.add(u.unit_id)
        category_counts(u, family)
