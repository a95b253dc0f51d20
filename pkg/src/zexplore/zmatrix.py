"""The z-matrix: normalised cross-likelihoods between units' fitted parameters.

Row ``i`` holds the likelihood of unit ``i``'s data under each unit's
estimate, normalised to sum to one.  Equivalently ``z[i, j]`` is the
posterior mass on ``u_hat[j]`` when the prior puts mass ``1/n`` on every
fitted estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .likelihood import (Family, SchemaError, UnitObservations, check_cohort,
                         count_matrix, kernel_matrix, mle_matrix)


@dataclass(frozen=True)
class ZMatrix:
    order: tuple[str, ...]
    estimates: np.ndarray
    entries: np.ndarray
    units: tuple[UnitObservations, ...]
    family: Family

    @property
    def n(self) -> int:
        return len(self.order)

    def covariate(self, name: str) -> np.ndarray:
        try:
            return np.array([float(u.covariates[name]) for u in self.units])
        except KeyError:
            raise SchemaError(f"covariate {name!r} missing for some units") from None


@dataclass(frozen=True)
class ZDiagnostics:
    diag: np.ndarray
    colsum: np.ndarray
    trace_over_n: float
    excess: np.ndarray
    ratio: np.ndarray

    def to_dict(self) -> dict:
        return {
            "diag": self.diag.tolist(),
            "colsum": self.colsum.tolist(),
            "trace_over_n": self.trace_over_n,
            "excess": self.excess.tolist(),
            "ratio": self.ratio.tolist(),
        }


def normalize_rows(log_kernels: np.ndarray) -> np.ndarray:
    """Row-normalise exponentiated log-kernels with per-row max subtraction."""
    log_kernels = np.asarray(log_kernels, dtype=float)
    top = log_kernels.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise SchemaError("a row has zero likelihood under every estimate")
    w = np.exp(log_kernels - top)
    # dividing by the explicit sum keeps rows stochastic to a few ulps
    return w / w.sum(axis=1, keepdims=True)


def compute_z(units: Sequence[UnitObservations], family: Family,
              estimates=None) -> ZMatrix:
    """Build the z-matrix for a cohort, using per-unit MLEs unless ``estimates`` is given."""
    units = tuple(units)
    if len(units) < 2:
        raise SchemaError("need at least 2 units")
    check_cohort(units, family, min_units=2)
    if estimates is None:
        estimates = mle_matrix(units, family)
    else:
        estimates = family.validate_params(np.asarray(estimates, dtype=float).reshape(len(units), family.dim))
    loglik = kernel_matrix(count_matrix(units, family), family.to_probs(estimates))
    entries = normalize_rows(loglik)
    return ZMatrix(tuple(u.unit_id for u in units), estimates, entries, units, family)


def diagnostics(z: ZMatrix) -> ZDiagnostics:
    d = np.diag(z.entries).copy()
    colsum = z.entries.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = d / colsum
    return ZDiagnostics(d, colsum, float(d.sum() / z.n), colsum - d, ratio)


def shrink_estimates(z: ZMatrix) -> np.ndarray:
    """Posterior-mean predictions ``sum_j z[i, j] * u_hat[j]`` under the empirical prior."""
    return z.entries @ z.estimates


def smoothing_weights(z: ZMatrix, literal: bool = False) -> np.ndarray:
    """Weights ``w[i, k]`` such that the smoothed covariate is ``w @ x``.

    The default weights are ``z[k, i] / z[+, i]``: the probability that the
    data came from unit ``k`` given parameter ``u_hat[i]``; each row sums to
    one.  ``literal=True`` gives ``z[i, k] / z[+, k]``, which does not.
    """
    colsum = z.entries.sum(axis=0)
    if literal:
        return z.entries / colsum[None, :]
    return z.entries.T / colsum[:, None]


def smooth_covariates(z: ZMatrix, x, literal: bool = False) -> np.ndarray:
    """Expected covariate value given each unit's estimate."""
    x = np.asarray(x, dtype=float)
    if x.shape != (z.n,):
        raise SchemaError(f"covariate vector has length {x.size}, expected {z.n}")
    if not np.all(np.isfinite(x)):
        raise SchemaError("covariate values must be finite")
    return smoothing_weights(z, literal) @ x


def density_weights(z: ZMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Column-sum density ``z[+, j] / n`` and its running sum, in the matrix's order."""
    density = z.entries.sum(axis=0) / z.n
    return density, np.cumsum(density)


@dataclass(frozen=True)
class OrderSpec:
    """How to order units.

    ``by`` is ``"estimate"`` (sort on ``component`` of the estimates),
    ``"covariate"`` (group on ``covariate`` in the sequence ``levels``, then
    sort within group on the estimate) or ``"explicit"`` (``ids``).
    """

    by: str = "estimate"
    component: int = 0
    descending: bool = False
    covariate: str | None = None
    levels: tuple[float, ...] | None = None
    ids: tuple[str, ...] | None = None


def order_indices(z: ZMatrix, spec: OrderSpec) -> np.ndarray:
    n = z.n
    if spec.by == "explicit":
        ids = tuple(spec.ids or ())
        if sorted(ids) != sorted(z.order) or len(set(ids)) != n:
            raise SchemaError("explicit order is not a permutation of the unit ids")
        pos = {uid: i for i, uid in enumerate(z.order)}
        return np.array([pos[uid] for uid in ids], dtype=int)

    if not 0 <= spec.component < z.estimates.shape[1]:
        raise SchemaError(f"estimate component {spec.component} out of range")
    est = z.estimates[:, spec.component]
    key = -est if spec.descending else est
    if spec.by == "estimate":
        return np.argsort(key, kind="stable")
    if spec.by == "covariate":
        if spec.covariate is None:
            raise SchemaError("covariate ordering needs a covariate name")
        cov = z.covariate(spec.covariate)
        levels = list(spec.levels) if spec.levels else sorted(set(cov.tolist()))
        rank = {float(v): r for r, v in enumerate(levels)}
        unknown = sorted({v for v in cov.tolist() if v not in rank})
        for v in unknown:
            rank[v] = len(rank)
        group = np.array([rank[v] for v in cov.tolist()])
        return np.lexsort((np.arange(n), key, group))
    raise SchemaError(f"unknown ordering {spec.by!r}")


def reorder(z: ZMatrix, key: OrderSpec | Sequence[str]) -> ZMatrix:
    """Permute rows, columns, order and estimates consistently."""
    if not isinstance(key, OrderSpec):
        key = OrderSpec(by="explicit", ids=tuple(key))
    idx = order_indices(z, key)
    return ZMatrix(
        tuple(z.order[i] for i in idx),
        z.estimates[idx],
        z.entries[np.ix_(idx, idx)],
        tuple(z.units[i] for i in idx),
        z.family,
    )
