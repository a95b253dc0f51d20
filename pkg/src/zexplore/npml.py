"""Nonparametric maximum likelihood (NPML) mixing distributions fitted by EM.

The random-effects distribution is estimated as a discrete distribution
with atoms ``u_j`` and masses ``theta_j``.  All log-likelihoods use the
kernel convention of :mod:`zexplore.likelihood`.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import chi2

from .likelihood import (Family, SchemaError, UnitObservations, check_cohort,
                         count_matrix, kernel_matrix, mle_matrix, pooled_mle)

SELF_LIANG = "0.5*chi2(1) + 0.5*chi2(2)"


class ConvergenceError(RuntimeError):
    """EM hit its iteration cap; ``best`` holds the last fit."""

    def __init__(self, message: str, best: "MixtureFit"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class EMConfig:
    merge_tol: float = 1e-4
    prune_tol: float = 1e-8
    rel_tol: float = 1e-10
    patience: int = 10
    max_iter: int = 100_000
    max_atoms: int | None = None
    # "lrt": add atoms while the boundary LR test rejects; "npml": emergent count
    selection: str = "lrt"
    alpha: float = 0.05
    max_starts: int = 2000


@dataclass(frozen=True)
class MixtureFit:
    atoms: np.ndarray
    masses: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    cohort_key: str
    loglik_path: tuple[tuple[float, ...], ...] = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return len(self.masses)

    def to_dict(self) -> dict:
        return {
            "atoms": self.atoms.tolist(),
            "masses": self.masses.tolist(),
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class LrTestResult:
    statistic: float
    p_value: float
    df_convention: str

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value,
                "df_convention": self.df_convention}


def cohort_key(counts: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(counts, dtype=float).tobytes()).hexdigest()[:16]


def _row_logsumexp(a: np.ndarray) -> np.ndarray:
    # scipy's logsumexp costs more in overhead than the arithmetic on these sizes
    top = a.max(axis=1)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return top + np.log(np.exp(a - top[:, None]).sum(axis=1))


def _mixture_loglik(logk: np.ndarray, masses: np.ndarray) -> tuple[float, np.ndarray]:
    with np.errstate(divide="ignore"):
        a = logk + np.log(masses)[None, :]
    rows = _row_logsumexp(a)
    return float(rows.sum()), a - rows[:, None]


def _run_em(counts, probs, masses, cfg: EMConfig):
    """Plain EM from a starting support; returns (probs, masses, loglik, path, converged)."""
    totals = counts.sum(axis=1)
    path = []
    quiet = 0
    prev = None
    converged = False
    for _ in range(cfg.max_iter):
        logk = kernel_matrix(counts, probs)
        ll, logw = _mixture_loglik(logk, masses)
        path.append(ll)
        if prev is not None:
            if abs(ll - prev) <= cfg.rel_tol * max(1.0, abs(ll)):
                quiet += 1
                if quiet >= cfg.patience:
                    converged = True
                    break
            else:
                quiet = 0
        prev = ll
        w = np.exp(logw)
        wsum = w.sum(axis=0)
        masses = wsum / len(counts)
        keep = wsum > 0
        new = probs.copy()
        new[keep] = (w[:, keep].T @ counts) / (w[:, keep].T @ totals)[:, None]
        # roundoff can push a boundary atom to 1 + 2e-16
        new = np.clip(new, 0.0, None)
        probs = new / new.sum(axis=1, keepdims=True)
    return probs, masses, path[-1], path, converged


def _merge_prune(probs, masses, cfg: EMConfig):
    keep = masses > cfg.prune_tol
    probs, masses = probs[keep], masses[keep] / masses[keep].sum()
    order = np.lexsort(probs.T[::-1])
    probs, masses = probs[order], masses[order]
    out_p, out_m = [], []
    for p, m in zip(probs, masses):
        for j, q in enumerate(out_p):
            if np.max(np.abs(p - q)) < cfg.merge_tol:
                tot = out_m[j] + m
                out_p[j] = (out_m[j] * q + m * p) / tot
                out_m[j] = tot
                break
        else:
            out_p.append(p.copy())
            out_m.append(m)
    return np.array(out_p), np.array(out_m)


def _em_to_stable(counts, probs, masses, cfg: EMConfig, key: str, family: Family) -> MixtureFit:
    paths = []
    iterations = 0
    while True:
        probs, masses, ll, path, converged = _run_em(counts, probs, masses, cfg)
        paths.append(tuple(path))
        iterations += len(path)
        new_p, new_m = _merge_prune(probs, masses, cfg)
        if not converged:
            fit = _make_fit(family, new_p, new_m, counts, iterations, False, key, paths)
            raise ConvergenceError(f"EM did not converge in {cfg.max_iter} iterations", fit)
        if len(new_m) == len(masses):
            break
        probs, masses = new_p, new_m
    return _make_fit(family, new_p, new_m, counts, iterations, True, key, paths)


def _make_fit(family, probs, masses, counts, iterations, converged, key, paths) -> MixtureFit:
    ll, _ = _mixture_loglik(kernel_matrix(counts, probs), masses)
    atoms = family.from_probs(probs)
    order = np.lexsort(atoms.T[::-1])
    return MixtureFit(atoms[order], masses[order], ll, iterations, converged, key, tuple(paths))


def degenerate_fit(units: Sequence[UnitObservations], family: Family) -> MixtureFit:
    """One-atom fit at the pooled MLE."""
    check_cohort(units, family)
    counts = count_matrix(units, family)
    atom = pooled_mle(units, family).reshape(1, family.dim)
    ll, _ = _mixture_loglik(kernel_matrix(counts, family.to_probs(atom)), np.ones(1))
    return MixtureFit(atom, np.ones(1), ll, 0, True, cohort_key(counts), ())


def _npml(units, family, cfg: EMConfig) -> MixtureFit:
    counts = count_matrix(units, family)
    grid = np.vstack([mle_matrix(units, family), pooled_mle(units, family)[None, :]])
    grid = np.unique(grid, axis=0)
    probs = family.to_probs(grid)
    masses = np.full(len(grid), 1.0 / len(grid))
    return _em_to_stable(counts, probs, masses, cfg, cohort_key(counts), family)


def _split_starts(counts, family: Family, k: int, max_starts: int):
    """Starting supports from contiguous splits of the sorted unit MLEs."""
    est = family.from_probs(counts / counts.sum(axis=1, keepdims=True))
    order = np.lexsort(est.T[::-1])
    sorted_counts = counts[order]
    n = len(counts)
    cuts_all = itertools.combinations(range(1, n), k - 1)
    n_combos = _n_choose(n - 1, k - 1)
    if n_combos > max_starts:
        qs = np.linspace(0, n, k + 1).round().astype(int)[1:-1]
        cuts_all = [tuple(int(q) for q in qs)]
    for cuts in cuts_all:
        bounds = (0, *cuts, n)
        groups = [sorted_counts[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
        probs = np.array([g.sum(axis=0) / g.sum() for g in groups])
        masses = np.array([len(g) / n for g in groups], dtype=float)
        yield probs, masses


def _n_choose(a: int, b: int) -> int:
    from math import comb
    return comb(a, b) if 0 <= b <= a else 0


def _capped(units, family, k: int, cfg: EMConfig, npml_fit: MixtureFit | None = None) -> MixtureFit:
    if npml_fit is None:
        npml_fit = _npml(units, family, cfg)
    if k >= npml_fit.k:
        return npml_fit
    if k == 1:
        return degenerate_fit(units, family)
    counts = count_matrix(units, family)
    key = cohort_key(counts)
    best = None
    for probs, masses in _split_starts(counts, family, k, cfg.max_starts):
        try:
            fit = _em_to_stable(counts, probs, masses, cfg, key, family)
        except ConvergenceError as exc:
            fit = exc.best
        if best is None or fit.loglik > best.loglik + 1e-12:
            best = fit
    return best


def em_fit(units: Sequence[UnitObservations], family: Family,
           config: EMConfig | None = None) -> MixtureFit:
    """NPML estimate of the mixing distribution.

    With ``selection="npml"`` the support starts at every distinct unit MLE
    plus the pooled MLE, and the atom count emerges from merging and
    pruning.  With ``selection="lrt"`` (default) atoms are added one at a
    time while the boundary likelihood-ratio test against the smaller model
    has ``p < alpha``.  ``max_atoms`` caps the count in either mode.
    """
    cfg = config or EMConfig()
    units = tuple(units)
    check_cohort(units, family, min_units=2)
    full = _npml(units, family, cfg)
    if cfg.selection == "npml":
        if cfg.max_atoms is not None and full.k > cfg.max_atoms:
            full = _capped(units, family, cfg.max_atoms, cfg, full)
        # EM can stop with a draining atom that leaves it a hair below one atom
        null = degenerate_fit(units, family)
        return full if full.loglik > null.loglik else null
    if cfg.selection != "lrt":
        raise ValueError(f"unknown selection {cfg.selection!r}")
    limit = full.k if cfg.max_atoms is None else min(full.k, cfg.max_atoms)
    current = degenerate_fit(units, family)
    for k in range(2, limit + 1):
        candidate = _capped(units, family, k, cfg, full)
        # a slowly draining atom can leave the larger fit marginally worse
        if candidate.loglik <= current.loglik or lr_test(candidate, current).p_value >= cfg.alpha:
            break
        current = candidate
    return current


def lr_test(alt: MixtureFit, null: MixtureFit) -> LrTestResult:
    """Likelihood-ratio test of ``alt`` against a nested ``null`` fit."""
    if alt.cohort_key != null.cohort_key:
        raise SchemaError("fits come from different cohorts")
    if alt.loglik < null.loglik - 1e-6 * max(1.0, abs(null.loglik)):
        raise ValueError("alternative log-likelihood below the null's")
    stat = max(0.0, 2.0 * (alt.loglik - null.loglik))
    p = 0.5 * chi2.sf(stat, 1) + 0.5 * chi2.sf(stat, 2)
    return LrTestResult(stat, float(min(1.0, p)), SELF_LIANG)


def posterior_memberships(fit: MixtureFit, units: Sequence[UnitObservations],
                          family: Family) -> np.ndarray:
    """Responsibilities ``w[i, j]`` of atom ``j`` for unit ``i``."""
    logk = kernel_matrix(count_matrix(units, family), family.to_probs(fit.atoms))
    _, logw = _mixture_loglik(logk, fit.masses)
    return np.exp(logw)
