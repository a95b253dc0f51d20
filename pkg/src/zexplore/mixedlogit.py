"""Random-intercept logistic regression on grouped binomial data.

The group intercept ``v ~ N(0, sigma^2)`` is integrated out with
Gauss-Hermite quadrature; ``(beta, ln sigma^2)`` is found by quasi-Newton
maximisation and Wald intervals come from a finite-difference observed
information matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit, logsumexp

from .likelihood import SchemaError, UnitObservations

Z95 = 1.96
LN_SIGMA2_FLOOR = float(np.log(1e-10))
BOUNDARY_SIGMA2 = 1e-8
SIGMA2_STARTS = (0.01, 0.25, 1.0)


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class LogitDesign:
    group_ids: tuple[str, ...]
    successes: np.ndarray
    trials: np.ndarray
    X: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        y = np.asarray(self.successes, dtype=float)
        n = np.asarray(self.trials, dtype=float)
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.shape != (len(y), len(self.names)) or n.shape != y.shape:
            raise SchemaError("design arrays have inconsistent shapes")
        if np.any(n < 1) or np.any(y < 0) or np.any(y > n):
            raise SchemaError("need trials >= 1 and 0 <= successes <= trials")
        if not np.all(np.isfinite(X)):
            raise SchemaError("covariates must be finite")
        if not np.all(X[:, 0] == 1.0):
            raise SchemaError("first covariate must be the constant 1")
        object.__setattr__(self, "successes", y)
        object.__setattr__(self, "trials", n)
        object.__setattr__(self, "X", X)

    @property
    def r(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class MixedLogitFit:
    names: tuple[str, ...]
    beta: np.ndarray
    ln_sigma2: float
    cov: np.ndarray
    loglik: float
    quad_nodes: int
    boundary_flag: bool

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def to_dict(self) -> dict:
        se = self.se
        return {
            "names": list(self.names),
            "beta": self.beta.tolist(),
            "se": [None if not np.isfinite(s) else float(s) for s in se[: len(self.beta)]],
            "ln_sigma2": self.ln_sigma2,
            "ln_sigma2_se": None if not np.isfinite(se[-1]) else float(se[-1]),
            "odds_ratios": [
                {"name": name, "or": o, "lo95": lo, "hi95": hi}
                for name, o, lo, hi in odds_ratios(self)
            ],
            "loglik": self.loglik,
            "nodes": self.quad_nodes,
            "boundary_flag": self.boundary_flag,
        }


@lru_cache(maxsize=None)
def gh_nodes(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite abscissae and weights normalised to sum to one."""
    xi, w = np.polynomial.hermite.hermgauss(nodes)
    return xi, w / w.sum()


def _binkernel(y, n, eta):
    return y * log_expit(eta) + (n - y) * log_expit(-eta)


def _centres(y, n, eta, sigma2):
    """Mode and curvature scale of each group's integrand in ``v``.

    The score in ``v`` is strictly decreasing and changes sign inside
    ``[-n sigma^2, n sigma^2]``; Newton steps that leave the current
    bracket are replaced by bisection.
    """
    lo, hi = -n * sigma2, n * sigma2
    v = np.zeros_like(eta)
    for _ in range(200):
        p = expit(eta + v)
        g = y - n * p - v / sigma2
        lo = np.where(g > 0, v, lo)
        hi = np.where(g < 0, v, hi)
        cand = v + g / (n * p * (1 - p) + 1 / sigma2)
        inside = (cand > lo) & (cand < hi)
        new = np.where(inside, cand, 0.5 * (lo + hi))
        done = np.max(np.abs(new - v)) < 1e-12 * (1 + np.max(np.abs(v)))
        v = new
        if done:
            break
    p = expit(eta + v)
    return v, 1.0 / np.sqrt(n * p * (1 - p) + 1.0 / sigma2)


def _group_terms(design: LogitDesign, beta, ln_sigma2, nodes, adaptive):
    """Per-group log-likelihoods, node posterior weights, node offsets ``v`` and ``sigma^2``."""
    if nodes < 4:
        raise ValueError("need at least 4 quadrature nodes")
    y, n = design.successes, design.trials
    eta = design.X @ np.asarray(beta, dtype=float)
    sigma2 = float(np.exp(ln_sigma2))
    xi, w = gh_nodes(nodes)
    logw = np.log(w)
    if adaptive:
        mode, tau = _centres(y, n, eta, sigma2)
        v = mode[:, None] + np.sqrt(2.0) * tau[:, None] * xi[None, :]
        a = (_binkernel(y[:, None], n[:, None], eta[:, None] + v)
             - v ** 2 / (2 * sigma2) + xi[None, :] ** 2
             + logw[None, :] + np.log(tau / np.sqrt(sigma2))[:, None])
    else:
        v = np.broadcast_to(np.sqrt(2.0 * sigma2) * xi[None, :], (len(y), nodes))
        a = _binkernel(y[:, None], n[:, None], eta[:, None] + v) + logw[None, :]
    ll = logsumexp(a, axis=1)
    if not np.all(np.isfinite(ll)):
        raise FitError("non-finite group log-likelihood")
    return ll, np.exp(a - ll[:, None]), v, sigma2


def gh_loglik(design: LogitDesign, beta, ln_sigma2: float, nodes: int = 16,
              adaptive: bool = True) -> float:
    """Marginal log-likelihood (binomial kernel) with the intercept integrated out.

    ``adaptive=False`` places the nodes at ``sqrt(2) * sigma * xi``;
    the default recentres them at each group's posterior mode and scales by
    its curvature, which stays accurate for large groups and large sigma.
    """
    if not np.isfinite(ln_sigma2):
        return plain_loglik(design, beta)
    ll, _, _, _ = _group_terms(design, beta, ln_sigma2, nodes, adaptive)
    return float(ll.sum())


def gh_score(design: LogitDesign, beta, ln_sigma2: float, nodes: int = 16,
             adaptive: bool = True) -> np.ndarray:
    """Gradient of :func:`gh_loglik` in ``(beta, ln sigma^2)``, as posterior expectations."""
    _, post, v, sigma2 = _group_terms(design, beta, ln_sigma2, nodes, adaptive)
    eta = design.X @ np.asarray(beta, dtype=float)
    resid = design.successes[:, None] - design.trials[:, None] * expit(eta[:, None] + v)
    d_beta = design.X.T @ (post * resid).sum(axis=1)
    if adaptive:
        d_ls = (post * (v ** 2 / sigma2 - 1.0) / 2.0).sum()
    else:
        # nodes scale with sigma, so differentiate through them
        d_ls = (post * resid * v / 2.0).sum()
    return np.append(d_beta, d_ls)


def plain_loglik(design: LogitDesign, beta) -> float:
    eta = design.X @ np.asarray(beta, dtype=float)
    return float(_binkernel(design.successes, design.trials, eta).sum())


def _plain_score(design, beta):
    eta = design.X @ beta
    return design.X.T @ (design.successes - design.trials * expit(eta))


def _plain_info(design, beta):
    p = expit(design.X @ beta)
    return (design.X * (design.trials * p * (1 - p))[:, None]).T @ design.X


def _check_rank(design: LogitDesign):
    if np.linalg.matrix_rank(design.X) < design.r:
        raise SchemaError("covariate matrix is rank deficient")


def _fd_hessian(grad, theta: np.ndarray) -> np.ndarray:
    """Central differences of an analytic gradient, step 1e-5 * (1 + |theta|)."""
    k = len(theta)
    H = np.empty((k, k))
    for i in range(k):
        h = 1e-5 * (1 + abs(theta[i]))
        e = np.zeros(k)
        e[i] = h
        H[:, i] = (grad(theta + e) - grad(theta - e)) / (2 * h)
    return (H + H.T) / 2


def fixed_logit_fit(design: LogitDesign) -> MixedLogitFit:
    """Ordinary logistic regression (sigma^2 pinned to zero)."""
    _check_rank(design)
    beta = np.zeros(design.r)
    for _ in range(100):
        step = np.linalg.solve(_plain_info(design, beta), _plain_score(design, beta))
        beta = beta + step
        if np.max(np.abs(step)) < 1e-12:
            break
    else:
        raise FitError("logistic regression did not converge")
    cov = np.full((design.r + 1, design.r + 1), np.nan)
    cov[: design.r, : design.r] = np.linalg.inv(_plain_info(design, beta))
    return MixedLogitFit(design.names, beta, float("-inf"), cov,
                         plain_loglik(design, beta), 0, True)


def fit(design: LogitDesign, nodes: int = 16, adaptive: bool = True) -> MixedLogitFit:
    """Maximum-likelihood random-intercept logit over ``(beta, ln sigma^2)``."""
    _check_rank(design)
    base = fixed_logit_fit(design)
    r = design.r

    def negll(theta):
        return -gh_loglik(design, theta[:r], theta[r], nodes, adaptive)

    def neggrad(theta):
        return -gh_score(design, theta[:r], theta[r], nodes, adaptive)

    best_theta = np.append(base.beta, LN_SIGMA2_FLOOR)
    best_ll = -negll(best_theta)
    boundary_ll = best_ll
    for s2 in SIGMA2_STARTS:
        start = np.append(base.beta, np.log(s2))
        res = minimize(negll, start, jac=neggrad, method="BFGS",
                       options={"gtol": 1e-8, "maxiter": 2000})
        theta = np.maximum(res.x, np.append(np.full(r, -np.inf), LN_SIGMA2_FLOOR))
        if np.linalg.norm(neggrad(theta)) > 1e-4 and theta[r] > np.log(BOUNDARY_SIGMA2):
            continue
        ll = -negll(theta)
        if ll > best_ll + 1e-10:
            best_theta, best_ll = theta, ll
    boundary = best_ll <= boundary_ll + 1e-8 or best_theta[r] < np.log(BOUNDARY_SIGMA2)
    if boundary:
        # report the sigma^2 -> 0 limit, which is the fixed-effects fit
        best_theta = np.append(base.beta, LN_SIGMA2_FLOOR)
        best_ll = base.loglik
        H = _fd_hessian(lambda b: gh_score(design, b, LN_SIGMA2_FLOOR, nodes, adaptive)[:r],
                        best_theta[:r])
        cov = np.full((r + 1, r + 1), np.nan)
        cov[:r, :r] = np.linalg.inv(-H)
    else:
        H = _fd_hessian(lambda t: gh_score(design, t[:r], t[r], nodes, adaptive), best_theta)
        try:
            cov = np.linalg.inv(-H)
        except np.linalg.LinAlgError:
            raise FitError("observed information is singular") from None
        if np.any(np.linalg.eigvalsh(cov) < -1e-10):
            raise FitError("observed information is not positive definite")
    return MixedLogitFit(design.names, best_theta[:r], float(best_theta[r]), cov,
                         float(best_ll), nodes, bool(boundary))


def odds_ratios(fit: MixedLogitFit) -> list[tuple[str, float, float, float]]:
    """``(name, OR, lo95, hi95)`` for every coefficient except the constant."""
    se = fit.se
    rows = []
    for j in range(1, len(fit.beta)):
        b = fit.beta[j]
        rows.append((fit.names[j], float(np.exp(b)),
                     float(np.exp(b - Z95 * se[j])), float(np.exp(b + Z95 * se[j]))))
    return rows


def format_or(o: float, lo: float, hi: float) -> str:
    """Point estimate between its interval ends, e.g. ``1.54 2.01 2.61``."""
    return f"{lo:.2f} {o:.2f} {hi:.2f}"


EXPERIENCE_CODINGS = ("gt6", "years", "log")


def experience_design(units: Sequence[UnitObservations], experience: str = "gt6",
                      cut: float = 7.0, center_level: float = 2.0,
                      center: str = "center", years: str = "experience") -> LogitDesign:
    """Design ``(1, center == center_level, experience term)`` for grouped recall data.

    ``gt6`` is the indicator ``experience > cut``.  With the default cut of 7 a
    reader recorded at exactly 7 years sits in the baseline group.
    """
    if experience not in EXPERIENCE_CODINGS:
        raise SchemaError(f"experience coding must be one of {EXPERIENCE_CODINGS}")
    rows, ids, y, n = [], [], [], []
    for u in units:
        if not u.is_binomial:
            raise SchemaError("mixed logit needs binomial units")
        try:
            c, e = float(u.covariates[center]), float(u.covariates[years])
        except KeyError as exc:
            raise SchemaError(f"unit {u.unit_id}: missing covariate {exc.args[0]!r}") from None
        if experience == "gt6":
            x3 = float(e > cut)
        elif experience == "years":
            x3 = e
        else:
            if e <= 0:
                raise SchemaError(f"unit {u.unit_id}: log experience needs experience > 0")
            x3 = float(np.log(e))
        rows.append((1.0, float(c == center_level), x3))
        ids.append(u.unit_id)
        y.append(u.successes)
        n.append(u.trials)
    names = ("const", f"{center}{center_level:g}", {"gt6": "experience_gt6", "years": "experience",
                                                   "log": "log_experience"}[experience])
    return LogitDesign(tuple(ids), np.array(y), np.array(n), np.array(rows), names)


def covariate_design(units: Sequence[UnitObservations], covariates: Sequence[str]) -> LogitDesign:
    """Constant plus the named covariate columns taken as-is."""
    rows = []
    for u in units:
        if not u.is_binomial:
            raise SchemaError("mixed logit needs binomial units")
        try:
            rows.append([1.0] + [float(u.covariates[c]) for c in covariates])
        except KeyError as exc:
            raise SchemaError(f"unit {u.unit_id}: missing covariate {exc.args[0]!r}") from None
    return LogitDesign(tuple(u.unit_id for u in units),
                       np.array([u.successes for u in units]),
                       np.array([u.trials for u in units]),
                       np.array(rows).reshape(len(units), len(covariates) + 1),
                       ("const", *covariates))
