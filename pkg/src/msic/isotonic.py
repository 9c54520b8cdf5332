"""Order- and bound-restricted solvers for the monotone link M-step.

The workhorse is weighted pool-adjacent-violators; the bounded Bernoulli
MLE is its elementwise clip, and the range-regularized variant optimizes
the two clip levels against a shrinkage penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import isotonic_regression

from msic.data_model import DataValidationError, MonotoneStepLink

__all__ = [
    "IsotonicProblem",
    "merge_ties",
    "isotonic_ls",
    "isotonic_mle_truncated",
    "range_regularized_isotonic",
    "select_truncation_cv",
]


@dataclass(frozen=True)
class IsotonicProblem:
    """Tie-merged weighted isotonic instance.

    positions : strictly increasing index values
    targets : per-position weighted mean responses in [0, 1]
    multiplicities : per-position weights (merged tie counts)
    """

    positions: np.ndarray
    targets: np.ndarray
    multiplicities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        t = np.asarray(self.targets, dtype=float)
        m = np.asarray(self.multiplicities, dtype=float)
        if p.size == 0:
            raise DataValidationError("empty isotonic problem")
        if not (p.shape == t.shape == m.shape):
            raise DataValidationError("isotonic problem arrays must share a length")
        if np.any(np.diff(p) <= 0):
            raise DataValidationError("positions must be strictly increasing")
        if np.any(m < 1):
            raise DataValidationError("multiplicities must be >= 1")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "multiplicities", m)


def merge_ties(positions, responses, weights=None):
    """Collapse tied positions into an IsotonicProblem with summed weights.

    Targets become weighted means per distinct position, matching the
    cumulative-sum-diagram construction for tied index values.
    """
    positions = np.asarray(positions, dtype=float)
    responses = np.asarray(responses, dtype=float)
    if weights is None:
        weights = np.ones_like(positions)
    order = np.argsort(positions, kind="stable")
    p, r, w = positions[order], responses[order], weights[order]
    uniq, inv = np.unique(p, return_inverse=True)
    wsum = np.bincount(inv, weights=w)
    rsum = np.bincount(inv, weights=w * r)
    return IsotonicProblem(uniq, rsum / wsum, wsum), order


def isotonic_ls(prob: IsotonicProblem) -> np.ndarray:
    """Weighted isotonic least-squares fit of the problem targets.

    Equals the left derivatives of the greatest convex minorant of the
    cumulative sum diagram built from multiplicities and targets.
    """
    return isotonic_regression(prob.targets, weights=prob.multiplicities).x


def isotonic_mle_truncated(prob: IsotonicProblem, lower: float, upper: float) -> MonotoneStepLink:
    """Bounded monotone Bernoulli MLE: the isotonic LS fit clipped to [lower, upper].

    The clip is exact for the order- plus uniform-bound-restricted
    Bernoulli likelihood, so no separate bounded solver is needed.
    """
    if not (0.0 < lower < upper < 1.0):
        raise DataValidationError("bounds must satisfy 0 < lower < upper < 1")
    vals = np.clip(isotonic_ls(prob), lower, upper)
    return MonotoneStepLink(prob.positions, vals, lower, upper)


def _obj_low(f, t, m, a, mu):
    return float(np.sum(m * (t - np.maximum(f, a)) ** 2) - mu * a)


def _obj_high(f, t, m, b, mu):
    return float(np.sum(m * (t - np.minimum(f, b)) ** 2) + mu * b)


def _clip_level_low(fit, targets, mult, mu):
    """Exact minimizer of sum_i m_i (t_i - max(a, f_i))^2 - mu*a over a.

    Convex piecewise quadratic in a with breakpoints at the fitted
    levels; each segment's stationary point is compared on the full
    objective.
    """
    order = np.argsort(fit, kind="stable")
    f, t, m = fit[order], targets[order], mult[order]
    cw, cwt = np.cumsum(m), np.cumsum(m * t)
    best_a, best_val = f[0], _obj_low(f, t, m, f[0], mu)
    for j in range(1, f.size + 1):
        # a in [f_{j-1}, f_j) clips the first j points up to a
        lo = f[j - 1]
        hi = f[j] if j < f.size else np.inf
        a = (2.0 * cwt[j - 1] + mu) / (2.0 * cw[j - 1])
        a = max(a, lo) if not np.isfinite(hi) else min(max(a, lo), hi)
        v = _obj_low(f, t, m, a, mu)
        if v < best_val:
            best_a, best_val = a, v
    return best_a


def _clip_level_high(fit, targets, mult, mu):
    order = np.argsort(fit, kind="stable")
    f, t, m = fit[order], targets[order], mult[order]
    rw = np.cumsum(m[::-1])[::-1]
    rwt = np.cumsum((m * t)[::-1])[::-1]
    best_b, best_val = f[-1], _obj_high(f, t, m, f[-1], mu)
    for j in range(f.size - 1, -1, -1):
        # b in (f_{j-1}, f_j] clips points j..end down to b
        hi = f[j]
        lo = f[j - 1] if j > 0 else -np.inf
        b = (2.0 * rwt[j] - mu) / (2.0 * rw[j])
        b = min(b, hi) if not np.isfinite(lo) else min(max(b, lo), hi)
        v = _obj_high(f, t, m, b, mu)
        if v < best_val:
            best_b, best_val = b, v
    return best_b


def range_regularized_isotonic(prob: IsotonicProblem, mu: float):
    """Minimize sum m_i (t_i - y_i)^2 + mu (b - a) over a <= y_1 <= ... <= y_n <= b.

    For fixed (a, b) the optimal y is the clipped unconstrained isotonic
    fit, and the objective separates into convex piecewise quadratics in a
    and b; both are solved exactly. When the unconstrained levels cross
    (large mu) the solution collapses to the weighted mean.

    Returns (values, a, b).
    """
    if mu < 0:
        raise DataValidationError("mu must be nonnegative")
    fit = isotonic_ls(prob)
    t, m = prob.targets, prob.multiplicities
    if mu == 0.0:
        return fit, float(fit.min()), float(fit.max())
    a = _clip_level_low(fit, t, m, mu)
    b = _clip_level_high(fit, t, m, mu)
    if a >= b:
        c = float(np.sum(m * t) / np.sum(m))
        return np.full_like(fit, c), c, c
    vals = np.clip(fit, a, b)
    return vals, float(vals.min()), float(vals.max())


def default_mu_grid(n, size=20):
    """Log-spaced shrinkage grid scaled by the sample size."""
    return np.geomspace(1e-4, 1e2, size) * n


def select_truncation_cv(ds, gamma, weights, mu_grid=None, folds=5, epsilon_prime=1e-6):
    """K-fold CV choice of the data-driven link truncation (a, b).

    For each mu, range-regularized links are fitted on the training folds
    and scored on the held-out folds with the weight-adjusted Brier score
    (EPECP); the (a, b) of the winning mu, refitted on the full data, is
    returned together with the chosen mu. Intended to run once, at the
    first outer EM iteration.
    """
    from msic.metrics import epecp

    index = ds.x @ np.asarray(gamma, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = index.shape[0]
    if folds < 2:
        raise DataValidationError("folds must be >= 2")
    if folds > n:
        raise DataValidationError("fold count exceeds sample size")
    if mu_grid is None:
        mu_grid = default_mu_grid(n)
    mu_grid = np.asarray(mu_grid, dtype=float)
    if mu_grid.size == 0:
        raise DataValidationError("mu grid must be nonempty")

    fold_of = np.arange(n) % folds
    scores = np.zeros(mu_grid.size)
    for k in range(folds):
        test = fold_of == k
        train = ~test
        prob, _ = merge_ties(index[train], weights[train])
        for j, mu in enumerate(mu_grid):
            vals, a, b = range_regularized_isotonic(prob, float(mu))
            link_vals = np.clip(vals, epsilon_prime, 1 - epsilon_prime)
            idx = np.minimum(
                np.searchsorted(prob.positions, index[test], side="left"),
                prob.positions.size - 1,
            )
            scores[j] += epecp(weights[test], link_vals[idx])
    scores /= folds
    best = int(np.argmin(scores))
    prob, _ = merge_ties(index, weights)
    _, a, b = range_regularized_isotonic(prob, float(mu_grid[best]))
    return float(a), float(b), float(mu_grid[best])
