"""Inner EM for the bounded monotone link MLE at fixed (gamma, beta, Lambda).

Alternates expected cure-status weights with the truncated isotonic fit
on the tie-merged index positions until the link values stabilize.
"""

from __future__ import annotations

import numpy as np

from msic.data_model import MonotoneStepLink, SurvivalDataset
from msic.isotonic import IsotonicProblem, isotonic_mle_truncated, merge_ties
from msic.latency import survival_uncured

__all__ = ["estep_weights", "fit_link", "link_objective"]


def estep_weights(delta, p, s_u):
    """Expected uncure indicators w_i = delta_i + (1-delta_i) p S_u / (1 - p + p S_u).

    p are current uncure probabilities at the index values, s_u the
    uncured survival at the follow-up times (zero in the plateau).
    """
    p = np.asarray(p, dtype=float)
    s_u = np.asarray(s_u, dtype=float)
    delta = np.asarray(delta, dtype=float)
    num = p * s_u
    den = 1.0 - p + num
    w = delta + (1.0 - delta) * num / den
    return np.clip(w, 0.0, 1.0)


def link_objective(values_per_row, w):
    """Weighted Bernoulli log-likelihood of link values at the data rows."""
    v = np.asarray(values_per_row, dtype=float)
    return float(np.sum(w * np.log(v) + (1.0 - w) * np.log1p(-v)))


def fit_link(ds: SurvivalDataset, gamma, latency, init_values=None,
             lower=1e-6, upper=1.0 - 1e-6, tol=1e-6, max_iter=500,
             index=None, s_u=None) -> MonotoneStepLink:
    """Bounded monotone link MLE at fixed theta, by EM over isotonic fits.

    init_values, when given, are per-row starting link values (defaults
    to the logistic function of the index). The precomputed index and
    uncured survival can be passed to avoid rework in hot loops.
    """
    if index is None:
        index = ds.x @ np.asarray(gamma, dtype=float)
    if s_u is None:
        s_u = survival_uncured(latency, ds.y, ds.z, ds.largest_event_time)

    merged, _ = merge_ties(index, np.zeros_like(index))
    positions = merged.positions
    mult = merged.multiplicities
    row_pos = np.minimum(np.searchsorted(positions, index, side="left"),
                         positions.size - 1)

    if init_values is None:
        p_row = 1.0 / (1.0 + np.exp(-index))
    else:
        p_row = np.asarray(init_values, dtype=float)
    p_row = np.clip(p_row, lower, upper)

    wsum = np.bincount(row_pos, minlength=positions.size).astype(float)
    values = None
    for _ in range(max_iter):
        w = estep_weights(ds.delta, p_row, s_u)
        targets = np.bincount(row_pos, weights=w, minlength=positions.size) / wsum
        prob = IsotonicProblem(positions, targets, mult)
        link = isotonic_mle_truncated(prob, lower, upper)
        new_values = link.values
        p_row = new_values[row_pos]
        if values is not None and np.max(np.abs(new_values - values)) < tol:
            values = new_values
            break
        values = new_values
    return MonotoneStepLink(positions, values, lower, upper)
