"""Weighted Cox proportional hazards for the uncured subpopulation.

Newton-Raphson on the weighted log partial likelihood for beta, a
weighted Breslow-type step estimator for the baseline cumulative hazard,
and the zero-tail survival evaluation. Ties are handled Breslow-style.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from msic.data_model import DataValidationError, LatencyParams, SurvivalDataset

__all__ = [
    "CoxError",
    "RiskIndex",
    "build_risk_index",
    "weighted_cox_loglik",
    "weighted_cox_beta",
    "weighted_breslow",
    "survival_uncured",
]

_MAX_BETA_NORM = 1e3


class CoxError(RuntimeError):
    """Numerical failure in the weighted Cox step."""


@dataclass(frozen=True)
class RiskIndex:
    """Distinct event times, per-time event counts, and risk-set structure.

    Rows are pre-sorted by follow-up time; risk sets are suffixes of the
    sorted order, so sums over risk sets become reverse cumulative sums.
    """

    event_times: np.ndarray   # strictly increasing distinct times with delta=1
    d: np.ndarray             # events per distinct time
    order: np.ndarray         # row permutation sorting y ascending
    risk_start: np.ndarray    # per event time, first sorted row in the risk set
    event_rows_sorted: np.ndarray  # sorted-row indices of events, by time
    event_time_of_event: np.ndarray  # index into event_times per event row


def build_risk_index(ds: SurvivalDataset) -> RiskIndex:
    if not np.any(ds.delta == 1):
        raise DataValidationError("dataset has no events")
    order = np.argsort(ds.y, kind="stable")
    y_sorted = ds.y[order]
    delta_sorted = ds.delta[order]
    ev_mask = delta_sorted == 1
    ev_times_all = y_sorted[ev_mask]
    event_times, counts = np.unique(ev_times_all, return_counts=True)
    # risk set for time t: sorted rows with y >= t
    risk_start = np.searchsorted(y_sorted, event_times, side="left")
    event_rows_sorted = np.where(ev_mask)[0]
    event_time_of_event = np.searchsorted(event_times, y_sorted[event_rows_sorted])
    return RiskIndex(
        event_times=event_times,
        d=counts.astype(float),
        order=order,
        risk_start=risk_start,
        event_rows_sorted=event_rows_sorted,
        event_time_of_event=event_time_of_event,
    )


def _risk_sums(ri: RiskIndex, weights_sorted, z_sorted, beta, need_hessian=True):
    """S0, S1, S2 over risk sets: reverse cumulative weighted sums."""
    eta = z_sorted @ beta
    eta = np.clip(eta, -500, 500)
    we = weights_sorted * np.exp(eta)
    s0_all = np.cumsum(we[::-1])[::-1]
    s1_all = np.cumsum((we[:, None] * z_sorted)[::-1], axis=0)[::-1]
    s0 = s0_all[ri.risk_start]
    s1 = s1_all[ri.risk_start]
    s2 = None
    if need_hessian:
        zz = z_sorted[:, :, None] * z_sorted[:, None, :]
        s2_all = np.cumsum((we[:, None, None] * zz)[::-1], axis=0)[::-1]
        s2 = s2_all[ri.risk_start]
    return we, s0, s1, s2


def weighted_cox_loglik(ri: RiskIndex, weights_sorted, z_sorted, beta):
    """Weighted log partial likelihood (Breslow ties)."""
    eta = z_sorted @ beta
    we = weights_sorted * np.exp(np.clip(eta, -500, 500))
    s0 = np.cumsum(we[::-1])[::-1][ri.risk_start]
    if np.any(s0 <= 0):
        raise CoxError("empty weighted risk set")
    return float(np.sum(eta[ri.event_rows_sorted]) - np.sum(ri.d * np.log(s0)))


def weighted_cox_beta(ds: SurvivalDataset, w, beta0=None, ri: RiskIndex = None,
                      tol=1e-8, max_iter=50):
    """Newton-Raphson maximizer of the weighted log partial likelihood.

    Converges when the gradient sup-norm drops below tol; each Newton
    step is halved until the likelihood does not decrease.
    """
    if ri is None:
        ri = build_risk_index(ds)
    w_sorted = np.asarray(w, dtype=float)[ri.order]
    z_sorted = ds.z[ri.order]
    q = ds.q
    # covariates constant across subjects carry no information; by
    # convention return the zero vector
    if np.allclose(z_sorted, z_sorted[0], atol=0.0):
        return np.zeros(q)
    beta = np.zeros(q) if beta0 is None else np.array(beta0, dtype=float)
    ll = weighted_cox_loglik(ri, w_sorted, z_sorted, beta)
    for _ in range(max_iter):
        _, s0, s1, s2 = _risk_sums(ri, w_sorted, z_sorted, beta)
        if np.any(s0 <= 0):
            raise CoxError("empty weighted risk set")
        mean = s1 / s0[:, None]
        grad = z_sorted[ri.event_rows_sorted].sum(axis=0) - (ri.d[:, None] * mean).sum(axis=0)
        if np.max(np.abs(grad)) <= tol:
            break
        info = np.einsum("t,tij->ij", ri.d, s2 / s0[:, None, None]
                         - mean[:, :, None] * mean[:, None, :])
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise CoxError("collinear latency covariates") from None
        if not np.all(np.isfinite(step)):
            raise CoxError("collinear latency covariates")
        # step halving on likelihood decrease
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            ll_new = weighted_cox_loglik(ri, w_sorted, z_sorted, cand)
            if ll_new >= ll - 1e-12:
                break
            scale *= 0.5
        beta, ll = cand, max(ll, ll_new)
        if np.linalg.norm(beta) > _MAX_BETA_NORM:
            raise CoxError("partial likelihood unbounded")
    return beta


def weighted_breslow(ds: SurvivalDataset, w, beta, ri: RiskIndex = None) -> LatencyParams:
    """Weighted Breslow estimator: jumps d_t / sum_{j in R_t} w_j e^{beta z_j}."""
    if ri is None:
        ri = build_risk_index(ds)
    w_sorted = np.asarray(w, dtype=float)[ri.order]
    z_sorted = ds.z[ri.order]
    beta = np.asarray(beta, dtype=float)
    we = w_sorted * np.exp(np.clip(z_sorted @ beta, -500, 500))
    s0 = np.cumsum(we[::-1])[::-1][ri.risk_start]
    if np.any(s0 <= 0):
        raise CoxError("empty weighted risk set")
    jumps = ri.d / s0
    return LatencyParams(beta=beta, times=ri.event_times, values=np.cumsum(jumps))


def survival_uncured(latency: LatencyParams, t, z, largest_event_time):
    """S_u(t | z) = exp(-Lambda(t) e^{beta'z}), zero past the largest event time.

    Vectorized over rows when t and z are arrays.
    """
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    eta = z @ latency.beta if z.ndim > 1 else float(z @ latency.beta)
    s = np.exp(-latency.cumhazard(t) * np.exp(eta))
    s = np.where(t > largest_event_time, 0.0, s)
    return float(s) if s.ndim == 0 else s
