"""Outer EM for the monotone single-index mixture cure model.

The incidence coefficients are maximized on the unit sphere by an
augmented Lagrangian around a derivative-free simplex search (the
objective reaches gamma only through a data-dependent isotonic refit, so
analytic gradients are unreliable); the latency parameters come from the
weighted Cox profile likelihood and the weighted Breslow estimator.
Includes the score-based gamma variant, the logistic/Cox baseline, and
naive percentile bootstrap intervals.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from msic.data_model import (
    DataValidationError,
    IndexCoefficients,
    ModelParams,
    SurvivalDataset,
    validate_dataset,
)
from msic.isotonic import select_truncation_cv
from msic.latency import build_risk_index, survival_uncured, weighted_breslow, weighted_cox_beta
from msic.link_em import estep_weights, fit_link, link_objective
from msic.smoothing import (
    FALLBACK_BANDWIDTH,
    DegenerateIndexError,
    default_bandwidth,
    smooth_link,
)

__all__ = [
    "FitConfig",
    "FitError",
    "LogisticIncidence",
    "initialize",
    "gamma_objective",
    "maximize_gamma_al",
    "maximize_gamma_score",
    "fit_msic",
    "fit_logistic_cox",
    "bootstrap_ci",
    "observed_loglik",
]


class FitError(RuntimeError):
    """Unrecoverable numerical failure during model fitting."""


@dataclass(frozen=True)
class FitConfig:
    """Tuning constants for the EM fit.

    epsilon_prime : link truncation; bounds default to (eps', 1 - eps')
    use_cv_truncation : replace the fixed bounds by CV-selected (a, b)
    bandwidth_multiplier : m in h = m * r * n^(-1/5)
    gamma_solver : "augmented-lagrangian" (smoothed link) or "score"
    """

    epsilon_prime: float = 1e-6
    use_cv_truncation: bool = False
    bandwidth_multiplier: float = 1.0
    outer_tol: float = 1e-5
    outer_max_iter: int = 200
    link_tol: float = 1e-6
    link_max_iter: int = 500
    search_link_max_iter: int = 100
    gamma_solver: str = "augmented-lagrangian"
    gamma_maxfev: int = 80
    gamma_al_rounds: int = 6
    ascent_slack: float = 1e-9
    pe_alternate_orientation: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.epsilon_prime < 0.5):
            raise DataValidationError("epsilon_prime must lie in (0, 0.5)")
        if self.outer_tol <= 0 or self.link_tol <= 0:
            raise DataValidationError("tolerances must be positive")
        if self.gamma_solver not in ("augmented-lagrangian", "score"):
            raise DataValidationError(f"unknown gamma solver {self.gamma_solver!r}")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass(frozen=True)
class LogisticIncidence:
    """Parametric incidence of the logistic/Cox baseline: p = expit(b0 + g'x)."""

    intercept: float
    coef: tuple

    def evaluate(self, u):
        # u is the normalized index; rescale back to the raw coefficients
        raw = np.asarray(self.coef)
        nrm = np.linalg.norm(raw)
        return 1.0 / (1.0 + np.exp(-(self.intercept + np.asarray(u) * nrm)))

    def to_dict(self):
        return {"intercept": self.intercept, "coef": list(self.coef)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["intercept"], tuple(d["coef"]))


def _logistic_irls(x, target, max_iter=100, tol=1e-10):
    """Newton/IRLS for logistic regression with fractional responses.

    Returns (intercept, coefficients); raises FitError on divergence.
    """
    n, d = x.shape
    X = np.column_stack([np.ones(n), x])
    theta = np.zeros(d + 1)
    for _ in range(max_iter):
        eta = np.clip(X @ theta, -500, 500)
        p = 1.0 / (1.0 + np.exp(-eta))
        grad = X.T @ (target - p)
        W = p * (1.0 - p)
        H = (X * W[:, None]).T @ X
        try:
            step = np.linalg.solve(H + 1e-10 * np.eye(d + 1), grad)
        except np.linalg.LinAlgError:
            raise FitError("singular logistic information") from None
        theta = theta + step
        if not np.all(np.isfinite(theta)) or np.linalg.norm(theta) > 1e3:
            raise FitError("logistic separation")
        if np.max(np.abs(step)) < tol:
            break
    return theta[0], theta[1:]


def initialize(ds: SurvivalDataset):
    """Starting values: logistic regression of the event indicator on X for
    gamma, an unweighted Cox fit on the events for the latency, and the
    logistic function as the initial link."""
    if not np.any(ds.delta == 1):
        raise DataValidationError("no events: cure model inapplicable")
    if not np.any(ds.delta == 0):
        raise DataValidationError("no censored observations: cure model inapplicable")
    try:
        _, coef = _logistic_irls(ds.x, ds.delta)
        nrm = np.linalg.norm(coef)
        if nrm < 1e-12:
            raise FitError("null logistic fit")
        gamma0 = coef / nrm
    except FitError:
        gamma0 = np.zeros(ds.d)
        gamma0[0] = 1.0
    events = ds.subset(ds.delta == 1)
    ri_ev = build_risk_index(events)
    beta0 = weighted_cox_beta(events, np.ones(events.n), ri=ri_ev)
    latency0 = weighted_breslow(events, np.ones(events.n), beta0, ri=ri_ev)
    return gamma0, latency0


def _bandwidth_or_fallback(index, n, multiplier):
    try:
        return default_bandwidth(index, n, multiplier)
    except DegenerateIndexError:
        return FALLBACK_BANDWIDTH


def observed_loglik(ds: SurvivalDataset, p_rows, latency, largest_event_time):
    """Observed mixture log-likelihood at per-row uncure probabilities p_rows."""
    ev = ds.delta == 1
    eta = ds.z @ latency.beta
    lam_y = latency.cumhazard(ds.y)
    s_u = np.exp(-lam_y * np.exp(np.clip(eta, -500, 500)))
    s_u = np.where(ds.y > largest_event_time, 0.0, s_u)
    # baseline hazard jump at each event row's time
    vals = np.concatenate([[0.0], latency.values])
    idx_r = np.searchsorted(latency.times, ds.y[ev], side="right")
    idx_l = np.searchsorted(latency.times, ds.y[ev], side="left")
    jump = vals[idx_r] - vals[idx_l]
    if np.any(jump <= 0):
        return -np.inf
    p = np.asarray(p_rows, dtype=float)
    ll_ev = np.sum(np.log(p[ev]) + np.log(jump) + eta[ev] - lam_y[ev] * np.exp(eta[ev]))
    ll_ce = np.sum(np.log1p(-p[~ev] * (1.0 - s_u[~ev])))
    return float(ll_ev + ll_ce)


def gamma_objective(ds, gamma, latency_prev, w, cfg: FitConfig,
                    bounds, s_u=None, init_values=None):
    """Profiled incidence objective: refit the link at (gamma, beta_prev,
    Lambda_prev), smooth it, and evaluate the weighted Bernoulli
    log-likelihood with the fixed E-step weights w."""
    gamma = np.asarray(gamma, dtype=float)
    index = ds.x @ gamma
    step = fit_link(ds, gamma, latency_prev, init_values=init_values,
                    lower=bounds[0], upper=bounds[1], tol=cfg.link_tol,
                    max_iter=cfg.search_link_max_iter, index=index, s_u=s_u)
    h = _bandwidth_or_fallback(index, ds.n, cfg.bandwidth_multiplier)
    smoothed = smooth_link(step, h)
    return link_objective(smoothed.evaluate(index), w)


def _score_norm_objective(ds, gamma, latency_prev, w, cfg, bounds, s_u=None):
    """Negative squared norm of the incidence score, with the step link."""
    gamma = np.asarray(gamma, dtype=float)
    index = ds.x @ gamma
    step = fit_link(ds, gamma, latency_prev,
                    lower=bounds[0], upper=bounds[1], tol=cfg.link_tol,
                    max_iter=cfg.search_link_max_iter, index=index, s_u=s_u)
    phi = step.evaluate(index)
    resid = w / phi - (1.0 - w) / (1.0 - phi)
    score = resid @ ds.x
    return -float(score @ score)


def _maximize_on_sphere(objective, gamma_init, maxfev, rounds,
                        constraint_tol=1e-8, improve_tol=1e-7):
    """Augmented Lagrangian loop around Nelder-Mead for max f(g), |g|=1.

    Handles the multiplier/penalty updates (lambda += rho*c, rho *= 2) and
    returns the best unit-norm iterate seen; d=1 reduces to a sign choice.
    """
    g0 = np.asarray(gamma_init, dtype=float)
    if np.linalg.norm(g0) == 0:
        raise DataValidationError("gamma_init must be nonzero")
    g0 = g0 / np.linalg.norm(g0)
    d = g0.size
    if d == 1:
        cands = [np.array([1.0]), np.array([-1.0])]
        vals = [objective(c) for c in cands]
        return cands[int(np.argmax(vals))], max(vals)

    best_g, best_f = g0, objective(g0)
    lam, rho = 0.0, 10.0
    g = g0.copy()
    prev_f = best_f
    for _ in range(rounds):
        def penalized(v):
            c = v @ v - 1.0
            return -objective(v) + lam * c + 0.5 * rho * c * c

        simplex = np.vstack([g] + [g + 0.08 * np.eye(d)[i] for i in range(d)])
        res = minimize(penalized, g, method="Nelder-Mead",
                       options={"maxfev": maxfev, "xatol": 1e-4, "fatol": 1e-8,
                                "initial_simplex": simplex})
        g = res.x
        c = float(g @ g - 1.0)
        lam += rho * c
        rho *= 2.0
        gn = g / np.linalg.norm(g)
        f = objective(gn)
        if f > best_f:
            best_g, best_f = gn, f
        if abs(c) <= constraint_tol and abs(f - prev_f) < improve_tol:
            break
        prev_f = f
    return best_g, best_f


def maximize_gamma_al(ds, gamma_init, latency_prev, w, cfg: FitConfig,
                      bounds, s_u=None):
    """Unit-sphere maximizer of the profiled smoothed-link objective."""
    if s_u is None:
        s_u = survival_uncured(latency_prev, ds.y, ds.z, ds.largest_event_time)

    def obj(g):
        return gamma_objective(ds, g, latency_prev, w, cfg, bounds, s_u=s_u)

    return _maximize_on_sphere(obj, gamma_init, cfg.gamma_maxfev, cfg.gamma_al_rounds)


def maximize_gamma_score(ds, gamma_init, latency_prev, w, cfg: FitConfig,
                         bounds, s_u=None):
    """Unit-sphere minimizer of the squared score norm (non-smoothed link)."""
    if s_u is None:
        s_u = survival_uncured(latency_prev, ds.y, ds.z, ds.largest_event_time)

    def obj(g):
        return _score_norm_objective(ds, g, latency_prev, w, cfg, bounds, s_u=s_u)

    return _maximize_on_sphere(obj, gamma_init, cfg.gamma_maxfev, cfg.gamma_al_rounds)


def _link_bounds(ds, gamma, latency, cfg: FitConfig):
    """Fixed (eps', 1-eps') bounds, or the CV-selected truncation."""
    eps = cfg.epsilon_prime
    lo, hi = eps, 1.0 - eps
    cv_mu = None
    if cfg.use_cv_truncation:
        index = ds.x @ gamma
        p0 = 1.0 / (1.0 + np.exp(-index))
        s_u = survival_uncured(latency, ds.y, ds.z, ds.largest_event_time)
        w0 = estep_weights(ds.delta, np.clip(p0, eps, 1 - eps), s_u)
        a, b, cv_mu = select_truncation_cv(ds, gamma, w0, epsilon_prime=eps)
        lo = min(max(a, eps), 0.5 - 1e-9)
        hi = max(min(b, 1.0 - eps), 0.5 + 1e-9)
        if hi - lo < 1e-9:
            half = 5e-10
            lo, hi = lo - half, hi + half
    return lo, hi, cv_mu


def fit_msic(ds: SurvivalDataset, cfg: FitConfig = FitConfig()) -> ModelParams:
    """Full EM fit of the monotone single-index mixture cure model.

    Iterates the outer E-step, the sphere-constrained gamma step, the
    weighted Cox/Breslow latency step, and the link refit plus smoothing,
    until the estimators change by less than outer_tol. The observed
    log-likelihood is tracked every iteration; an update that would
    decrease it beyond a tiny slack is rejected and iteration stops at
    the best iterate (the profiled gamma step is only an approximate
    M-step, so monotone ascent is enforced rather than assumed).
    """
    validate_dataset(ds)
    ri = build_risk_index(ds)
    ymax = ds.largest_event_time
    gamma, latency = initialize(ds)
    lo, hi, cv_mu = _link_bounds(ds, gamma, latency, cfg)

    maximize = maximize_gamma_al if cfg.gamma_solver == "augmented-lagrangian" \
        else maximize_gamma_score

    index = ds.x @ gamma
    step = fit_link(ds, gamma, latency, lower=lo, upper=hi,
                    tol=cfg.link_tol, max_iter=cfg.link_max_iter, index=index)
    h = _bandwidth_or_fallback(index, ds.n, cfg.bandwidth_multiplier)
    smoothed = smooth_link(step, h)
    ll = observed_loglik(ds, np.clip(smoothed.evaluate(index), lo, hi), latency, ymax)
    history = [ll]

    best = (gamma, latency, smoothed, ll)
    converged = False
    stop_reason = "max-iterations"
    iterations = 0
    warm_rows = None

    for m in range(1, cfg.outer_max_iter + 1):
        iterations = m
        s_u = survival_uncured(latency, ds.y, ds.z, ymax)
        p = np.clip(smoothed.evaluate(index), lo, hi)
        w = estep_weights(ds.delta, p, s_u)

        gamma_new, _ = maximize(ds, gamma, latency, w, cfg, (lo, hi), s_u=s_u)
        beta_new = weighted_cox_beta(ds, w, latency.beta, ri=ri)
        latency_new = weighted_breslow(ds, w, beta_new, ri=ri)

        index_new = ds.x @ gamma_new
        step_new = fit_link(ds, gamma_new, latency_new, init_values=warm_rows,
                            lower=lo, upper=hi, tol=cfg.link_tol,
                            max_iter=cfg.link_max_iter, index=index_new)
        h = _bandwidth_or_fallback(index_new, ds.n, cfg.bandwidth_multiplier)
        smoothed_new = smooth_link(step_new, h)
        p_new = np.clip(smoothed_new.evaluate(index_new), lo, hi)
        ll_new = observed_loglik(ds, p_new, latency_new, ymax)

        if ll_new < best[3] - cfg.ascent_slack:
            converged = True
            stop_reason = "ascent-guard"
            break

        diff = max(
            float(np.linalg.norm(gamma_new - gamma)),
            float(np.linalg.norm(beta_new - latency.beta)),
            float(np.max(np.abs(latency_new.values - latency.values)))
            if latency_new.values.size == latency.values.size else np.inf,
        )
        gamma, latency, smoothed, ll = gamma_new, latency_new, smoothed_new, ll_new
        index = index_new
        warm_rows = p_new
        history.append(ll)
        if ll >= best[3]:
            best = (gamma, latency, smoothed, ll)
        if diff < cfg.outer_tol:
            converged = True
            stop_reason = "estimator-change"
            break

    gamma, latency, smoothed, ll = best
    return ModelParams(
        gamma=IndexCoefficients(gamma / np.linalg.norm(gamma)),
        latency=latency,
        link=smoothed,
        loglik=ll,
        iterations=max(iterations, 1),
        method="msic" if cfg.gamma_solver == "augmented-lagrangian" else "msic-score",
        converged=converged,
        extra={
            "loglik_history": history,
            "bounds": [lo, hi],
            "bandwidth": smoothed.bandwidth,
            "cv_mu": cv_mu,
            "stop_reason": stop_reason,
            "largest_event_time": ymax,
        },
    )


def fit_logistic_cox(ds: SurvivalDataset, cfg: FitConfig = FitConfig()) -> ModelParams:
    """Logistic/Cox mixture cure baseline with the same EM skeleton.

    The incidence M-step is a weighted logistic regression (intercept
    plus coefficients); the returned gamma is the unit-normalized
    non-intercept block, with the raw parameters kept in `extra`.
    """
    validate_dataset(ds)
    if not np.any(ds.delta == 1) or not np.any(ds.delta == 0):
        raise DataValidationError("cure model needs both events and censored rows")
    ri = build_risk_index(ds)
    ymax = ds.largest_event_time

    b0, coef = _logistic_irls(ds.x, ds.delta)
    events = ds.subset(ds.delta == 1)
    ri_ev = build_risk_index(events)
    beta = weighted_cox_beta(events, np.ones(events.n), ri=ri_ev)
    latency = weighted_breslow(events, np.ones(events.n), beta, ri=ri_ev)

    def predict(b0_, coef_):
        return 1.0 / (1.0 + np.exp(-np.clip(b0_ + ds.x @ coef_, -500, 500)))

    ll = observed_loglik(ds, np.clip(predict(b0, coef), 1e-12, 1 - 1e-12), latency, ymax)
    history = [ll]
    best = (b0, coef, latency, ll)
    converged = False
    iterations = 0
    for m in range(1, cfg.outer_max_iter + 1):
        iterations = m
        s_u = survival_uncured(latency, ds.y, ds.z, ymax)
        p = predict(b0, coef)
        w = estep_weights(ds.delta, p, s_u)
        try:
            b0_new, coef_new = _logistic_irls(ds.x, w)
        except FitError:
            converged = False
            break
        beta_new = weighted_cox_beta(ds, w, latency.beta, ri=ri)
        latency_new = weighted_breslow(ds, w, beta_new, ri=ri)
        p_new = 1.0 / (1.0 + np.exp(-np.clip(b0_new + ds.x @ coef_new, -500, 500)))
        ll_new = observed_loglik(ds, np.clip(p_new, 1e-12, 1 - 1e-12), latency_new, ymax)
        if ll_new < best[3] - cfg.ascent_slack:
            converged = True
            break
        diff = max(
            abs(b0_new - b0),
            float(np.linalg.norm(coef_new - coef)),
            float(np.linalg.norm(beta_new - latency.beta)),
            float(np.max(np.abs(latency_new.values - latency.values))),
        )
        b0, coef, latency = b0_new, coef_new, latency_new
        ll = ll_new
        history.append(ll)
        if ll >= best[3]:
            best = (b0, coef, latency, ll)
        if diff < cfg.outer_tol:
            converged = True
            break

    b0, coef, latency, ll = best
    nrm = np.linalg.norm(coef)
    gamma_n = coef / nrm if nrm > 0 else np.eye(ds.d)[0]
    return ModelParams(
        gamma=IndexCoefficients(gamma_n),
        latency=latency,
        link=LogisticIncidence(float(b0), tuple(coef.tolist())),
        loglik=ll,
        iterations=max(iterations, 1),
        method="lc",
        converged=converged,
        extra={
            "loglik_history": history,
            "intercept": float(b0),
            "raw_coef": list(coef),
            "largest_event_time": ymax,
        },
    )


_FITTERS = {
    "msic": lambda ds, cfg: fit_msic(ds, replace(cfg, gamma_solver="augmented-lagrangian")),
    "msic-score": lambda ds, cfg: fit_msic(ds, replace(cfg, gamma_solver="score")),
    "lc": fit_logistic_cox,
}


def fit_method(ds, cfg, method):
    if method not in _FITTERS:
        raise DataValidationError(f"unknown method {method!r}")
    return _FITTERS[method](ds, cfg)


def bootstrap_ci(ds: SurvivalDataset, cfg: FitConfig, B: int, level: float,
                 method: str = "msic"):
    """Naive percentile bootstrap intervals for gamma and beta.

    Rows are resampled with replacement B times; failed refits are
    skipped and counted, and more than 20% failures is an error.
    Returns a dict with per-coordinate (lower, upper) pairs.
    """
    if B < 2:
        raise DataValidationError("B must be >= 2")
    if not (0.0 < level < 1.0):
        raise DataValidationError("level must lie in (0, 1)")
    rng = np.random.default_rng(cfg.seed)
    draws = rng.integers(0, ds.n, size=(B, ds.n))
    gammas, betas = [], []
    failures = 0
    for b in range(B):
        boot = ds.subset(draws[b])
        try:
            fit = fit_method(boot, cfg, method)
            gammas.append(fit.gamma.gamma)
            betas.append(fit.latency.beta)
        except Exception:
            failures += 1
    if failures > 0.2 * B:
        raise FitError("unstable bootstrap")
    alpha = 1.0 - level
    out = {"failures": failures, "B": B, "level": level}
    for name, arr in (("gamma", np.array(gammas)), ("beta", np.array(betas))):
        lo = np.quantile(arr, alpha / 2, axis=0, method="lower")
        hi = np.quantile(arr, 1 - alpha / 2, axis=0, method="higher")
        out[name] = [[float(a), float(b)] for a, b in zip(lo, hi)]
    return out
