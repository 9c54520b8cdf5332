"""Weighted Cox / Breslow estimation against direct-computation oracles."""

import numpy as np
import pytest

from msic.latency import (
    CoxError,
    build_risk_index,
    survival_uncured,
    weighted_breslow,
    weighted_cox_beta,
    weighted_cox_loglik,
)
from msic.data_model import SurvivalDataset


def _dataset(rng, n=40, q=1):
    z = rng.normal(size=(n, q))
    t = rng.exponential(1.0, n) * np.exp(-z @ np.full(q, 0.5))
    c = rng.exponential(2.0, n)
    y = np.minimum(t, c)
    delta = (t <= c).astype(float)
    if delta.sum() == 0:
        delta[0] = 1.0
    return SurvivalDataset(y=y, delta=delta, x=z.copy(), z=z)


def _partial_loglik_direct(ds, w, beta):
    """Loop-based weighted Cox partial log-likelihood (Breslow ties).

    Event rows carry weight one (they are uncured with certainty in the
    EM); the weights only rescale risk-set contributions.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    ll = 0.0
    for i in range(ds.n):
        if ds.delta[i] == 1.0:
            at_risk = ds.y >= ds.y[i]
            denom = np.sum(w[at_risk] * np.exp(ds.z[at_risk] @ beta))
            ll += ds.z[i] @ beta - np.log(denom)
    return ll


def _grid_maximizer(ds, w, lo=-5.0, hi=5.0):
    """Two-stage 1-d grid search oracle for the single-covariate model."""
    grid = np.arange(lo, hi + 1e-12, 0.01)
    vals = [_partial_loglik_direct(ds, w, b) for b in grid]
    b0 = grid[int(np.argmax(vals))]
    fine = np.arange(b0 - 0.02, b0 + 0.02 + 1e-12, 1e-4)
    vals = [_partial_loglik_direct(ds, w, b) for b in fine]
    return fine[int(np.argmax(vals))]


class TestWeightedCox:
    def test_loglik_matches_direct_computation(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            ds = _dataset(rng, n=30, q=2)
            ri = build_risk_index(ds)
            order = np.argsort(ds.y, kind="stable")
            w = rng.uniform(0.1, 1.0, ds.n)
            beta = rng.normal(size=2)
            got = weighted_cox_loglik(ri, w[order], ds.z[order], beta)
            assert got == pytest.approx(_partial_loglik_direct(ds, w, beta), abs=1e-9)

    def test_newton_matches_grid_oracle(self):
        # [DERIVED] 1-d grid search at step 1e-4 on five random datasets
        rng = np.random.default_rng(8)
        for _ in range(5):
            ds = _dataset(rng, n=35, q=1)
            w = rng.uniform(0.2, 1.0, ds.n)
            beta = weighted_cox_beta(ds, w)
            assert beta[0] == pytest.approx(_grid_maximizer(ds, w), abs=2e-4)

    def test_unit_weights_match_textbook_cox(self):
        rng = np.random.default_rng(44)
        ds = _dataset(rng, n=60, q=1)
        w = np.ones(ds.n)
        beta = weighted_cox_beta(ds, w)
        assert beta[0] == pytest.approx(_grid_maximizer(ds, w), abs=2e-4)

    def test_constant_covariate_gives_zero(self):
        y = np.array([1.0, 2.0, 3.0, 4.0])
        delta = np.array([1.0, 1.0, 0.0, 1.0])
        z = np.ones((4, 1))
        ds = SurvivalDataset(y=y, delta=delta, x=z.copy(), z=z)
        np.testing.assert_allclose(weighted_cox_beta(ds, np.ones(4)), [0.0])

    def test_collinear_covariates_raise(self):
        rng = np.random.default_rng(0)
        ds0 = _dataset(rng, n=30, q=1)
        z = np.hstack([ds0.z, ds0.z])  # exact duplicate column
        ds = SurvivalDataset(y=ds0.y, delta=ds0.delta, x=z.copy(), z=z)
        with pytest.raises(CoxError, match="collinear"):
            weighted_cox_beta(ds, np.ones(ds.n))


class TestBreslow:
    def test_beta_zero_equals_nelson_aalen(self):
        rng = np.random.default_rng(14)
        ds = _dataset(rng, n=50, q=1)
        lat = weighted_breslow(ds, np.ones(ds.n), np.zeros(1))
        # [TRIVIAL] Nelson-Aalen: jump d_i / (number at risk) at each event time
        times, jumps = [], []
        for t in np.unique(ds.y[ds.delta == 1.0]):
            times.append(t)
            jumps.append(np.sum((ds.y == t) & (ds.delta == 1.0)) / np.sum(ds.y >= t))
        np.testing.assert_allclose(lat.times, times)
        np.testing.assert_allclose(lat.values, np.cumsum(jumps), rtol=1e-12)

    def test_doubling_weights_halves_jumps(self):
        rng = np.random.default_rng(15)
        ds = _dataset(rng, n=30, q=1)
        beta = np.array([0.3])
        lat1 = weighted_breslow(ds, np.ones(ds.n), beta)
        lat2 = weighted_breslow(ds, 2.0 * np.ones(ds.n), beta)
        # risk-set weights double while event counts stay fixed
        np.testing.assert_allclose(lat2.jumps(), lat1.jumps() / 2.0, rtol=1e-12)

    def test_direct_computation(self):
        rng = np.random.default_rng(16)
        ds = _dataset(rng, n=25, q=1)
        w = rng.uniform(0.2, 1.0, ds.n)
        beta = np.array([-0.4])
        lat = weighted_breslow(ds, w, beta)
        for t, v in zip(lat.times, lat.jumps()):
            at_risk = ds.y >= t
            denom = np.sum(w[at_risk] * np.exp(ds.z[at_risk] @ beta))
            d = np.sum((ds.y == t) & (ds.delta == 1.0))
            assert v == pytest.approx(d / denom, rel=1e-10)


class TestSurvivalUncured:
    def test_exp_of_minus_hazard_and_zero_tail(self):
        from msic.data_model import LatencyParams
        lat = LatencyParams(beta=np.array([0.5]),
                            times=np.array([1.0, 2.0]),
                            values=np.array([0.3, 0.8]))
        z = np.array([[1.0], [0.0]])
        t = np.array([1.5, 1.5])
        expected = np.exp(-np.array([0.3 * np.exp(0.5), 0.3]))
        np.testing.assert_allclose(survival_uncured(lat, t, z, 2.0), expected)
        # zero-tail constraint past the largest event time
        np.testing.assert_allclose(
            survival_uncured(lat, np.array([2.5, 3.0]), z, 2.0), [0.0, 0.0])
        # at the largest event time itself the survival is still positive
        assert survival_uncured(lat, np.array([2.0]), z[:1], 2.0)[0] > 0.0
