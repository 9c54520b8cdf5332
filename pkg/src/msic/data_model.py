"""Core domain types: datasets, step links, latency parameters, fitted models.

All types are immutable after construction (frozen dataclasses holding
read-only numpy arrays) and may be shared freely between threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DataValidationError",
    "SurvivalDataset",
    "IndexCoefficients",
    "LatencyParams",
    "MonotoneStepLink",
    "ModelParams",
    "validate_dataset",
    "read_dataset_csv",
    "write_dataset_csv",
]


class DataValidationError(ValueError):
    """Raised when a dataset or parameter object violates its invariants."""


def _readonly(a, dtype=float, ndim=1):
    a = np.asarray(a, dtype=dtype)
    if a.ndim != ndim:
        raise DataValidationError(f"expected {ndim}-d array, got shape {a.shape}")
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SurvivalDataset:
    """Right-censored observations (y_i, delta_i, x_i, z_i).

    y : follow-up times, nonnegative
    delta : event indicators in {0, 1}
    x : (n, d) incidence covariates
    z : (n, q) latency covariates
    """

    y: np.ndarray
    delta: np.ndarray
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", _readonly(self.y))
        object.__setattr__(self, "delta", _readonly(self.delta))
        object.__setattr__(self, "x", _readonly(self.x, ndim=2))
        object.__setattr__(self, "z", _readonly(self.z, ndim=2))

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    @property
    def q(self):
        return self.z.shape[1]

    def subset(self, idx):
        return SurvivalDataset(self.y[idx], self.delta[idx], self.x[idx], self.z[idx])

    @property
    def largest_event_time(self):
        """Largest y with delta == 1 (the end of the observed event range)."""
        ev = self.y[self.delta == 1]
        if ev.size == 0:
            raise DataValidationError("dataset has no events")
        return float(ev.max())

    def to_dict(self):
        return {
            "y": self.y.tolist(),
            "delta": self.delta.tolist(),
            "x": self.x.tolist(),
            "z": self.z.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["y"], d["delta"], d["x"], d["z"])


def validate_dataset(ds: SurvivalDataset) -> None:
    """Check all SurvivalDataset invariants, naming the offending entry.

    Raises DataValidationError on dimension mismatch, negative time,
    non-binary indicator, or non-finite value.
    """
    n = ds.y.shape[0]
    for name, arr in (("delta", ds.delta), ("x", ds.x), ("z", ds.z)):
        if arr.shape[0] != n:
            raise DataValidationError(
                f"dimension mismatch: y has {n} rows, {name} has {arr.shape[0]}"
            )
    if ds.x.shape[1] < 1 or ds.z.shape[1] < 1:
        raise DataValidationError("covariate blocks must have at least one column")
    for name, arr in (("y", ds.y), ("x", ds.x), ("z", ds.z)):
        bad = ~np.isfinite(arr)
        if bad.any():
            where = np.argwhere(bad)[0]
            raise DataValidationError(f"non-finite value in {name} at row {where[0]}")
    neg = np.where(ds.y < 0)[0]
    if neg.size:
        raise DataValidationError(f"negative time at row {neg[0]}")
    nb = np.where((ds.delta != 0) & (ds.delta != 1))[0]
    if nb.size:
        raise DataValidationError(f"non-binary indicator at row {nb[0]}")


@dataclass(frozen=True)
class IndexCoefficients:
    """Unit-norm incidence index coefficients."""

    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", _readonly(self.gamma))
        nrm = np.linalg.norm(self.gamma)
        if abs(nrm - 1.0) > 1e-8:
            raise DataValidationError(f"gamma must have unit norm, got {nrm!r}")

    def to_dict(self):
        return {"gamma": self.gamma.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["gamma"])


@dataclass(frozen=True)
class LatencyParams:
    """Cox latency parameters: coefficients and a step cumulative hazard.

    The cumulative hazard is right-continuous and nondecreasing with
    Lambda(0) = 0; it is constant past its last jump time.
    """

    beta: np.ndarray
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", _readonly(self.beta))
        object.__setattr__(self, "times", _readonly(self.times))
        object.__setattr__(self, "values", _readonly(self.values))
        if self.times.shape != self.values.shape:
            raise DataValidationError("times and values must have equal length")
        if self.times.size:
            if np.any(np.diff(self.times) <= 0):
                raise DataValidationError("hazard jump times must be strictly increasing")
            if np.any(np.diff(self.values) < 0) or self.values[0] < 0:
                raise DataValidationError("cumulative hazard must be nondecreasing and >= 0")
        if not (np.all(np.isfinite(self.beta)) and np.all(np.isfinite(self.values))):
            raise DataValidationError("non-finite latency parameter")

    def cumhazard(self, t):
        """Lambda(t): right-continuous step evaluation, Lambda(0) = 0."""
        t = np.asarray(t, dtype=float)
        if self.times.size == 0:
            return np.zeros_like(t)
        idx = np.searchsorted(self.times, t, side="right")
        vals = np.concatenate([[0.0], self.values])
        return vals[idx]

    def jumps(self):
        return np.diff(np.concatenate([[0.0], self.values]))

    def to_dict(self):
        return {
            "beta": self.beta.tolist(),
            "times": self.times.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["beta"], d["times"], d["values"])


@dataclass(frozen=True)
class MonotoneStepLink:
    """Nondecreasing left-continuous step function with values in [lower, upper].

    The value on (knots[j-1], knots[j]] is values[j]; the function extends
    constantly beyond the first and last knot.
    """

    knots: np.ndarray
    values: np.ndarray
    lower: float
    upper: float

    def __post_init__(self):
        object.__setattr__(self, "knots", _readonly(self.knots))
        object.__setattr__(self, "values", _readonly(self.values))
        if self.knots.size == 0:
            raise DataValidationError("step link needs at least one knot")
        if self.knots.shape != self.values.shape:
            raise DataValidationError("knots and values must have equal length")
        if np.any(np.diff(self.knots) <= 0):
            raise DataValidationError("knots must be strictly increasing")
        if not (0.0 < self.lower < self.upper < 1.0):
            raise DataValidationError("bounds must satisfy 0 < lower < upper < 1")
        if np.any(np.diff(self.values) < -1e-15):
            raise DataValidationError("step values must be nondecreasing")
        if self.values[0] < self.lower - 1e-12 or self.values[-1] > self.upper + 1e-12:
            raise DataValidationError("step values must lie in [lower, upper]")

    def evaluate(self, u):
        """Evaluate at u (scalar or array) under the left-continuity convention."""
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(self.knots, u, side="left")
        idx = np.minimum(idx, self.knots.size - 1)
        out = self.values[idx]
        return float(out) if out.ndim == 0 else out

    def to_dict(self):
        return {
            "knots": self.knots.tolist(),
            "values": self.values.tolist(),
            "lower": self.lower,
            "upper": self.upper,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["knots"], d["values"], d["lower"], d["upper"])


@dataclass(frozen=True)
class ModelParams:
    """Full fit state: index coefficients, latency, link, diagnostics.

    `link` is whatever incidence object the fitting method produced:
    a SmoothedLink for the monotone methods, a parametric incidence for
    the logistic/Cox baseline. It must expose ``evaluate`` if `gamma`
    routing is used; methods that bundle their own x -> p mapping set
    ``predict_uncure`` accordingly.
    """

    gamma: IndexCoefficients
    latency: LatencyParams
    link: object
    loglik: float
    iterations: int
    method: str = "msic"
    converged: bool = True
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.loglik):
            raise DataValidationError("loglik must be finite")
        if self.iterations < 1:
            raise DataValidationError("iterations must be >= 1")

    def predict_uncure(self, x):
        """Fitted uncure probability p(x) for covariate rows x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.method == "lc":
            raw = np.asarray(self.extra["raw_coef"])
            eta = self.extra["intercept"] + x @ raw
            return 1.0 / (1.0 + np.exp(-eta))
        return self.link.evaluate(x @ self.gamma.gamma)

    def to_dict(self):
        return {
            "schema_version": 1,
            "method": self.method,
            "gamma": self.gamma.to_dict(),
            "latency": self.latency.to_dict(),
            "link_kind": type(self.link).__name__,
            "link": self.link.to_dict(),
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d):
        from msic.fit import LogisticIncidence
        from msic.smoothing import SmoothedLink

        kinds = {
            "SmoothedLink": SmoothedLink,
            "MonotoneStepLink": MonotoneStepLink,
            "LogisticIncidence": LogisticIncidence,
        }
        link = kinds[d["link_kind"]].from_dict(d["link"])
        return cls(
            gamma=IndexCoefficients.from_dict(d["gamma"]),
            latency=LatencyParams.from_dict(d["latency"]),
            link=link,
            loglik=d["loglik"],
            iterations=d["iterations"],
            method=d.get("method", "msic"),
            converged=d.get("converged", True),
            extra=d.get("extra", {}),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def read_dataset_csv(path, z_from_x=None, q=None):
    """Read the `y, delta, x1..xd, z1..zq` CSV format.

    z_from_x maps latency columns to incidence columns (1-based x column
    numbers) for shared covariates; when given, the CSV holds no z columns.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader])
    header = [h.strip() for h in header]
    if header[:2] != ["y", "delta"]:
        raise DataValidationError("CSV must start with columns y, delta")
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    zcols = [i for i, h in enumerate(header) if h.startswith("z")]
    y, delta = rows[:, 0], rows[:, 1]
    x = rows[:, xcols]
    if z_from_x is not None:
        z = x[:, [j - 1 for j in z_from_x]]
    elif zcols:
        z = rows[:, zcols]
    else:
        raise DataValidationError("no latency covariates: provide z columns or z_from_x")
    ds = SurvivalDataset(y, delta, x, z)
    validate_dataset(ds)
    return ds


def write_dataset_csv(ds: SurvivalDataset, path, include_z=True):
    header = ["y", "delta"] + [f"x{j+1}" for j in range(ds.d)]
    cols = [ds.y, ds.delta] + [ds.x[:, j] for j in range(ds.d)]
    if include_z:
        header += [f"z{j+1}" for j in range(ds.q)]
        cols += [ds.z[:, j] for j in range(ds.q)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(zip(*[np.asarray(c).tolist() for c in cols]))
