"""Marginal predictive distributions from linear quantile regression.

Each (lead-time, zone) pair gets its own set of quantile regressions over the
12 weather predictors. Predicted quantiles are clipped into the power support,
sorted to remove crossings, and joined into a piecewise-linear CDF anchored at
the support bounds.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigError, NumericalError, ValidationError

DEFAULT_LEVELS = np.round(np.arange(1, 100) / 100, 2)
MODEL_FORMAT_VERSION = 1


def pinball_loss(residuals, level):
    """Mean of ``u * (level - 1{u < 0})`` over the residuals ``u``."""
    u = np.asarray(residuals, dtype=float)
    return float(np.mean(u * (level - (u < 0))))


@dataclass(frozen=True)
class QuantileSet:
    levels: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if levels.shape != values.shape or levels.ndim != 1:
            raise ValidationError("levels and values must be 1-D and equally long")
        if np.any(np.diff(levels) <= 0) or levels[0] <= 0 or levels[-1] >= 1:
            raise ValidationError("levels must be strictly increasing inside (0, 1)")
        if np.any(np.diff(values) < 0):
            raise ValidationError("quantile values must be non-decreasing")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", values)


class PredictiveCdf:
    """Piecewise-linear CDF through ``(q_i, alpha_i)`` with linear tails.

    The curve runs from ``(lower_bound, 0)`` through every quantile anchor to
    ``(upper_bound, 1)``. Tied quantiles make a vertical step; ``evaluate`` is
    right-continuous there and ``evaluate_left`` gives the left limit.
    """

    __slots__ = ("quantile_set", "lower_bound", "upper_bound", "_xs", "_ps")

    def __init__(self, quantile_set: QuantileSet, lower_bound=0.0, upper_bound=1.0):
        q = quantile_set.values
        if lower_bound > upper_bound:
            raise ValidationError("lower_bound exceeds upper_bound")
        if q[0] < lower_bound - 1e-12 or q[-1] > upper_bound + 1e-12:
            raise ValidationError("quantiles fall outside the CDF support")
        self.quantile_set = quantile_set
        self.lower_bound = float(lower_bound)
        self.upper_bound = float(upper_bound)
        self._xs = np.concatenate(([lower_bound], np.clip(q, lower_bound, upper_bound),
                                   [upper_bound]))
        self._ps = np.concatenate(([0.0], quantile_set.levels, [1.0]))

    @classmethod
    def from_quantiles(cls, levels, values, lower_bound=0.0, upper_bound=1.0):
        return cls(QuantileSet(levels, values), lower_bound, upper_bound)

    @property
    def levels(self):
        return self.quantile_set.levels

    @property
    def quantiles(self):
        return self.quantile_set.values

    @property
    def anchors(self):
        return self._xs, self._ps

    def _blend(self, x, side, at_step, floor_at_lower):
        x = np.asarray(x, dtype=float)
        xs, ps = self._xs, self._ps
        j = np.searchsorted(xs, x, side=side)
        lo = np.clip(j - 1, 0, len(xs) - 2)
        hi = lo + 1
        width = xs[hi] - xs[lo]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(width > 0, (x - xs[lo]) / width, at_step)
        out = ps[lo] + (ps[hi] - ps[lo]) * np.clip(frac, 0, 1)
        out = np.where(j >= len(xs), 1.0, out)
        below = x <= self.lower_bound if floor_at_lower else x < self.lower_bound
        return np.where(below, 0.0, out)

    def evaluate(self, x):
        """``F(x)``; zero at and below the lower bound."""
        return self._blend(x, "right", 1.0, True)

    def evaluate_left(self, x):
        """Left limit ``F(x-)``; differs from :meth:`evaluate` only at steps."""
        return self._blend(x, "left", 0.0, True)

    def evaluate_right(self, x):
        """Right limit ``F(x+)``; counts an atom sitting on the lower bound."""
        return self._blend(x, "right", 1.0, False)

    def inverse(self, u):
        u = np.asarray(u, dtype=float)
        xs, ps = self._xs, self._ps
        j = np.clip(np.searchsorted(ps, u, side="left"), 1, len(ps) - 1)
        frac = (u - ps[j - 1]) / (ps[j] - ps[j - 1])
        out = xs[j - 1] + (xs[j] - xs[j - 1]) * np.clip(frac, 0, 1)
        return np.clip(out, self.lower_bound, self.upper_bound)

    def median(self):
        return float(self.inverse(0.5))

    def __repr__(self):
        return (f"PredictiveCdf(m={len(self.levels)}, "
                f"support=[{self.lower_bound}, {self.upper_bound}])")


class CdfStack:
    """Column-wise evaluation of many CDFs that share the same levels.

    Produces the same values as calling each :class:`PredictiveCdf` on its
    own column, but with array operations over ``(S, D)`` inputs.
    """

    def __init__(self, cdfs):
        cdfs = list(cdfs)
        if not cdfs:
            raise ValueError("need at least one CDF")
        ps = cdfs[0].anchors[1]
        if any(c.anchors[1].shape != ps.shape or np.any(c.anchors[1] != ps) for c in cdfs):
            raise ValueError("stacked CDFs must share their levels")
        self.cdfs = cdfs
        self.ps = ps
        self.xs = np.stack([c.anchors[0] for c in cdfs])
        self.lower = np.array([c.lower_bound for c in cdfs])
        self.upper = np.array([c.upper_bound for c in cdfs])

    def __len__(self):
        return len(self.cdfs)

    def _blend(self, x, side, at_step, floor_at_lower=True):
        x = np.asarray(x, dtype=float)
        xs, ps = self.xs, self.ps
        n = xs.shape[1]
        j = np.empty(x.shape, dtype=int)
        for d in range(xs.shape[0]):
            j[..., d] = np.searchsorted(xs[d], x[..., d], side=side)
        lo = np.clip(j - 1, 0, n - 2)
        cols = np.arange(xs.shape[0])
        x_lo, x_hi = xs[cols, lo], xs[cols, lo + 1]
        width = x_hi - x_lo
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(width > 0, (x - x_lo) / width, at_step)
        out = ps[lo] + (ps[lo + 1] - ps[lo]) * np.clip(frac, 0, 1)
        out = np.where(j >= n, 1.0, out)
        below = x <= self.lower if floor_at_lower else x < self.lower
        return np.where(below, 0.0, out)

    def evaluate(self, x):
        return self._blend(x, "right", 1.0)

    def evaluate_left(self, x):
        return self._blend(x, "left", 0.0)

    def evaluate_right(self, x):
        return self._blend(x, "right", 1.0, False)

    def inverse(self, u):
        u = np.asarray(u, dtype=float)
        xs, ps = self.xs, self.ps
        j = np.clip(np.searchsorted(ps, u, side="left"), 1, len(ps) - 1)
        frac = (u - ps[j - 1]) / (ps[j] - ps[j - 1])
        cols = np.arange(xs.shape[0])
        x_lo, x_hi = xs[cols, j - 1], xs[cols, j]
        out = x_lo + (x_hi - x_lo) * np.clip(frac, 0, 1)
        return np.clip(out, self.lower, self.upper)


def as_stack(cdfs):
    """``cdfs`` as a :class:`CdfStack`, or None when their levels differ."""
    if isinstance(cdfs, CdfStack):
        return cdfs
    try:
        return CdfStack(cdfs)
    except ValueError:
        return None


def cdf_evaluate(cdf: PredictiveCdf, x):
    return cdf.evaluate(x)


def cdf_inverse(cdf: PredictiveCdf, u):
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)):
        raise ValueError("u must lie in [0, 1]")
    return cdf.inverse(u)


def _segment_sq_integral(a, b, fa, fb):
    # exact integral of a squared linear function over [a, b]
    return (b - a) * (fa * fa + fa * fb + fb * fb) / 3.0


def crps(cdf: PredictiveCdf, obs: float) -> float:
    """CRPS of a piecewise-linear CDF, integrated exactly segment by segment."""
    y = float(obs)
    xs, ps = cdf.anchors
    a, b = xs[:-1], xs[1:]
    fa, fb = ps[:-1], ps[1:]
    below = b <= y
    above = a >= y
    split = ~below & ~above
    total = np.sum(_segment_sq_integral(a[below], b[below], fa[below], fb[below]))
    total += np.sum(_segment_sq_integral(a[above], b[above], fa[above] - 1, fb[above] - 1))
    if split.any():
        a_s, b_s, fa_s, fb_s = a[split], b[split], fa[split], fb[split]
        fy = fa_s + (fb_s - fa_s) * (y - a_s) / (b_s - a_s)
        total += np.sum(_segment_sq_integral(a_s, y, fa_s, fy))
        total += np.sum(_segment_sq_integral(y, b_s, fy - 1, fb_s - 1))
    total += max(cdf.lower_bound - y, 0.0) + max(y - cdf.upper_bound, 0.0)
    return float(total)


def reliability_diagram(cdfs, obs):
    """Per-level share of observations strictly below the predicted quantile.

    Returns ``(levels, coverage)``; a calibrated forecast has coverage = levels.
    """
    cdfs = list(cdfs)
    obs = np.asarray(obs, dtype=float)
    if len(cdfs) != len(obs):
        raise ValueError("cdfs and obs must have equal length")
    if not cdfs:
        raise ValueError("need at least one forecast")
    levels = cdfs[0].levels
    q = np.stack([c.quantiles for c in cdfs])
    coverage = np.mean(obs[:, None] < q, axis=0)
    return levels, coverage


def fit_quantile(X, y, level: float) -> np.ndarray:
    """Linear quantile regression coefficients, intercept first.

    Solves the LP dual of mean pinball minimization with HiGHS; the primal
    coefficients are the negated equality-constraint multipliers. Constant
    predictor columns are dropped (coefficient 0) with a warning.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(y)
    if n < 2 or X.shape[0] != n:
        raise ValueError("need at least 2 rows with matching X and y")
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    active = _active_columns(X)
    coef = np.zeros(X.shape[1] + 1)
    coef[np.r_[True, active]] = _solve_pinball(X[:, active], y, level)
    return coef


def _active_columns(X, warn=True):
    if X.shape[1] == 0:
        return np.zeros(0, dtype=bool)
    active = np.ptp(X, axis=0) > 0
    if warn and not active.all():
        warnings.warn(f"dropping {int((~active).sum())} constant predictor column(s)")
    return active


def _solve_pinball(X, y, level):
    n = len(y)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    design = np.c_[np.ones(n), (X - mu) / sd]
    res = linprog(-y, A_eq=design.T, b_eq=(1 - level) * design.sum(axis=0),
                  bounds=(0, 1), method="highs")
    if res.status != 0:
        raise NumericalError(f"quantile regression LP failed: {res.message}")
    beta = -res.eqlin.marginals
    slopes = beta[1:] / sd
    return np.r_[beta[0] - mu @ slopes, slopes]


@dataclass
class QuantileModel:
    """Coefficients of one quantile regression per level, intercept first."""

    levels: np.ndarray
    coef: np.ndarray
    lower_bound: float = 0.0
    upper_bound: float = 1.0

    @property
    def n_features(self):
        return self.coef.shape[1] - 1

    def predict_quantiles(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} predictors, got {X.shape[1]}")
        raw = self.coef[:, 0] + X @ self.coef[:, 1:].T
        return np.sort(np.clip(raw, self.lower_bound, self.upper_bound), axis=1)

    def to_dict(self):
        return {"levels": self.levels.tolist(), "coef": self.coef.tolist(),
                "lower_bound": self.lower_bound, "upper_bound": self.upper_bound}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["levels"], dtype=float), np.asarray(d["coef"], dtype=float),
                   float(d["lower_bound"]), float(d["upper_bound"]))


def fit_quantile_model(X, y, levels=DEFAULT_LEVELS, lower_bound=0.0,
                       upper_bound=1.0) -> QuantileModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    levels = np.asarray(levels, dtype=float)
    active = _active_columns(X)
    coef = np.zeros((len(levels), X.shape[1] + 1))
    mask = np.r_[True, active]
    for i, a in enumerate(levels):
        coef[i, mask] = _solve_pinball(X[:, active], np.asarray(y, dtype=float), a)
    return QuantileModel(levels, coef, lower_bound, upper_bound)


def predict_density(model: QuantileModel, predictors) -> PredictiveCdf:
    q = model.predict_quantiles(np.asarray(predictors, dtype=float)[None, :])[0]
    return PredictiveCdf.from_quantiles(model.levels, q, model.lower_bound,
                                        model.upper_bound)


def central_intervals(cdf: PredictiveCdf):
    """Central prediction intervals from symmetric level pairs.

    Returns ``(nominal, lower, upper)``; with the default 99 levels these are
    49 intervals of nominal coverage 0.02..0.98.
    """
    levels = cdf.levels
    q = cdf.quantiles
    pairs = []
    for i, a in enumerate(levels):
        if a >= 0.5:
            break
        j = np.flatnonzero(np.isclose(levels, 1 - a))
        if j.size:
            pairs.append((round(1 - 2 * a, 10), q[i], q[j[0]]))
    pairs.sort()
    nominal, lo, hi = (np.array(v) for v in zip(*pairs))
    return nominal, lo, hi


@dataclass
class MarginalModels:
    """Fitted quantile models for every (zone, lead-time) of a dataset."""

    zones: tuple
    lead_times: np.ndarray
    models: dict = field(default_factory=dict)

    def predict_cdfs(self, dataset) -> np.ndarray:
        """Object array ``(T, Z, K)`` of :class:`PredictiveCdf`."""
        T = dataset.n_days
        out = np.empty((T, len(self.zones), len(self.lead_times)), dtype=object)
        for j, z in enumerate(self.zones):
            jd = dataset.zones.index(z)
            for k, h in enumerate(self.lead_times):
                m = self.models[(z, int(h))]
                q = m.predict_quantiles(dataset.predictors[:, jd, k])
                for i in range(T):
                    out[i, j, k] = PredictiveCdf.from_quantiles(
                        m.levels, q[i], m.lower_bound, m.upper_bound)
        return out

    def to_json(self, path=None):
        doc = {
            "format": "pvtraj.marginals",
            "version": MODEL_FORMAT_VERSION,
            "zones": list(self.zones),
            "lead_times": [int(h) for h in self.lead_times],
            "models": [{"zone": z, "lead_time": h, **m.to_dict()}
                       for (z, h), m in sorted(self.models.items())],
        }
        text = json.dumps(doc, indent=1, sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text_or_path):
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text()
        doc = json.loads(text)
        if doc.get("format") != "pvtraj.marginals":
            raise ConfigError("not a pvtraj marginal-model document")
        if doc.get("version") != MODEL_FORMAT_VERSION:
            raise ConfigError(f"unsupported model format version {doc.get('version')}")
        models = {(m["zone"], m["lead_time"]): QuantileModel.from_dict(m)
                  for m in doc["models"]}
        return cls(tuple(doc["zones"]), np.asarray(doc["lead_times"]), models)


def fit_marginals(train, levels=DEFAULT_LEVELS) -> MarginalModels:
    out = MarginalModels(tuple(train.zones), np.asarray(train.lead_times))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for j, z in enumerate(train.zones):
            for k, h in enumerate(train.lead_times):
                out.models[(z, int(h))] = fit_quantile_model(
                    train.predictors[:, j, k], train.power[:, j, k], levels)
    return out


def crps_table(cdfs: np.ndarray, power: np.ndarray) -> np.ndarray:
    """Mean CRPS per (zone, lead-time) over days; inputs shaped ``(T, Z, K)``."""
    T, Z, K = power.shape
    out = np.zeros((Z, K))
    for j in range(Z):
        for k in range(K):
            out[j, k] = np.mean([crps(cdfs[i, j, k], power[i, j, k]) for i in range(T)])
    return out


@dataclass
class ClearSkyProxy:
    """Maximum expected power per clock hour (0..23) for one zone."""

    zone_id: int
    hours: np.ndarray
    values: np.ndarray
    level: float = 0.99

    def at(self, hours):
        lookup = dict(zip(self.hours.tolist(), self.values.tolist()))
        return np.array([lookup.get(int(h), 0.0) for h in np.asarray(hours)])

    def to_dict(self):
        return {"zone_id": self.zone_id, "level": self.level,
                "hours": self.hours.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["zone_id"]), np.asarray(d["hours"]), np.asarray(d["values"]),
                   float(d.get("level", 0.99)))


def fit_clear_sky(hours, power, zone_id: int = 1, level: float = 0.99) -> ClearSkyProxy:
    """Per-hour pinball fit at ``level`` with time-of-day as sole predictor.

    ``power`` is ``(n_days, len(hours))`` for one zone; NaN marks missing data.
    Time-of-day enters as one indicator per hour, so each hour's proxy is the
    pinball-optimal constant for that hour. Hours outside ``hours`` are night
    and fixed at zero; an hour without data is interpolated from neighbours.
    """
    hours = np.asarray(hours)
    power = np.asarray(power, dtype=float)
    all_hours = np.arange(24)
    values = np.zeros(24)
    missing = []
    for k, h in enumerate(hours):
        col = power[:, k]
        col = col[~np.isnan(col)]
        if len(col) < 2:
            missing.append(h)
            continue
        values[h] = fit_quantile(np.empty((len(col), 0)), col, level)[0]
    if missing:
        warnings.warn(f"clear-sky proxy: no data at hour(s) {missing}, interpolating")
        have = np.array([h for h in hours if h not in missing])
        if have.size == 0:
            raise ValidationError("no hour has data for the clear-sky fit")
        values[missing] = np.interp(missing, have, values[have])
    night = ~np.isin(all_hours, hours)
    values[night] = 0.0
    return ClearSkyProxy(int(zone_id), all_hours, np.clip(values, 0, 1), level)
