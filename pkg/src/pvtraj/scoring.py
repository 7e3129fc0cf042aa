"""Multivariate verification of trajectory sets.

Energy score, variogram score, intermittency events with Brier scores, and
PIT histograms of trajectories against their marginals. Scores for a single
issue time are computed here; averaging over days is left to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ConfigError
from .marginals import as_stack

UNIFORM = "uniform"
CORRELATION = "correlation_weighted"
INVERSE_DISTANCE = "inverse_distance"
VS_MODES = (UNIFORM, CORRELATION, INVERSE_DISTANCE)
VS_NAMES = {UNIFORM: "VS1", CORRELATION: "VS2", INVERSE_DISTANCE: "VS3"}

INTERMITTENT = "intermittent_or"
LONG_LASTING = "long_lasting_and"
GRADIENT = "gradient"
EVENT_KINDS = (INTERMITTENT, LONG_LASTING, GRADIENT)


def energy_score(obs, paths) -> float:
    obs = np.asarray(obs, dtype=float)
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    if paths.shape[1] != obs.shape[0]:
        raise ValueError("observation and trajectory dimensions differ")
    S = paths.shape[0]
    spread = np.linalg.norm(paths - obs, axis=1).mean()
    if S == 1:
        return float(spread)
    # pdist covers each unordered pair once; the double sum counts it twice
    return float(spread - pdist(paths).sum() / S ** 2)


@dataclass(frozen=True)
class VsConfig:
    weights: np.ndarray
    gamma: float = 0.5
    mode: str = UNIFORM

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ConfigError("VS weights must be a square matrix")
        if np.any(w < 0) or not np.allclose(w, w.T):
            raise ConfigError("VS weights must be symmetric and non-negative")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ConfigError("VS order gamma must be finite and positive")
        object.__setattr__(self, "weights", w)

    @property
    def name(self) -> str:
        return VS_NAMES[self.mode]


def _forecast_variogram(paths, gamma, chunk):
    D = paths.shape[1]
    out = np.zeros((D, D))
    for start in range(0, paths.shape[0], chunk):
        block = paths[start:start + chunk]
        out += (np.abs(block[:, :, None] - block[:, None, :]) ** gamma).sum(axis=0)
    return out / paths.shape[0]


def variogram_score(obs, paths, cfg: VsConfig, chunk: int = 512) -> float:
    return variogram_scores(obs, paths, [cfg], chunk)[0]


def variogram_scores(obs, paths, cfgs, chunk: int = 512) -> list:
    """Variogram score for several weightings; the forecast part is shared per order."""
    obs = np.asarray(obs, dtype=float)
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    D = obs.shape[0]
    if paths.shape[1] != D or any(c.weights.shape != (D, D) for c in cfgs):
        raise ValueError("dimension mismatch between obs, paths and weights")
    cache = {}
    out = []
    for cfg in cfgs:
        g = cfg.gamma
        if g not in cache:
            obs_vario = np.abs(obs[:, None] - obs[None, :]) ** g
            cache[g] = (obs_vario - _forecast_variogram(paths, g, chunk)) ** 2
        out.append(float(np.sum(cfg.weights * cache[g])))
    return out


def build_vs_weights(mode: str, dim: int | None = None, correlation=None,
                     positions=None) -> np.ndarray:
    """Weight matrix for the variogram score.

    ``uniform`` needs ``dim``; ``correlation_weighted`` uses the magnitude of
    a historical correlation matrix; ``inverse_distance`` uses
    ``1 / (1 + |x_i - x_j|)`` for node positions (1-D or ``(D, k)``).
    """
    if mode == UNIFORM:
        if dim is None:
            raise ConfigError("uniform VS weights need the dimension")
        return np.ones((dim, dim))
    if mode == CORRELATION:
        if correlation is None:
            raise ConfigError("correlation-weighted VS needs a historical correlation")
        w = np.abs(np.nan_to_num(np.asarray(correlation, dtype=float)))
        return 0.5 * (w + w.T)
    if mode == INVERSE_DISTANCE:
        if positions is None:
            raise ConfigError("inverse-distance VS needs node positions")
        pos = np.asarray(positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        return 1.0 / (1.0 + dist)
    raise ConfigError(f"unknown VS mode {mode!r}")


@dataclass(frozen=True)
class EventSpec:
    """Event over the lead-time window ``[k - h//2, k + h//2]``."""

    kind: str
    k: int
    h: int
    xi: float = 0.2

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ConfigError(f"unknown event kind {self.kind!r}")
        if self.h < 0:
            raise ConfigError("window size must be >= 0")
        if not self.xi > 0:
            raise ConfigError("event threshold xi must be > 0")

    def window(self, hours) -> np.ndarray:
        hours = np.asarray(hours)
        wanted = np.arange(self.k - self.h // 2, self.k + self.h // 2 + 1)
        idx = np.searchsorted(hours, wanted)
        if np.any(idx >= len(hours)) or np.any(hours[np.minimum(idx, len(hours) - 1)] != wanted):
            raise ConfigError(
                f"event window {wanted[0]}..{wanted[-1]} falls outside the horizon "
                f"{hours[0]}..{hours[-1]}")
        return idx


# Event settings used for BS1, BS2 and BS3 in the reported experiments.
DEFAULT_EVENTS = (
    EventSpec(INTERMITTENT, 11, 4, 0.2),
    EventSpec(LONG_LASTING, 11, 2, 0.2),
    EventSpec(GRADIENT, 11, 4, 0.2),
)


def _pc_matrix(proxy, hours, n_zones):
    if isinstance(proxy, np.ndarray):
        pc = np.atleast_2d(proxy.astype(float))
    else:
        proxies = proxy if isinstance(proxy, (list, tuple)) else [proxy]
        pc = np.stack([p.at(hours) for p in proxies])
    if pc.shape != (n_zones, len(hours)):
        raise ValueError(f"proxy shape {pc.shape} does not match ({n_zones}, {len(hours)})")
    return pc


def event_indicator(values, proxy, spec: EventSpec, hours) -> np.ndarray:
    """Event outcome per zone for hourly ``values`` shaped ``(..., Z, H)``.

    ``proxy`` is a :class:`ClearSkyProxy`, a list of them (one per zone), or a
    ``(Z, H)`` array of maximum expected power.
    """
    v = np.asarray(values, dtype=float)
    squeeze = v.ndim == 1
    if squeeze:
        v = v[None, :]
    pc = _pc_matrix(proxy, hours, v.shape[-2])
    win = spec.window(hours)
    delta = (pc - v)[..., win]
    if spec.kind == GRADIENT:
        mag = np.abs(delta)
        out = (mag.max(axis=-1) - mag.min(axis=-1)) >= spec.xi
    else:
        hit = np.abs(delta) >= spec.xi
        out = hit.any(axis=-1) if spec.kind == INTERMITTENT else hit.all(axis=-1)
    out = out.astype(int)
    return out[..., 0] if squeeze else out


def event_probability(hourly_paths, proxy, spec: EventSpec, hours) -> np.ndarray:
    """Share of trajectories (axis 0) predicting the event, per zone."""
    return event_indicator(hourly_paths, proxy, spec, hours).mean(axis=0)


def brier_score(forecast_probs, outcomes) -> float:
    p = np.asarray(forecast_probs, dtype=float)
    o = np.asarray(outcomes, dtype=float)
    if p.shape != o.shape:
        raise ValueError("forecasts and outcomes must have equal length")
    return float(np.mean((p - o) ** 2))


def round_score(value: float, digits: int = 3) -> float:
    return float(np.round(value, digits))


@dataclass
class PitHistogram:
    """PIT tallies of trajectory values against their node marginals.

    Each (node, day) pair contributes a total weight of one, spread over bins
    by the share of its trajectories falling in each.
    """

    bin_edges: np.ndarray
    counts: np.ndarray

    @classmethod
    def empty(cls, bins: int = 20):
        if bins < 2:
            raise ValueError("need at least 2 bins")
        return cls(np.linspace(0, 1, bins + 1), np.zeros(bins))

    @property
    def bins(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.total

    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.fractions - 1.0 / self.bins)))

    def add(self, paths, cdfs, rng=None):
        """Accumulate one trajectory set (``(S, D)`` grid values)."""
        paths = np.atleast_2d(paths)
        rng = np.random.default_rng(0) if rng is None else rng
        S = paths.shape[0]
        stack = as_stack(cdfs)
        if stack is not None:
            hi, lo = stack.evaluate_right(paths), stack.evaluate_left(paths)
        else:
            hi = np.stack([c.evaluate_right(paths[:, d]) for d, c in enumerate(cdfs)], axis=1)
            lo = np.stack([c.evaluate_left(paths[:, d]) for d, c in enumerate(cdfs)], axis=1)
        # randomize inside probability atoms
        u = hi.copy()
        step = hi > lo
        if step.any():
            u[step] = lo[step] + (hi[step] - lo[step]) * rng.uniform(size=step.sum())
        idx = np.clip(np.searchsorted(self.bin_edges, u, side="right") - 1, 0, self.bins - 1)
        self.counts += np.bincount(idx.ravel(), minlength=self.bins) / S
        return self


def pit_histogram(sets, cdfs, bins: int = 20, rng=None) -> PitHistogram:
    """PIT histogram over trajectory sets and their matching node CDF lists."""
    hist = PitHistogram.empty(bins)
    for tset, node_cdfs in zip(sets, cdfs):
        paths = tset.paths if hasattr(tset, "paths") else tset
        hist.add(paths, node_cdfs, rng)
    return hist
