"""Projection of each day's daytime hours onto a fixed-size time grid.

Sunrise and sunset move with the seasons, so the number of daytime hours
varies from day to day. Mapping the daytime window onto ``G`` equally spaced
nodes keeps the copula dimension constant at ``G * Z``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .marginals import PredictiveCdf

DEFAULT_GRID_SIZE = 15
DEFAULT_THRESHOLD = 0.01
NEAREST = "nearest"
QUANTILE_BLEND = "quantile_blend"


class UnusableDayError(DataError):
    pass


@dataclass(frozen=True)
class TimeGridMap:
    """Interpolation weights between one day's clock hours and the grid.

    ``node_index[g]`` and ``node_frac[g]`` place grid node ``g`` at
    ``(1 - frac) * daytime[idx] + frac * daytime[idx + 1]``.
    """

    day_index: int
    zone_id: int
    hours: np.ndarray
    daytime_hours: np.ndarray
    grid_size: int
    node_index: np.ndarray
    node_frac: np.ndarray
    usable: bool = True

    @property
    def n_daytime(self) -> int:
        return len(self.daytime_hours)

    @property
    def daytime_slice(self) -> slice:
        start = int(np.searchsorted(self.hours, self.daytime_hours[0]))
        return slice(start, start + self.n_daytime)

    def node_hours(self) -> np.ndarray:
        """Index into ``hours`` of the hour whose CDF each node borrows.

        The nearer bracketing hour wins; an exact midpoint goes to the earlier.
        """
        nearer = self.node_index + (self.node_frac > 0.5)
        return self.daytime_slice.start + nearer

    def to_dict(self):
        return {"day_index": self.day_index, "zone_id": self.zone_id,
                "hours": self.hours.tolist(), "daytime_hours": self.daytime_hours.tolist(),
                "grid_size": self.grid_size, "node_index": self.node_index.tolist(),
                "node_frac": self.node_frac.tolist(), "usable": self.usable}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["day_index"]), int(d["zone_id"]), np.asarray(d["hours"]),
                   np.asarray(d["daytime_hours"]), int(d["grid_size"]),
                   np.asarray(d["node_index"], dtype=int),
                   np.asarray(d["node_frac"], dtype=float), bool(d["usable"]))


def build_map(day_series, grid_size: int = DEFAULT_GRID_SIZE, hours=None,
              threshold: float = DEFAULT_THRESHOLD, day_index: int = 0,
              zone_id: int = 1) -> TimeGridMap:
    """Build the grid map for one day and zone.

    Daytime runs from the first to the last hour whose value exceeds
    ``threshold``. Days with fewer than two such hours come back with
    ``usable=False``.
    """
    values = np.asarray(day_series, dtype=float)
    hours = np.arange(len(values)) if hours is None else np.asarray(hours)
    if len(hours) != len(values):
        raise ValueError("hours and day_series differ in length")
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    lit = np.flatnonzero(values > threshold)
    if len(lit) < 2:
        return TimeGridMap(day_index, zone_id, hours, hours[lit], grid_size,
                           np.zeros(0, dtype=int), np.zeros(0), usable=False)
    first, last = lit[0], lit[-1]
    daytime = hours[first:last + 1]
    n = len(daytime)
    pos = np.arange(grid_size) * (n - 1) / (grid_size - 1)
    idx = np.minimum(np.floor(pos).astype(int), n - 2)
    frac = pos - idx
    return TimeGridMap(day_index, zone_id, hours, daytime, grid_size, idx, frac)


def _require(map_: TimeGridMap):
    if not map_.usable:
        raise UnusableDayError(
            f"day {map_.day_index} zone {map_.zone_id} has fewer than 2 daytime hours")


def to_grid(values, map_: TimeGridMap) -> np.ndarray:
    """Interpolate hourly values (full day or daytime only) onto the grid.

    Works along the last axis, so a stack of days or trajectories is fine.
    """
    _require(map_)
    v = np.asarray(values, dtype=float)
    if v.shape[-1] == len(map_.hours):
        v = v[..., map_.daytime_slice]
    elif v.shape[-1] != map_.n_daytime:
        raise ValueError("values do not cover the map's daytime hours")
    lo = v[..., map_.node_index]
    hi = v[..., map_.node_index + 1]
    f = map_.node_frac
    out = (1 - f) * lo + f * hi
    # keep nodes that sit on an hour bit-exact
    out = np.where(f == 0, lo, out)
    return np.where(f == 1, hi, out)


def from_grid(grid_values, map_: TimeGridMap) -> np.ndarray:
    """Map grid values back onto every clock hour of the map; night is zero."""
    _require(map_)
    g = np.asarray(grid_values, dtype=float)
    G = map_.grid_size
    if g.shape[-1] != G:
        raise ValueError(f"expected {G} grid values, got {g.shape[-1]}")
    n = map_.n_daytime
    pos = np.arange(n) * (G - 1) / (n - 1)
    idx = np.minimum(np.floor(pos).astype(int), G - 2)
    f = pos - idx
    lo = g[..., idx]
    hi = g[..., idx + 1]
    day = (1 - f) * lo + f * hi
    day = np.where(f == 0, lo, day)
    day = np.where(f == 1, hi, day)
    out = np.zeros(g.shape[:-1] + (len(map_.hours),))
    out[..., map_.daytime_slice] = day
    return out


def grid_cdfs(hour_cdfs, map_: TimeGridMap, rule: str = QUANTILE_BLEND) -> list:
    """Marginal CDF for every grid node from the CDFs of all ``map_.hours``.

    ``quantile_blend`` averages the bracketing hours' quantiles with the
    node's interpolation weight, so a node's CDF matches how its value is
    formed; ``nearest`` borrows the nearer hour's CDF unchanged.
    """
    _require(map_)
    hour_cdfs = list(hour_cdfs)
    if rule == NEAREST:
        return [hour_cdfs[h] for h in map_.node_hours()]
    if rule != QUANTILE_BLEND:
        raise ValueError(f"unknown grid CDF rule {rule!r}")
    start = map_.daytime_slice.start
    out = []
    for idx, f in zip(map_.node_index, map_.node_frac):
        lo, hi = hour_cdfs[start + idx], hour_cdfs[start + idx + 1]
        if f == 0:
            out.append(lo)
        elif f == 1:
            out.append(hi)
        else:
            out.append(PredictiveCdf.from_quantiles(
                lo.levels, (1 - f) * lo.quantiles + f * hi.quantiles,
                (1 - f) * lo.lower_bound + f * hi.lower_bound,
                (1 - f) * lo.upper_bound + f * hi.upper_bound))
    return out
